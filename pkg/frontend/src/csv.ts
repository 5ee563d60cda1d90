/**
 * Minimal CSV access for gridbatch run records.
 *
 * Files are machine-written (no quoting, no embedded commas), so a
 * straight split is exact.  Column lookups fail loudly with the list
 * of available names so a typo in a bus or model filter is actionable.
 */

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const lines = text.trim().split("\n");
  if (lines.length === 0 || lines[0].trim() === "") {
    throw new Error("empty CSV: no header row");
  }
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== header.length) {
      throw new Error(
        `row ${i + 1} has ${cells.length} cells, header has ${header.length}`
      );
    }
    return cells;
  });
  return { header, rows };
}

export function columnIndex(table: Table, name: string): number {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new Error(
      `column "${name}" not found in CSV header; available: ${table.header.join(", ")}`
    );
  }
  return idx;
}

export function numericColumn(table: Table, name: string): number[] {
  const idx = columnIndex(table, name);
  return table.rows.map((r) => {
    const v = Number(r[idx]);
    if (Number.isNaN(v)) {
      throw new Error(`column "${name}" holds non-numeric value "${r[idx]}"`);
    }
    return v;
  });
}

export function stringColumn(table: Table, name: string): string[] {
  const idx = columnIndex(table, name);
  return table.rows.map((r) => r[idx]);
}

/** Header names matching a prefix, e.g. "batch_" -> batch_<model> columns. */
export function columnsWithPrefix(table: Table, prefix: string): string[] {
  return table.header.filter((h) => h.startsWith(prefix));
}
