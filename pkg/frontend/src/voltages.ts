/**
 * Per-phase voltage trajectory figure.
 *
 * One panel per selected phase, one curve per selected bus, dashed
 * horizontal lines at the voltage limits.  excursionStats computes the
 * time spent outside the limits with the same trapezoidal rule the
 * simulator uses, so the figure can be cross-checked against the
 * metrics file of the run that produced the CSV.
 */

import { Table, parseCsv, columnIndex, numericColumn } from "./csv.js";
import {
  PALETTE,
  PanelBox,
  esc,
  linearScale,
  niceTicks,
  panelFrame,
  polyline,
  svgDocument,
  timeAxis,
} from "./svg.js";

export interface VoltagePlotOptions {
  /** Phases to draw, subset of ["a","b","c"]; default all three. */
  phases?: string[];
  /** Bus ids to draw; default every bus present in the header. */
  buses?: string[];
  vLower?: number;
  vUpper?: number;
  title?: string;
}

interface VoltageColumn {
  bus: string;
  phase: string;
  name: string;
}

export function busesInHeader(table: Table): string[] {
  const buses: string[] = [];
  for (const h of table.header) {
    const m = /^v_(.+)_([abc])$/.exec(h);
    if (m && m[2] === "a") buses.push(m[1]);
  }
  return buses;
}

function selectColumns(table: Table, phases: string[], buses: string[]): VoltageColumn[] {
  const cols: VoltageColumn[] = [];
  for (const phase of phases) {
    if (!["a", "b", "c"].includes(phase)) {
      throw new Error(`unknown phase "${phase}"; expected a, b or c`);
    }
    for (const bus of buses) {
      const name = `v_${bus}_${phase}`;
      columnIndex(table, name); // throws with the available-column list
      cols.push({ bus, phase, name });
    }
  }
  return cols;
}

export function buildVoltagesSvg(csvText: string, opts: VoltagePlotOptions = {}): string {
  const table = parseCsv(csvText);
  const phases = opts.phases ?? ["a", "b", "c"];
  const buses = opts.buses ?? busesInHeader(table);
  const vLower = opts.vLower ?? 0.95;
  const vUpper = opts.vUpper ?? 1.05;
  const cols = selectColumns(table, phases, buses);
  const t = numericColumn(table, "t");

  const W = 760;
  const panelH = 150;
  const ml = 56;
  const mt = 30;
  const gap = 34;
  const H = mt + phases.length * (panelH + gap) + 14;
  const xScale = linearScale(t[0], t[t.length - 1], ml, W - 16);

  let body = `<text x="${ml}" y="14" font-size="10" font-weight="600" fill="#222">${esc(
    opts.title ?? "Bus voltages by phase"
  )}</text>\n`;

  phases.forEach((phase, pi) => {
    const box: PanelBox = { x: ml, y: mt + pi * (panelH + gap), w: W - 16 - ml, h: panelH };
    const phaseCols = cols.filter((c) => c.phase === phase);
    const series = phaseCols.map((c) => numericColumn(table, c.name));
    const lo = Math.min(vLower, ...series.map((s) => Math.min(...s))) - 0.003;
    const hi = Math.max(vUpper, ...series.map((s) => Math.max(...s))) + 0.003;
    const yScale = linearScale(lo, hi, box.y + box.h, box.y);

    body += `<g data-panel="phase-${phase}">\n`;
    body += panelFrame(box, yScale, niceTicks(lo, hi, 5), `phase ${phase}`, "voltage (pu)");
    for (const limit of [vLower, vUpper]) {
      const y = yScale(limit);
      body += `<line x1="${box.x}" y1="${y.toFixed(2)}" x2="${box.x + box.w}" y2="${y.toFixed(
        2
      )}" stroke="#d62828" stroke-width="1" stroke-dasharray="6,3" data-limit="${limit}"/>\n`;
    }
    series.forEach((values, si) => {
      body += polyline(t.map(xScale), values.map(yScale), {
        stroke: PALETTE[si % PALETTE.length],
        "stroke-width": "1",
        "data-series": `v_${phaseCols[si].bus}_${phase}`,
      });
    });
    phaseCols.forEach((c, si) => {
      const lx = box.x + box.w - 50;
      const ly = box.y + 8 + si * 9;
      body += `<line x1="${lx}" y1="${ly}" x2="${lx + 12}" y2="${ly}" stroke="${
        PALETTE[si % PALETTE.length]
      }" stroke-width="1.2"/>\n`;
      body += `<text x="${lx + 16}" y="${ly + 2.5}" font-size="6.5" fill="#444">${esc(c.bus)}</text>\n`;
    });
    if (pi === phases.length - 1) {
      body += timeAxis(box, xScale, t[0], t[t.length - 1]);
    }
    body += `</g>\n`;
  });

  return svgDocument(W, H, body);
}

export interface ExcursionStats {
  /** Number of contiguous out-of-limits intervals. */
  segments: number;
  /** Trapezoidal integral of the out-of-limits indicator, in seconds. */
  totalTime: number;
}

export function excursionStats(csvText: string, opts: VoltagePlotOptions = {}): ExcursionStats {
  const table = parseCsv(csvText);
  const phases = opts.phases ?? ["a", "b", "c"];
  const buses = opts.buses ?? busesInHeader(table);
  const vLower = opts.vLower ?? 0.95;
  const vUpper = opts.vUpper ?? 1.05;
  const cols = selectColumns(table, phases, buses);
  const t = numericColumn(table, "t");
  const series = cols.map((c) => numericColumn(table, c.name));

  const out = t.map((_, i) =>
    series.some((s) => s[i] < vLower || s[i] > vUpper) ? 1.0 : 0.0
  );
  let totalTime = 0;
  for (let i = 1; i < t.length; i++) {
    totalTime += 0.5 * (out[i] + out[i - 1]) * (t[i] - t[i - 1]);
  }
  let segments = 0;
  for (let i = 0; i < out.length; i++) {
    if (out[i] === 1.0 && (i === 0 || out[i - 1] === 0.0)) segments++;
  }
  return { segments, totalTime };
}
