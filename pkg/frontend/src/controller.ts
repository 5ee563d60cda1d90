/**
 * Controller trajectory figure: stacked panels for batch sizes, token
 * throughput, data-center power and per-model ITL over time, with the
 * control regime shaded behind every panel.
 *
 * Shading uses the regime labels emitted by the run (never re-derived
 * here), one tinted band per contiguous stretch of a label.
 */

import { parseCsv, columnsWithPrefix, numericColumn, stringColumn } from "./csv.js";
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

export interface ControllerPlotOptions {
  title?: string;
}

export interface RegimeSegment {
  regime: string;
  t0: number;
  t1: number;
}

export const REGIME_FILL: Record<string, string> = {
  throughput: "#2d6a4f",
  voltage: "#d62828",
  latency: "#f77f00",
};

/** Contiguous runs of identical nonempty labels. */
export function regimeSegments(t: number[], labels: string[]): RegimeSegment[] {
  const segments: RegimeSegment[] = [];
  let current: RegimeSegment | null = null;
  for (let i = 0; i < t.length; i++) {
    const label = labels[i];
    if (label === "") {
      current = null;
      continue;
    }
    if (current !== null && current.regime === label) {
      current.t1 = t[i];
    } else {
      current = { regime: label, t0: t[i], t1: t[i] };
      segments.push(current);
    }
  }
  return segments;
}

export function buildControllerSvg(csvText: string, opts: ControllerPlotOptions = {}): string {
  const table = parseCsv(csvText);
  const t = numericColumn(table, "t");
  const labels = stringColumn(table, "regime");
  const segments = regimeSegments(t, labels);

  const batchCols = columnsWithPrefix(table, "batch_");
  const itlCols = columnsWithPrefix(table, "itl_");
  if (batchCols.length === 0) {
    throw new Error(`no batch_<model> columns in CSV header: ${table.header.join(", ")}`);
  }
  const throughput = numericColumn(table, "throughput");
  const power = ["p_a", "p_b", "p_c"]
    .map((c) => numericColumn(table, c))
    .reduce((acc, col) => acc.map((v, i) => v + col[i] / 1000.0), t.map(() => 0));

  interface Panel {
    title: string;
    yLabel: string;
    series: { name: string; values: number[] }[];
  }
  const panels: Panel[] = [
    {
      title: "batch size per model",
      yLabel: "batch",
      series: batchCols.map((c) => ({ name: c.slice("batch_".length), values: numericColumn(table, c) })),
    },
    {
      title: "aggregate token throughput",
      yLabel: "tokens/s",
      series: [{ name: "throughput", values: throughput }],
    },
    {
      title: "data-center power",
      yLabel: "kW",
      series: [{ name: "total", values: power }],
    },
    {
      title: "mean inter-token latency per model",
      yLabel: "s",
      series: itlCols.map((c) => ({ name: c.slice("itl_".length), values: numericColumn(table, c) })),
    },
  ];

  const W = 760;
  const panelH = 110;
  const ml = 56;
  const mt = 30;
  const gap = 30;
  const H = mt + panels.length * (panelH + gap) + 14;
  const xScale = linearScale(t[0], t[t.length - 1], ml, W - 16);

  let body = `<text x="${ml}" y="14" font-size="10" font-weight="600" fill="#222">${esc(
    opts.title ?? "Controller trajectories with regime shading"
  )}</text>\n`;

  panels.forEach((panel, pi) => {
    const box: PanelBox = { x: ml, y: mt + pi * (panelH + gap), w: W - 16 - ml, h: panelH };
    const all = panel.series.flatMap((s) => s.values);
    const lo = Math.min(...all);
    const hi = Math.max(...all);
    const pad = 0.05 * (hi - lo || 1);
    const yScale = linearScale(lo - pad, hi + pad, box.y + box.h, box.y);

    body += `<g data-panel="${esc(panel.title)}">\n`;
    for (const seg of segments) {
      const x0 = xScale(seg.t0);
      const x1 = xScale(seg.t1);
      body += `<rect x="${x0.toFixed(2)}" y="${box.y}" width="${(x1 - x0).toFixed(
        2
      )}" height="${box.h}" fill="${REGIME_FILL[seg.regime] ?? "#888"}" opacity="0.10" data-regime="${esc(
        seg.regime
      )}"/>\n`;
    }
    body += panelFrame(box, yScale, niceTicks(lo - pad, hi + pad, 4), panel.title, panel.yLabel);
    panel.series.forEach((s, si) => {
      body += polyline(t.map(xScale), s.values.map(yScale), {
        stroke: PALETTE[si % PALETTE.length],
        "stroke-width": "1",
        "data-series": esc(s.name),
      });
    });
    if (panel.series.length > 1) {
      panel.series.forEach((s, si) => {
        const lx = box.x + box.w - 80;
        const ly = box.y + 8 + si * 9;
        body += `<line x1="${lx}" y1="${ly}" x2="${lx + 12}" y2="${ly}" stroke="${
          PALETTE[si % PALETTE.length]
        }" stroke-width="1.2"/>\n`;
        body += `<text x="${lx + 16}" y="${ly + 2.5}" font-size="6.5" fill="#444">${esc(s.name)}</text>\n`;
      });
    }
    if (pi === panels.length - 1) {
      body += timeAxis(box, xScale, t[0], t[t.length - 1]);
    }
    body += `</g>\n`;
  });

  // Regime legend keyed to the labels that actually occur.
  const present = [...new Set(segments.map((s) => s.regime))];
  present.forEach((regime, i) => {
    const lx = W - 16 - 90;
    const ly = 10 + i * 10;
    body += `<rect x="${lx}" y="${ly - 6}" width="10" height="7" fill="${
      REGIME_FILL[regime] ?? "#888"
    }" opacity="0.25"/>\n`;
    body += `<text x="${lx + 14}" y="${ly}" font-size="7" fill="#444">${esc(regime)}</text>\n`;
  });

  return svgDocument(W, H, body);
}
