/**
 * Fitted-curve overlay figure: per-model logistic power, latency and
 * throughput curves from the parameter bundle, over the measured
 * operating points summarized from the benchmark trace CSV.
 */

import { parseCsv } from "./csv.js";
import {
  PALETTE,
  PanelBox,
  esc,
  linearScale,
  niceTicks,
  panelFrame,
  polyline,
  svgDocument,
} from "./svg.js";

export interface LogisticParams {
  max: number;
  k: number;
  x0: number;
  offset: number;
}

export function logistic(p: LogisticParams, x: number): number {
  return p.max / (1 + Math.exp(-p.k * (x - p.x0))) + p.offset;
}

const METRICS = ["power", "latency", "throughput"] as const;
type Metric = (typeof METRICS)[number];

interface BundleModel {
  power: LogisticParams;
  latency: LogisticParams;
  throughput: LogisticParams;
}

export interface TracePoint {
  batch: number;
  power: number;
  latency: number;
  throughput: number;
}

/** Mean power, mean ITL and throughput per (model, batch) from trace rows. */
export function summarizeTraces(csvText: string): Map<string, TracePoint[]> {
  const table = parseCsv(csvText);
  const want = ["model", "batch_size", "record_type", "t_or_index", "value"];
  for (const name of want) {
    if (!table.header.includes(name)) {
      throw new Error(`trace CSV missing column "${name}"; got: ${table.header.join(", ")}`);
    }
  }
  const col = (name: string) => table.header.indexOf(name);
  const acc = new Map<string, { sum: number; n: number }>();
  for (const row of table.rows) {
    const key = `${row[col("model")]}|${row[col("batch_size")]}|${row[col("record_type")]}`;
    const entry = acc.get(key) ?? { sum: 0, n: 0 };
    entry.sum += Number(row[col("value")]);
    entry.n += 1;
    acc.set(key, entry);
  }
  const byModel = new Map<string, Map<number, Partial<TracePoint>>>();
  for (const [key, { sum, n }] of acc) {
    const [model, batchStr, kind] = key.split("|");
    const batch = Number(batchStr);
    const points = byModel.get(model) ?? new Map<number, Partial<TracePoint>>();
    const pt = points.get(batch) ?? { batch };
    if (kind === "power") pt.power = sum / n;
    if (kind === "itl") pt.latency = sum / n;
    if (kind === "throughput") pt.throughput = sum / n;
    points.set(batch, pt);
    byModel.set(model, points);
  }
  const out = new Map<string, TracePoint[]>();
  for (const model of [...byModel.keys()].sort()) {
    const pts = [...byModel.get(model)!.values()]
      .filter((p): p is TracePoint =>
        p.power !== undefined && p.latency !== undefined && p.throughput !== undefined
      )
      .sort((a, b) => a.batch - b.batch);
    out.set(model, pts);
  }
  return out;
}

export function buildFitsSvg(tracesCsv: string, bundleJson: string): string {
  const bundle = JSON.parse(bundleJson) as { models: Record<string, BundleModel> };
  const points = summarizeTraces(tracesCsv);
  const models = Object.keys(bundle.models).sort();
  if (models.length === 0) {
    throw new Error("bundle holds no models");
  }

  const panelW = 210;
  const panelH = 130;
  const ml = 52;
  const mt = 30;
  const gapX = 48;
  const gapY = 40;
  const W = ml + METRICS.length * (panelW + gapX);
  const H = mt + models.length * (panelH + gapY) + 8;

  let body = `<text x="${ml}" y="14" font-size="10" font-weight="600" fill="#222">Calibrated curves over measured operating points</text>\n`;

  models.forEach((model, mi) => {
    const pts = points.get(model) ?? [];
    METRICS.forEach((metric: Metric, ci) => {
      const box: PanelBox = {
        x: ml + ci * (panelW + gapX),
        y: mt + mi * (panelH + gapY),
        w: panelW,
        h: panelH,
      };
      const params = bundle.models[model][metric];
      const xsCurve: number[] = [];
      for (let x = 3; x <= 9.0001; x += 0.05) xsCurve.push(x);
      const ysCurve = xsCurve.map((x) => logistic(params, x));
      const ysPts = pts.map((p) => p[metric]);
      const lo = Math.min(...ysCurve, ...ysPts);
      const hi = Math.max(...ysCurve, ...ysPts);
      const pad = 0.06 * (hi - lo || 1);
      const xScale = linearScale(3, 9, box.x, box.x + box.w);
      const yScale = linearScale(lo - pad, hi + pad, box.y + box.h, box.y);

      body += `<g data-panel="${esc(model)}-${metric}">\n`;
      body += panelFrame(box, yScale, niceTicks(lo - pad, hi + pad, 4), `${model}: ${metric}`, metric);
      body += polyline(xsCurve.map(xScale), ysCurve.map(yScale), {
        stroke: PALETTE[ci],
        "stroke-width": "1.2",
        "data-series": "fit",
      });
      for (const p of pts) {
        const cx = xScale(Math.log2(p.batch));
        const cy = yScale(p[metric]);
        body += `<circle cx="${cx.toFixed(2)}" cy="${cy.toFixed(2)}" r="2" fill="#222" data-point="${p.batch}"/>\n`;
      }
      for (const e of [3, 5, 7, 9]) {
        const x = xScale(e);
        body += `<line x1="${x.toFixed(2)}" y1="${box.y + box.h}" x2="${x.toFixed(2)}" y2="${box.y + box.h + 3}" stroke="#333" stroke-width="0.5"/>\n`;
        body += `<text x="${x.toFixed(2)}" y="${box.y + box.h + 12}" text-anchor="middle" font-size="7" fill="#555">${2 ** e}</text>\n`;
      }
      body += `<text x="${box.x + box.w / 2}" y="${box.y + box.h + 24}" text-anchor="middle" font-size="7.5" fill="#444">batch size</text>\n`;
      body += `</g>\n`;
    });
  });

  return svgDocument(W, H, body);
}
