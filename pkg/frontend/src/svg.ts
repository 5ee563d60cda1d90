/**
 * Deterministic SVG primitives shared by the figure builders.
 *
 * No drawing library: charts are assembled from lines, polylines,
 * rects and text so identical inputs give byte-identical output.
 */

export interface Scale {
  (v: number): number;
}

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

export function niceTicks(min: number, max: number, count: number): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 0.01; v += step) ticks.push(v);
  return ticks;
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1000) return v.toFixed(0);
  if (a >= 10) return String(Math.round(v * 100) / 100);
  if (a >= 0.01) return String(Math.round(v * 1000) / 1000);
  return v.toExponential(1);
}

export function polyline(
  xs: number[],
  ys: number[],
  attrs: Record<string, string>
): string {
  const pts = xs.map((x, i) => `${x.toFixed(2)},${ys[i].toFixed(2)}`).join(" ");
  const a = Object.entries(attrs)
    .map(([k, v]) => `${k}="${v}"`)
    .join(" ");
  return `<polyline fill="none" ${a} points="${pts}"/>\n`;
}

export const PALETTE = [
  "#4361ee",
  "#e63946",
  "#2d6a4f",
  "#f77f00",
  "#7209b7",
  "#118ab2",
  "#b5838d",
  "#6a994e",
  "#9d4edd",
  "#bc6c25",
];

export interface PanelBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Axes frame, horizontal grid, y ticks and a title for one panel. */
export function panelFrame(
  box: PanelBox,
  yScale: Scale,
  yTicks: number[],
  title: string,
  yLabel: string
): string {
  let s = "";
  for (const v of yTicks) {
    const y = yScale(v);
    s += `<line x1="${box.x}" y1="${y.toFixed(2)}" x2="${box.x + box.w}" y2="${y.toFixed(2)}" stroke="#eee" stroke-width="0.5"/>\n`;
    s += `<text x="${box.x - 5}" y="${(y + 2.5).toFixed(2)}" text-anchor="end" font-size="7" fill="#555">${esc(fmtTick(v))}</text>\n`;
  }
  s += `<line x1="${box.x}" y1="${box.y}" x2="${box.x}" y2="${box.y + box.h}" stroke="#333" stroke-width="0.7"/>\n`;
  s += `<line x1="${box.x}" y1="${box.y + box.h}" x2="${box.x + box.w}" y2="${box.y + box.h}" stroke="#333" stroke-width="0.7"/>\n`;
  s += `<text x="${box.x}" y="${box.y - 4}" font-size="8" font-weight="600" fill="#222">${esc(title)}</text>\n`;
  s += `<text x="12" y="${box.y + box.h / 2}" text-anchor="middle" font-size="7.5" fill="#444" transform="rotate(-90,12,${box.y + box.h / 2})">${esc(yLabel)}</text>\n`;
  return s;
}

/** Bottom time axis with ticks in seconds. */
export function timeAxis(box: PanelBox, xScale: Scale, tMin: number, tMax: number): string {
  let s = "";
  for (const t of niceTicks(tMin, tMax, 8)) {
    const x = xScale(t);
    s += `<line x1="${x.toFixed(2)}" y1="${box.y + box.h}" x2="${x.toFixed(2)}" y2="${box.y + box.h + 3}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${x.toFixed(2)}" y="${box.y + box.h + 12}" text-anchor="middle" font-size="7" fill="#555">${esc(fmtTick(t))}</text>\n`;
  }
  s += `<text x="${box.x + box.w / 2}" y="${box.y + box.h + 24}" text-anchor="middle" font-size="8" fill="#444">time (s)</text>\n`;
  return s;
}

export function svgDocument(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${width}" height="${height}" fill="#fff"/>\n` +
    body +
    `</svg>\n`
  );
}
