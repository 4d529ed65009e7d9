/** Minimal SVG string builder: scales, shapes, and text. */

export interface Scale {
  (value: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  scale.domain = domain;
  scale.range = range;
  return scale;
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const fmt = (x: number) => (Number.isFinite(x) ? x.toFixed(2) : "0");

export function rect(
  x: number,
  y: number,
  width: number,
  height: number,
  fill: string,
  extra = "",
): string {
  return `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(Math.max(width, 0))}" height="${fmt(
    Math.max(height, 0),
  )}" fill="${fill}" ${extra}/>`;
}

export function line(
  x1: number,
  y1: number,
  x2: number,
  y2: number,
  stroke: string,
  width = 1,
): string {
  return `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"/>`;
}

export function polyline(points: Array<[number, number]>, stroke: string, width = 1.5): string {
  const path = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
  return `<polyline points="${path}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`;
}

export function text(
  x: number,
  y: number,
  content: string,
  options: { size?: number; fill?: string; cls?: string; data?: Record<string, string>; anchor?: string } = {},
): string {
  const size = options.size ?? 11;
  const fill = options.fill ?? "#222";
  const cls = options.cls ? ` class="${options.cls}"` : "";
  const anchor = options.anchor ? ` text-anchor="${options.anchor}"` : "";
  const data = Object.entries(options.data ?? {})
    .map(([key, value]) => ` data-${key}="${escapeXml(value)}"`)
    .join("");
  return `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" fill="${fill}"${cls}${anchor}${data}>${escapeXml(content)}</text>`;
}

export function document(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    ...body,
    "</svg>",
  ].join("\n");
}

/** Horizontal axis with tick labels. */
export function xAxis(scale: Scale, y: number, ticks: number[]): string[] {
  const parts = [line(scale.range[0], y, scale.range[1], y, "#444")];
  for (const t of ticks) {
    const x = scale(t);
    parts.push(line(x, y, x, y + 4, "#444"));
    parts.push(text(x, y + 15, String(Number(t.toFixed(3))), { size: 10, anchor: "middle" }));
  }
  return parts;
}

/** Vertical axis with tick labels. */
export function yAxis(scale: Scale, x: number, ticks: number[]): string[] {
  const parts = [line(x, scale.range[0], x, scale.range[1], "#444")];
  for (const t of ticks) {
    const y = scale(t);
    parts.push(line(x - 4, y, x, y, "#444"));
    parts.push(text(x - 7, y + 3, String(Number(t.toFixed(3))), { size: 10, anchor: "end" }));
  }
  return parts;
}

export function niceTicks(lo: number, hi: number, target = 6): number[] {
  const span = hi - lo || 1;
  const step = Math.pow(10, Math.floor(Math.log10(span / target)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= target) ?? 10 * step;
  const start = Math.ceil(lo / chosen) * chosen;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12; v += chosen) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}
