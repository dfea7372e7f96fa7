/** Deterministic SVG chart scaffolding: fixed canvas, stable number formatting. */

export const WIDTH = 800;
export const HEIGHT = 500;
export const MARGIN = { top: 44, right: 28, bottom: 56, left: 78 };

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

/** Shortest stable decimal form (12 significant digits, trailing zeros trimmed). */
export function fmt(v: number): string {
  if (v === 0) return "0";
  if (!Number.isFinite(v)) return String(v);
  const s = v.toPrecision(12);
  return s.includes("e")
    ? String(v)
    : s.replace(/\.?0+$/, "").replace(/(\.\d*?)0+$/, "$1");
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    d0 -= 0.5;
    d1 += 0.5;
  }
  const k = (range[1] - range[0]) / (d1 - d0);
  const scale = ((v: number) => range[0] + (v - d0) * k) as Scale;
  scale.domain = [d0, d1];
  return scale;
}

/** Round tick steps of 1/2/5 x 10^k covering the domain. */
export function ticks(domain: [number, number], count = 6): number[] {
  const [lo, hi] = domain;
  const span = hi - lo;
  if (span <= 0) return [lo];
  const raw = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  const step = (norm >= 5 ? 10 : norm >= 2 ? 5 : norm >= 1 ? 2 : 1) * mag;
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

export function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface Frame {
  x: Scale;
  y: Scale;
  parts: string[];
}

/** Canvas, axes, tick labels and title; returns scales plus the open SVG body. */
export function frame(
  xDomain: [number, number],
  yDomain: [number, number],
  title: string,
  xLabel: string,
  yLabel: string,
): Frame {
  const x = linearScale(xDomain, [MARGIN.left, WIDTH - MARGIN.right]);
  const y = linearScale(yDomain, [HEIGHT - MARGIN.bottom, MARGIN.top]);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(
    `<text x="${WIDTH / 2}" y="26" text-anchor="middle" font-size="17">${esc(title)}</text>`,
  );
  const bottom = HEIGHT - MARGIN.bottom;
  for (const t of ticks(x.domain)) {
    const px = fmt(x(t));
    parts.push(
      `<line x1="${px}" y1="${fmt(bottom)}" x2="${px}" y2="${fmt(bottom + 5)}" stroke="black"/>`,
      `<text x="${px}" y="${fmt(bottom + 20)}" text-anchor="middle" font-size="12">${fmt(t)}</text>`,
    );
  }
  for (const t of ticks(y.domain)) {
    const py = fmt(y(t));
    parts.push(
      `<line x1="${MARGIN.left - 5}" y1="${py}" x2="${MARGIN.left}" y2="${py}" stroke="black"/>`,
      `<text x="${MARGIN.left - 9}" y="${py}" text-anchor="end" dominant-baseline="middle" font-size="12">${fmt(t)}</text>`,
      `<line x1="${MARGIN.left}" y1="${py}" x2="${WIDTH - MARGIN.right}" y2="${py}" stroke="#dddddd"/>`,
    );
  }
  parts.push(
    `<line x1="${MARGIN.left}" y1="${bottom}" x2="${WIDTH - MARGIN.right}" y2="${bottom}" stroke="black"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${bottom}" stroke="black"/>`,
    `<text x="${WIDTH / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="13">${esc(xLabel)}</text>`,
    `<text x="22" y="${HEIGHT / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 22 ${HEIGHT / 2})">${esc(yLabel)}</text>`,
  );
  return { x, y, parts };
}

export function close(f: Frame): string {
  return f.parts.join("\n") + "\n</svg>\n";
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}
