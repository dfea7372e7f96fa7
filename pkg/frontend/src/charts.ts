import { column, parseCsv, SchemaError, Table } from "./csv.js";
import { close, extent, fmt, frame } from "./svg.js";

export interface LogNormalFit {
  mu_hat: number;
  sigma_hat: number;
  count?: number;
}

/** step vs mean cumulative cost difference, with a dashed zero line. */
export function renderDiffCurve(csvText: string, title = "Cumulative cost difference"): string {
  const table = parseCsv(csvText);
  const steps = column(table, "step");
  const diffs = column(table, "mean_cumulative_diff");
  const [dLo, dHi] = extent(diffs);
  const f = frame(
    extent(steps),
    [Math.min(dLo, 0), Math.max(dHi, 0)],
    title,
    "step",
    "mean cumulative difference",
  );
  if (0 >= f.y.domain[0] && 0 <= f.y.domain[1]) {
    const y0 = fmt(f.y(0));
    f.parts.push(
      `<line x1="${fmt(f.x(f.x.domain[0]))}" y1="${y0}" x2="${fmt(f.x(f.x.domain[1]))}" y2="${y0}" stroke="#999999" stroke-dasharray="4 3"/>`,
    );
  }
  const points = steps.map((s, i) => `${fmt(f.x(s))},${fmt(f.y(diffs[i]))}`).join(" ");
  f.parts.push(
    `<polyline class="series" points="${points}" fill="none" stroke="#1f5fa8" stroke-width="1.6"/>`,
  );
  return close(f);
}

interface Bin {
  x0: number;
  x1: number;
  count: number;
}

function binIntegers(values: number[], maxBars = 60): Bin[] {
  const [, hi] = extent(values);
  const width = Math.max(1, Math.ceil((hi + 1) / maxBars));
  const n = Math.floor(hi / width) + 1;
  const bins: Bin[] = [];
  for (let i = 0; i < n; i++) {
    bins.push({ x0: i * width - 0.5, x1: (i + 1) * width - 0.5, count: 0 });
  }
  for (const v of values) {
    bins[Math.floor(v / width)].count += 1;
  }
  return bins;
}

function binReals(values: number[], nBins: number): Bin[] {
  let [lo, hi] = extent(values);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const width = (hi - lo) / nBins;
  const bins: Bin[] = [];
  for (let i = 0; i < nBins; i++) {
    bins.push({ x0: lo + i * width, x1: lo + (i + 1) * width, count: 0 });
  }
  for (const v of values) {
    const i = Math.min(nBins - 1, Math.floor((v - lo) / width));
    bins[i].count += 1;
  }
  return bins;
}

function drawBars(f: ReturnType<typeof frame>, bins: Bin[], fill: string): void {
  const base = f.y(0);
  for (const b of bins) {
    if (b.count === 0) continue;
    const x0 = f.x(b.x0);
    const x1 = f.x(b.x1);
    const top = f.y(b.count);
    f.parts.push(
      `<rect class="bar" x="${fmt(x0)}" y="${fmt(top)}" width="${fmt(x1 - x0)}" height="${fmt(base - top)}" fill="${fill}" stroke="white" stroke-width="0.5"/>`,
    );
  }
}

/** Histogram of per-episode maximal waiting times from an episodes CSV. */
export function renderWaitHist(csvText: string, title = "Maximal waiting time distribution"): string {
  const table = parseCsv(csvText);
  const waits = column(table, "max_wait");
  const bins = binIntegers(waits);
  const f = frame(
    [bins[0].x0, bins[bins.length - 1].x1],
    [0, Math.max(...bins.map((b) => b.count))],
    title,
    "maximal wait (steps)",
    "episodes",
  );
  drawBars(f, bins, "#2a7f4f");
  return close(f);
}

/** Price-factor histogram with the fitted log-normal density overlaid. */
export function renderFactorHist(
  csvText: string,
  fit: LogNormalFit | null,
  title = "Price factor distribution",
): string {
  const table = parseCsv(csvText);
  const factors = column(table, "factor");
  const nBins = Math.max(8, Math.min(40, Math.ceil(Math.sqrt(factors.length))));
  const bins = binReals(factors, nBins);
  const binWidth = bins[0].x1 - bins[0].x0;
  let yMax = Math.max(...bins.map((b) => b.count));

  let curve: Array<[number, number]> = [];
  if (fit && fit.sigma_hat > 0) {
    const { mu_hat: mu, sigma_hat: sigma } = fit;
    const scale = factors.length * binWidth;
    const [lo, hi] = [bins[0].x0, bins[bins.length - 1].x1];
    const n = 160;
    for (let i = 0; i <= n; i++) {
      const x = lo + ((hi - lo) * i) / n;
      if (x <= 0) continue;
      const z = (Math.log(x) - mu) / sigma;
      const pdf = Math.exp(-0.5 * z * z) / (x * sigma * Math.sqrt(2 * Math.PI));
      curve.push([x, pdf * scale]);
      if (pdf * scale > yMax) yMax = pdf * scale;
    }
  }

  const f = frame(
    [bins[0].x0, bins[bins.length - 1].x1],
    [0, yMax],
    title,
    "per-step price factor",
    "count",
  );
  drawBars(f, bins, "#b06020");
  if (curve.length > 0) {
    const points = curve.map(([x, y]) => `${fmt(f.x(x))},${fmt(f.y(y))}`).join(" ");
    f.parts.push(
      `<polyline class="fit" points="${points}" fill="none" stroke="#1f5fa8" stroke-width="1.8"/>`,
    );
  }
  return close(f);
}

export { SchemaError };
export type { Table };
