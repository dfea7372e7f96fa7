export { parseCsv, column, SchemaError } from "./csv.js";
export {
  renderDiffCurve,
  renderWaitHist,
  renderFactorHist,
} from "./charts.js";
export type { LogNormalFit } from "./charts.js";
export { parseArgs, render, run, UsageError } from "./cli.js";
