#!/usr/bin/env node
/**
 * figures <kind> --in <csv> --out <svg> [--fit <json>] [--title <text>]
 *
 * kinds: diff-curve | wait-hist | factor-hist
 *
 * Reads the CSV files written by the l2pub CLI and writes a deterministic
 * SVG (reruns are byte-identical). factor-hist overlays the fitted
 * log-normal density from the ingest fit JSON (default: fit.json next to
 * the input). Exit codes: 0 ok, 1 usage or schema error, 2 I/O error.
 */

import { readFileSync, writeFileSync, mkdirSync, existsSync } from "fs";
import { dirname, join } from "path";
import {
  LogNormalFit,
  renderDiffCurve,
  renderFactorHist,
  renderWaitHist,
  SchemaError,
} from "./charts.js";

const KINDS = ["diff-curve", "wait-hist", "factor-hist"] as const;
type Kind = (typeof KINDS)[number];

export interface Args {
  kind: Kind;
  input: string;
  output: string;
  fit?: string;
  title?: string;
}

export function parseArgs(argv: string[]): Args {
  if (argv.length === 0) {
    throw new UsageError(`usage: figures <${KINDS.join("|")}> --in <csv> --out <svg>`);
  }
  const [kind, ...rest] = argv;
  if (!(KINDS as readonly string[]).includes(kind)) {
    throw new UsageError(`unknown figure kind '${kind}' (expected ${KINDS.join(", ")})`);
  }
  const flags = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    const val = rest[i + 1];
    if (!key.startsWith("--") || val === undefined) {
      throw new UsageError(`malformed option '${key}'`);
    }
    flags.set(key.slice(2), val);
  }
  const input = flags.get("in");
  const output = flags.get("out");
  if (!input || !output) {
    throw new UsageError("both --in and --out are required");
  }
  return {
    kind: kind as Kind,
    input,
    output,
    fit: flags.get("fit"),
    title: flags.get("title"),
  };
}

export class UsageError extends Error {}

export function render(args: Args): string {
  const csvText = readFileSync(args.input, "utf8");
  switch (args.kind) {
    case "diff-curve":
      return renderDiffCurve(csvText, args.title);
    case "wait-hist":
      return renderWaitHist(csvText, args.title);
    case "factor-hist": {
      const fitPath = args.fit ?? join(dirname(args.input), "fit.json");
      let fit: LogNormalFit | null = null;
      if (args.fit !== undefined || existsSync(fitPath)) {
        fit = JSON.parse(readFileSync(fitPath, "utf8")) as LogNormalFit;
      }
      return renderFactorHist(csvText, fit, args.title);
    }
  }
}

export function run(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const svg = render(args);
    mkdirSync(dirname(args.output), { recursive: true });
    writeFileSync(args.output, svg);
    console.log(`wrote ${args.output}`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError || err instanceof SchemaError) {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    if (err instanceof Error && "code" in err) {
      console.error(`i/o error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(run(process.argv.slice(2)));
}
