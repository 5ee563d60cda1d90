#!/usr/bin/env node
/**
 * Figure generation from gridbatch run artifacts.
 *
 * Usage:
 *   gridbatch-plots voltages   --csv run.csv --out fig.svg
 *                              [--buses 611,675] [--phases a,c]
 *                              [--v-lower 0.95] [--v-upper 1.05]
 *   gridbatch-plots controller --csv run.csv --out fig.svg
 *   gridbatch-plots fits       --traces traces.csv --bundle bundle.json --out fig.svg
 *
 * Exit codes: 0 success, 1 bad input or missing column.
 */

import { readFileSync, writeFileSync } from "fs";
import { resolve } from "path";
import { fileURLToPath } from "url";
import { buildControllerSvg } from "./controller.js";
import { buildFitsSvg } from "./fits.js";
import { buildVoltagesSvg } from "./voltages.js";

const USAGE = `usage: gridbatch-plots <figure> [flags]

figures:
  voltages    per-phase bus voltages with dashed limit lines
              --csv PATH --out PATH [--buses B1,B2] [--phases a,b,c]
              [--v-lower F] [--v-upper F]
  controller  batch/throughput/power/ITL panels with regime shading
              --csv PATH --out PATH
  fits        calibrated curves over measured operating points
              --traces PATH --bundle PATH --out PATH
`;

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--")) throw new Error(`expected a --flag, got "${key}"`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`flag ${key} needs a value`);
    flags.set(key.slice(2), value);
  }
  return flags;
}

function required(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (v === undefined) throw new Error(`missing required flag --${name}`);
  return v;
}

export function run(argv: string[]): number {
  if (argv.length === 0 || argv[0] === "--help" || argv[0] === "-h") {
    process.stdout.write(USAGE);
    return 0;
  }
  const [figure, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    let svg: string;
    if (figure === "voltages") {
      const csv = readFileSync(required(flags, "csv"), "utf-8");
      svg = buildVoltagesSvg(csv, {
        buses: flags.get("buses")?.split(","),
        phases: flags.get("phases")?.split(","),
        vLower: flags.has("v-lower") ? Number(flags.get("v-lower")) : undefined,
        vUpper: flags.has("v-upper") ? Number(flags.get("v-upper")) : undefined,
      });
    } else if (figure === "controller") {
      const csv = readFileSync(required(flags, "csv"), "utf-8");
      svg = buildControllerSvg(csv, {});
    } else if (figure === "fits") {
      const traces = readFileSync(required(flags, "traces"), "utf-8");
      const bundle = readFileSync(required(flags, "bundle"), "utf-8");
      svg = buildFitsSvg(traces, bundle);
    } else {
      process.stderr.write(`error: unknown figure "${figure}"\n${USAGE}`);
      return 1;
    }
    const out = required(flags, "out");
    writeFileSync(out, svg);
    process.stdout.write(`wrote ${out}\n`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

const isMain =
  typeof process.argv[1] === "string" &&
  fileURLToPath(import.meta.url) === resolve(process.argv[1]);
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
