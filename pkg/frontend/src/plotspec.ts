/** Plot description files: which CSV columns to draw and how. */

import { readFileSync } from "fs";

export interface PlotSpec {
  input: string | string[];
  xColumn: string;
  yColumn: string;
  seriesColumn: string;
  xLabel?: string;
  yLabel?: string;
  title?: string;
  /** dashed vertical markers, e.g. analytic stability bounds */
  referenceLines?: number[];
  logY?: boolean;
  /** output path without extension; .svg and .png are appended */
  output: string;
}

export class SpecError extends Error {}

const REQUIRED: (keyof PlotSpec)[] = [
  "input",
  "xColumn",
  "yColumn",
  "seriesColumn",
  "output",
];

export function loadSpec(path: string): PlotSpec {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf8"));
  } catch (e) {
    throw new SpecError(`${path}: ${(e as Error).message}`);
  }
  return validateSpec(raw, path);
}

export function validateSpec(raw: unknown, source = "<spec>"): PlotSpec {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new SpecError(`${source}: spec must be a JSON object`);
  }
  const spec = raw as Record<string, unknown>;
  for (const key of REQUIRED) {
    if (!(key in spec)) {
      throw new SpecError(`${source}: missing required field "${key}"`);
    }
  }
  if (spec.referenceLines !== undefined) {
    const refs = spec.referenceLines;
    if (!Array.isArray(refs) || refs.some((r) => typeof r !== "number")) {
      throw new SpecError(`${source}: referenceLines must be numbers`);
    }
  }
  return spec as unknown as PlotSpec;
}
