#!/usr/bin/env node
/**
 * harvestsim-plot <spec.json> [more specs...]
 *
 * Reads the plot spec(s), loads the referenced result CSVs, and writes the
 * chart as .svg plus .png next to the configured output path.  Rendering
 * is deterministic: identical CSVs yield byte-identical SVGs.
 */

import { mkdirSync, writeFileSync } from "fs";
import { dirname, resolve } from "path";

import { loadSpec, PlotSpec, SpecError } from "./plotspec";
import { renderSvg } from "./render";
import { buildSeries } from "./series";
import { mergeTables, readResultsCsv, SchemaError } from "./schema";

export function renderSpecFile(specPath: string): string[] {
  const spec = loadSpec(specPath);
  return renderFromSpec(spec, dirname(resolve(specPath)));
}

export function renderFromSpec(spec: PlotSpec, baseDir: string): string[] {
  const inputs = Array.isArray(spec.input) ? spec.input : [spec.input];
  const tables = inputs.map((p) => readResultsCsv(resolve(baseDir, p)));
  const table = mergeTables(tables);
  const series = buildSeries(table, spec);
  const svg = renderSvg(series, spec);

  const outBase = resolve(baseDir, spec.output);
  mkdirSync(dirname(outBase), { recursive: true });
  const written: string[] = [];
  const svgPath = `${outBase}.svg`;
  writeFileSync(svgPath, svg);
  written.push(svgPath);

  const png = rasterize(svg);
  if (png) {
    const pngPath = `${outBase}.png`;
    writeFileSync(pngPath, png);
    written.push(pngPath);
  }
  return written;
}

export function rasterize(svg: string): Buffer | null {
  try {
    // eslint-disable-next-line @typescript-eslint/no-var-requires
    const { Resvg } = require("@resvg/resvg-js");
    return Buffer.from(new Resvg(svg).render().asPng());
  } catch {
    return null; // rasterizer not installed; SVG output stands alone
  }
}

function main(argv: string[]): number {
  if (argv.length === 0) {
    console.error("usage: harvestsim-plot <spec.json> [more specs...]");
    return 2;
  }
  try {
    for (const specPath of argv) {
      for (const path of renderSpecFile(specPath)) {
        console.log(`wrote ${path}`);
      }
    }
  } catch (e) {
    if (e instanceof SchemaError || e instanceof SpecError) {
      console.error(`error: ${e.message}`);
      return 2;
    }
    throw e;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
