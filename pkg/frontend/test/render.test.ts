import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { renderFromSpec, rasterize } from "../src/cli";
import { PlotSpec } from "../src/plotspec";
import { renderSvg } from "../src/render";
import { buildSeries } from "../src/series";
import { parseResultsCsv, SchemaError } from "../src/schema";

function v1Csv(policies: string[], arrivals: number[], reps = 2): string {
  const lines = [
    "# harvestsim-results v1",
    "experiment_id,policy,arrival_mean,replication,mean_q,mean_delay,verdict,wasted_energy_rate,drop_rate,runtime",
  ];
  for (const p of policies) {
    for (const a of arrivals) {
      for (let r = 0; r < reps; r++) {
        // deterministic synthetic surface with a per-replication wiggle
        const q = (policies.indexOf(p) + 1) * a * 2 + r * 0.5;
        lines.push(`e,${p},${a},${r},${q},${q / a},stable,0.0,0.0,1000`);
      }
    }
  }
  return lines.join("\n") + "\n";
}

const SPEC: PlotSpec = {
  input: "results.csv",
  xColumn: "arrival_mean",
  yColumn: "mean_q",
  seriesColumn: "policy",
  referenceLines: [2.01, 2.4],
  output: "out/plot",
};

describe("buildSeries", () => {
  it("averages replications and reports the standard error", () => {
    const table = parseResultsCsv(v1Csv(["greedy"], [1.0]));
    const series = buildSeries(table, SPEC);
    expect(series).toHaveLength(1);
    const p = series[0].points[0];
    expect(p.mean).toBeCloseTo(2.25, 12); // (2.0 + 2.5) / 2
    // sample std of {2.0, 2.5} is 0.3536; stderr over 2 reps is 0.25
    expect(p.stderr).toBeCloseTo(0.25, 12);
    expect(p.n).toBe(2);
  });

  it("errors on a column missing from the schema", () => {
    const table = parseResultsCsv(v1Csv(["greedy"], [1.0]));
    expect(() =>
      buildSeries(table, { ...SPEC, yColumn: "loss_probability" }),
    ).toThrow(SchemaError);
  });
});

describe("renderSvg", () => {
  const policies = ["unbuffered", "greedy", "to", "mto"];
  const table = parseResultsCsv(v1Csv(policies, [0.5, 1.0, 1.5, 2.0]));
  const series = buildSeries(table, SPEC);

  it("draws one polyline per policy and every reference line", () => {
    const svg = renderSvg(series, SPEC);
    expect(svg.match(/class="series"/g)).toHaveLength(4);
    expect(svg.match(/class="reference"/g)).toHaveLength(2);
    for (const p of policies) expect(svg).toContain(`>${p}</text>`);
  });

  it("is byte-identical across repeated renders", () => {
    const a = renderSvg(buildSeries(table, SPEC), SPEC);
    const b = renderSvg(buildSeries(parseResultsCsv(v1Csv(policies, [0.5, 1.0, 1.5, 2.0])), SPEC), SPEC);
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
  });

  it("supports a log y axis", () => {
    const svg = renderSvg(series, { ...SPEC, logY: true });
    expect(svg).toContain("svg");
  });
});

describe("renderFromSpec end to end", () => {
  it("writes svg (and png when the rasterizer is present)", () => {
    const dir = mkdtempSync(join(tmpdir(), "hplot-"));
    writeFileSync(join(dir, "results.csv"), v1Csv(["greedy", "to"], [1, 2]));
    const written = renderFromSpec(SPEC, dir);
    const svg = readFileSync(written[0], "utf8");
    expect(svg.startsWith("<svg")).toBe(true);
    const written2 = renderFromSpec(SPEC, dir);
    expect(readFileSync(written2[0], "utf8")).toBe(svg);
    if (written.length > 1) {
      const png = readFileSync(written[1]);
      expect(png.subarray(1, 4).toString()).toBe("PNG");
    }
  });

  it("refuses to render an empty CSV (no image emitted)", () => {
    const dir = mkdtempSync(join(tmpdir(), "hplot-"));
    writeFileSync(
      join(dir, "results.csv"),
      "# harvestsim-results v1\nexperiment_id,policy,arrival_mean,replication,mean_q,mean_delay,verdict,wasted_energy_rate,drop_rate,runtime\n",
    );
    expect(() => renderFromSpec(SPEC, dir)).toThrow(/no data rows/);
  });
});

describe("rasterizer", () => {
  it("produces a png from a trivial svg when available", () => {
    const png = rasterize('<svg xmlns="http://www.w3.org/2000/svg" width="8" height="8"><rect width="8" height="8" fill="red"/></svg>');
    if (png) expect(png.subarray(1, 4).toString()).toBe("PNG");
  });
});
