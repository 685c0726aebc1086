import { readdirSync, readFileSync } from "fs";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { validateSpec, SpecError } from "../src/plotspec";

const SPEC_DIR = join(__dirname, "..", "specs");

describe("bundled plot specs", () => {
  const files = readdirSync(SPEC_DIR).filter((f) => f.endsWith(".json"));

  it("covers every bundled experiment", () => {
    const names = files.map((f) => f.replace(/(-loss)?\.json$/, ""));
    for (const exp of ["fig2", "fig3", "fig4", "fig7", "fig8", "orth3",
                       "csma10"]) {
      expect(names).toContain(exp);
    }
  });

  it("all validate and reference the right columns", () => {
    for (const f of files) {
      const spec = validateSpec(
        JSON.parse(readFileSync(join(SPEC_DIR, f), "utf8")), f);
      expect(spec.xColumn).toBe("arrival_mean");
      expect(spec.seriesColumn).toBe("policy");
    }
  });

  it("fig4 and fig8 carry their analytic stability bounds", () => {
    const fig4 = JSON.parse(readFileSync(join(SPEC_DIR, "fig4.json"), "utf8"));
    expect(fig4.referenceLines).toEqual([2.01, 2.4]);
    const fig8 = JSON.parse(readFileSync(join(SPEC_DIR, "fig8.json"), "utf8"));
    expect(fig8.referenceLines).toEqual([0.62, 0.64, 0.7]);
  });
});

describe("spec validation", () => {
  it("rejects specs missing required fields", () => {
    expect(() => validateSpec({ input: "x.csv" })).toThrow(SpecError);
    expect(() => validateSpec([1, 2])).toThrow(SpecError);
  });

  it("rejects non-numeric reference lines", () => {
    expect(() =>
      validateSpec({
        input: "x.csv", xColumn: "a", yColumn: "b", seriesColumn: "c",
        output: "o", referenceLines: ["2.4"],
      }),
    ).toThrow(/referenceLines/);
  });
});
