import { describe, expect, it } from "vitest";

import { mergeTables, parseResultsCsv, SchemaError } from "../src/schema";

const V1 = `# harvestsim-results v1
experiment_id,policy,arrival_mean,replication,mean_q,mean_delay,verdict,wasted_energy_rate,drop_rate,runtime
fig4,greedy,1.0,0,3.5,3.5,stable,0.0,0.0,1000
fig4,greedy,2.0,0,9.1,4.55,stable,0.0,0.0,1000
fig4,to,1.0,0,6.0,6.0,stable,0.4,0.0,1000
fig4,to,2.0,0,14.0,7.0,stable,0.4,0.0,1000
`;

describe("parseResultsCsv", () => {
  it("reads schema, columns and rows", () => {
    const table = parseResultsCsv(V1);
    expect(table.schema).toBe("harvestsim-results v1");
    expect(table.columns[0]).toBe("experiment_id");
    expect(table.rows).toHaveLength(4);
    expect(table.rows[0].policy).toBe("greedy");
  });

  it("rejects an empty file", () => {
    expect(() => parseResultsCsv("")).toThrow(SchemaError);
  });

  it("rejects a missing or unknown schema line, naming the expected ones", () => {
    expect(() => parseResultsCsv("policy,x\na,1\n")).toThrow(/expected one of/);
    expect(() =>
      parseResultsCsv("# harvestsim-results v99\npolicy\na\n"),
    ).toThrow(/v1/);
  });

  it("rejects a header-only file (no data rows)", () => {
    const lines = V1.split("\n").slice(0, 2).join("\n") + "\n";
    expect(() => parseResultsCsv(lines)).toThrow(/no data rows/);
  });

  it("rejects ragged rows", () => {
    expect(() => parseResultsCsv(V1 + "fig4,to\n")).toThrow(/fields/);
  });
});

describe("mergeTables", () => {
  it("refuses to mix schemas", () => {
    const a = parseResultsCsv(V1);
    const b = parseResultsCsv(
      "# harvestsim-results v1-csma\n" +
        "experiment_id,policy,arrival_mean,replication,mean_delay,loss_probability,collision_rate,airtime,runtime\n" +
        "c,baseline,0.1,0,5,0,0.01,0.4,1000\n",
    );
    expect(() => mergeTables([a, b])).toThrow(SchemaError);
    expect(mergeTables([a, a]).rows).toHaveLength(8);
  });
});
