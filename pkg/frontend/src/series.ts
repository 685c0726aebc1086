/**
 * Turn result rows into plottable series: one line per policy, replication
 * runs at the same x averaged with a standard-error bar.
 */

import { PlotSpec } from "./plotspec";
import { ResultTable, SchemaError } from "./schema";

export interface SeriesPoint {
  x: number;
  mean: number;
  stderr: number;
  n: number;
}

export interface Series {
  label: string;
  points: SeriesPoint[];
}

export function buildSeries(table: ResultTable, spec: PlotSpec): Series[] {
  for (const col of [spec.xColumn, spec.yColumn, spec.seriesColumn]) {
    if (!table.columns.includes(col)) {
      throw new SchemaError(
        `column "${col}" not in schema ${table.schema} ` +
          `(have: ${table.columns.join(", ")})`,
      );
    }
  }
  const groups = new Map<string, Map<number, number[]>>();
  for (const row of table.rows) {
    const label = row[spec.seriesColumn];
    const x = Number(row[spec.xColumn]);
    const y = Number(row[spec.yColumn]);
    if (!Number.isFinite(x) || !Number.isFinite(y)) continue;
    if (!groups.has(label)) groups.set(label, new Map());
    const byX = groups.get(label)!;
    if (!byX.has(x)) byX.set(x, []);
    byX.get(x)!.push(y);
  }
  const series: Series[] = [];
  for (const [label, byX] of groups) {
    const points = [...byX.entries()]
      .map(([x, ys]) => {
        const mean = ys.reduce((a, b) => a + b, 0) / ys.length;
        let stderr = 0;
        if (ys.length > 1) {
          const varSum = ys.reduce((a, b) => a + (b - mean) * (b - mean), 0);
          stderr = Math.sqrt(varSum / (ys.length - 1) / ys.length);
        }
        return { x, mean, stderr, n: ys.length };
      })
      .sort((a, b) => a.x - b.x);
    series.push({ label, points });
  }
  // keep first-appearance order of policies for a stable legend
  const order = new Map<string, number>();
  table.rows.forEach((row) => {
    const label = row[spec.seriesColumn];
    if (!order.has(label)) order.set(label, order.size);
  });
  series.sort((a, b) => order.get(a.label)! - order.get(b.label)!);
  return series;
}
