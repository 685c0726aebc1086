/**
 * Versioned result-CSV reader.
 *
 * Files start with a schema comment line ("# harvestsim-results v1" or
 * "... v1-csma") followed by a header row.  Fields never contain commas,
 * so a line split is a full parse.
 */

import { readFileSync } from "fs";

export const KNOWN_SCHEMAS = [
  "harvestsim-results v1",
  "harvestsim-results v1-csma",
];

export interface ResultTable {
  schema: string;
  columns: string[];
  rows: Record<string, string>[];
}

export class SchemaError extends Error {}

export function parseResultsCsv(text: string, source = "<csv>"): ResultTable {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty file`);
  }
  const first = lines[0];
  if (!first.startsWith("# ")) {
    throw new SchemaError(
      `${source}: missing schema line; expected one of ${KNOWN_SCHEMAS.join(", ")}`,
    );
  }
  const schema = first.slice(2).trim();
  if (!KNOWN_SCHEMAS.includes(schema)) {
    throw new SchemaError(
      `${source}: unknown schema "${schema}"; expected one of ${KNOWN_SCHEMAS.join(", ")}`,
    );
  }
  if (lines.length < 2) {
    throw new SchemaError(`${source}: missing header row`);
  }
  const columns = lines[1].split(",");
  const rows: Record<string, string>[] = [];
  for (const line of lines.slice(2)) {
    const parts = line.split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(
        `${source}: row has ${parts.length} fields, header has ${columns.length}`,
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((c, i) => (row[c] = parts[i]));
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new SchemaError(`${source}: no data rows`);
  }
  return { schema, columns, rows };
}

export function readResultsCsv(path: string): ResultTable {
  return parseResultsCsv(readFileSync(path, "utf8"), path);
}

/** Concatenate tables, insisting on a single schema. */
export function mergeTables(tables: ResultTable[]): ResultTable {
  const schema = tables[0].schema;
  for (const t of tables) {
    if (t.schema !== schema) {
      throw new SchemaError(
        `cannot merge schemas "${t.schema}" and "${schema}"`,
      );
    }
  }
  return {
    schema,
    columns: tables[0].columns,
    rows: tables.flatMap((t) => t.rows),
  };
}
