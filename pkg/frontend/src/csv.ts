export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  rows: number[][];
}

/** Parse a simple numeric CSV with a header row (no quoting, no escapes). */
export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty CSV");
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(`row ${i}: expected ${columns.length} fields, got ${parts.length}`);
    }
    const row = parts.map((p) => Number(p));
    if (row.some((v) => Number.isNaN(v))) {
      throw new SchemaError(`row ${i}: non-numeric value in ${JSON.stringify(lines[i])}`);
    }
    rows.push(row);
  }
  return { columns, rows };
}

/** Column values by name; throws naming the column when missing. */
export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(
      `missing column '${name}' (found: ${table.columns.join(", ")})`,
    );
  }
  return table.rows.map((r) => r[idx]);
}
