/**
 * CSV export matching the pipeline's column contract byte for byte.
 *
 * The pipeline renders numbers with ECMAScript Number-to-string
 * semantics precisely so that this side can use the native formatter:
 * String(x) here and the pipeline's formatter must agree on every
 * finite double. Quoting follows the same minimal rule as its writer
 * (quote only when a field contains a delimiter, a quote, or a line
 * break; double embedded quotes), and rows end with "\n".
 */

import type { Row } from "./rows.js";

export const CSV_COLUMNS = [
  "doi",
  "material",
  "property",
  "value",
  "raw_unit",
  "canonical_value",
  "canonical_unit",
  "temperature_k",
  "source",
  "flags",
  "compound_type",
  "crystal_structure",
  "lattice_structure",
  "space_group",
  "doping_type",
  "dopants",
  "processing_method",
] as const;

export type CsvColumn = (typeof CSV_COLUMNS)[number];

export function formatNumber(x: number): string {
  if (!Number.isFinite(x)) {
    throw new RangeError(`cannot format ${x}`);
  }
  return String(x);
}

/** Visible-column selection in contract order, whatever order the set was built in. */
export function visibleColumns(visible: ReadonlySet<CsvColumn>): CsvColumn[] {
  return CSV_COLUMNS.filter((c) => visible.has(c));
}

export function cellText(row: Row, column: CsvColumn): string {
  switch (column) {
    case "value":
      return formatNumber(row.value);
    case "canonical_value":
      return row.canonical_value === null ? "" : formatNumber(row.canonical_value);
    case "temperature_k":
      return row.temperature_k === null ? "" : formatNumber(row.temperature_k);
    case "flags":
      return row.flags.join(";");
    case "dopants":
      return row.dopants.join(";");
    case "compound_type":
    case "crystal_structure":
    case "lattice_structure":
    case "space_group":
    case "doping_type":
    case "processing_method":
      return row[column] ?? "";
    default:
      return row[column];
  }
}

function csvField(text: string): string {
  if (/[",\n\r]/.test(text)) {
    return '"' + text.replaceAll('"', '""') + '"';
  }
  return text;
}

export function toCsv(rows: readonly Row[], columns: readonly CsvColumn[]): string {
  const lines: string[] = [columns.map(csvField).join(",")];
  for (const row of rows) {
    lines.push(columns.map((c) => csvField(cellText(row, c))).join(","));
  }
  return lines.join("\n") + "\n";
}
