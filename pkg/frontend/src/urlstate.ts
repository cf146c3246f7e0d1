/**
 * Shareable views: FilterState round-trips through URL query
 * parameters. Inactive filters are omitted, the column list is omitted
 * when every column is visible, and unknown or unparseable parameters
 * decode to the inactive default rather than failing, so a stale or
 * hand-edited link still opens.
 */

import { CSV_COLUMNS, type CsvColumn } from "./csv.js";
import {
  emptyFilterState,
  RANGE_PROPERTIES,
  type FilterState,
  type NumericRange,
  type RangeName,
} from "./filters.js";

const RANGE_NAMES = Object.keys(RANGE_PROPERTIES) as RangeName[];
const COLUMN_SET: ReadonlySet<string> = new Set(CSV_COLUMNS);

export function encodeFilterState(f: FilterState): string {
  const params = new URLSearchParams();
  if (f.material.trim()) params.set("material", f.material.trim());
  if (f.compoundType) params.set("compound_type", f.compoundType);
  if (f.crystalStructure) params.set("crystal_structure", f.crystalStructure);
  for (const name of RANGE_NAMES) {
    const { min, max } = f[name];
    if (min !== null) params.set(`${name}_min`, String(min));
    if (max !== null) params.set(`${name}_max`, String(max));
  }
  if (f.columns.size !== CSV_COLUMNS.length) {
    params.set("cols", CSV_COLUMNS.filter((c) => f.columns.has(c)).join(","));
  }
  if (f.selectedKey !== null) params.set("sel", f.selectedKey);
  return params.toString();
}

function decodeBound(params: URLSearchParams, key: string): number | null {
  const raw = params.get(key);
  if (raw === null || raw.trim() === "") return null;
  const n = Number(raw);
  return Number.isFinite(n) ? n : null;
}

export function decodeFilterState(query: string): FilterState {
  const params = new URLSearchParams(query);
  const f = emptyFilterState();
  f.material = params.get("material") ?? "";
  f.compoundType = params.get("compound_type") ?? "";
  f.crystalStructure = params.get("crystal_structure") ?? "";
  for (const name of RANGE_NAMES) {
    const range: NumericRange = f[name];
    range.min = decodeBound(params, `${name}_min`);
    range.max = decodeBound(params, `${name}_max`);
  }
  const cols = params.get("cols");
  if (cols !== null) {
    const wanted = cols.split(",").filter((c) => COLUMN_SET.has(c));
    f.columns = new Set(wanted as CsvColumn[]);
  }
  f.selectedKey = params.get("sel");
  return f;
}
