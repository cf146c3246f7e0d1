/**
 * Filter state and its application to measurement rows.
 *
 * All active filters compose conjunctively. Numeric ranges act per
 * measurement: an active ZT range keeps only zt rows whose canonical
 * value lies inside it, so rows of other properties, and rows whose
 * unit could not be normalized (no canonical value), are excluded by
 * that filter. Raw-only values still appear in the details pane; they
 * are just not range-filterable. Bounds are inclusive; a missing bound
 * leaves that side open.
 *
 * Filtering is pure over the loaded snapshot: the same state on the
 * same rows always yields the same subset, and adding a filter never
 * enlarges the result.
 */

import { CSV_COLUMNS, type CsvColumn } from "./csv.js";
import type { Row } from "./rows.js";

export interface NumericRange {
  min: number | null;
  max: number | null;
}

export interface FilterState {
  /** Case-insensitive substring of the material name; "" is inactive. */
  material: string;
  /** Exact structural labels; "" is inactive. */
  compoundType: string;
  crystalStructure: string;
  zt: NumericRange;
  sigma: NumericRange;
  kappa: NumericRange;
  columns: ReadonlySet<CsvColumn>;
  selectedKey: string | null;
}

export const RANGE_PROPERTIES = {
  zt: "zt",
  sigma: "electrical_conductivity",
  kappa: "thermal_conductivity",
} as const;

export type RangeName = keyof typeof RANGE_PROPERTIES;

export function emptyRange(): NumericRange {
  return { min: null, max: null };
}

export function emptyFilterState(): FilterState {
  return {
    material: "",
    compoundType: "",
    crystalStructure: "",
    zt: emptyRange(),
    sigma: emptyRange(),
    kappa: emptyRange(),
    columns: new Set(CSV_COLUMNS),
    selectedKey: null,
  };
}

export function rangeActive(r: NumericRange): boolean {
  return r.min !== null || r.max !== null;
}

/** Human-readable invariant violations; empty list means the state is usable. */
export function filterStateErrors(f: FilterState): string[] {
  const errors: string[] = [];
  for (const name of Object.keys(RANGE_PROPERTIES) as RangeName[]) {
    const { min, max } = f[name];
    if (min !== null && !Number.isFinite(min)) {
      errors.push(`${name} min is not a number`);
    }
    if (max !== null && !Number.isFinite(max)) {
      errors.push(`${name} max is not a number`);
    }
    if (min !== null && max !== null && min > max) {
      errors.push(`${name} range is empty (min ${min} > max ${max})`);
    }
  }
  return errors;
}

function inRange(value: number, r: NumericRange): boolean {
  if (r.min !== null && value < r.min) return false;
  if (r.max !== null && value > r.max) return false;
  return true;
}

function rowPasses(row: Row, f: FilterState, needle: string): boolean {
  if (needle && !row.material.toLowerCase().includes(needle)) return false;
  if (f.compoundType && row.compound_type !== f.compoundType) return false;
  if (f.crystalStructure && row.crystal_structure !== f.crystalStructure) {
    return false;
  }
  for (const name of Object.keys(RANGE_PROPERTIES) as RangeName[]) {
    const range = f[name];
    if (!rangeActive(range)) continue;
    if (row.property !== RANGE_PROPERTIES[name]) return false;
    if (row.canonical_value === null) return false;
    if (!inRange(row.canonical_value, range)) return false;
  }
  return true;
}

export function applyFilters(rows: readonly Row[], f: FilterState): Row[] {
  const errors = filterStateErrors(f);
  if (errors.length) {
    throw new Error(`invalid filter state: ${errors.join("; ")}`);
  }
  const needle = f.material.trim().toLowerCase();
  return rows.filter((row) => rowPasses(row, f, needle));
}
