/**
 * Row model: the explorer works on one row per measurement, with the
 * entry's structural fields repeated on each of its rows. This mirrors
 * the pipeline's CSV export exactly, so filtering and export both
 * operate on the same flat shape.
 */

import type { DatasetEntry } from "./jsonl.js";

export interface Row {
  /** Stable within one loaded file: doi|material|measurement index. */
  key: string;
  doi: string;
  material: string;
  property: string;
  value: number;
  raw_unit: string;
  canonical_value: number | null;
  canonical_unit: string;
  temperature_k: number | null;
  source: string;
  flags: readonly string[];
  compound_type: string | null;
  crystal_structure: string | null;
  lattice_structure: string | null;
  space_group: string | null;
  doping_type: string | null;
  dopants: readonly string[];
  processing_method: string | null;
  /** The full record behind this row, for the details pane. */
  entry: DatasetEntry;
}

export function expandRows(entries: readonly DatasetEntry[]): Row[] {
  const rows: Row[] = [];
  for (const entry of entries) {
    const s = entry.structure;
    entry.te_properties.forEach((m, i) => {
      rows.push({
        key: `${entry.doi}|${entry.material}|${i}`,
        doi: entry.doi,
        material: entry.material,
        property: m.property,
        value: m.value,
        raw_unit: m.raw_unit,
        canonical_value: m.canonical_value ?? null,
        canonical_unit: m.canonical_unit,
        temperature_k: m.temperature_k ?? null,
        source: m.source,
        flags: m.flags ?? [],
        compound_type: s.compound_type ?? null,
        crystal_structure: s.crystal_structure ?? null,
        lattice_structure: s.lattice_structure ?? null,
        space_group: s.space_group ?? null,
        doping_type: s.doping_type ?? null,
        dopants: s.dopants ?? [],
        processing_method: s.processing_method ?? null,
        entry,
      });
    });
  }
  return rows;
}

export function rowByKey(rows: readonly Row[], key: string): Row | undefined {
  return rows.find((r) => r.key === key);
}

/** Distinct non-null values of one structural column, sorted, for facet menus. */
export function distinctValues(
  rows: readonly Row[],
  column: "compound_type" | "crystal_structure",
): string[] {
  const seen = new Set<string>();
  for (const row of rows) {
    const v = row[column];
    if (v !== null) seen.add(v);
  }
  return [...seen].sort();
}
