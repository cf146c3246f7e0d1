import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  applyFilters,
  emptyFilterState,
  filterStateErrors,
  type FilterState,
} from "../src/filters.js";
import { parseDataset } from "../src/jsonl.js";
import { expandRows, type Row } from "../src/rows.js";

const GOLDEN = readFileSync(
  fileURLToPath(new URL("./fixtures/golden_dataset.jsonl", import.meta.url)),
  "utf-8",
);
const rows = expandRows(parseDataset(GOLDEN).entries);

function withState(mutate: (f: FilterState) => void): FilterState {
  const f = emptyFilterState();
  mutate(f);
  return f;
}

describe("applyFilters", () => {
  it("is the identity when nothing is active", () => {
    expect(applyFilters(rows, emptyFilterState())).toEqual(rows);
  });

  it("matches material substrings case-insensitively", () => {
    const hits = applyFilters(rows, withState((f) => (f.material = "pbte")));
    expect(hits).toHaveLength(2);
    expect(new Set(hits.map((r) => r.material))).toEqual(new Set(["PbTe"]));
    const te = applyFilters(rows, withState((f) => (f.material = "Te")));
    expect(new Set(te.map((r) => r.material))).toEqual(
      new Set(["Bi2Te3", "PbTe", "SnTe"]),
    );
  });

  it("matches structural labels exactly", () => {
    const tellurides = applyFilters(rows, withState((f) => (f.compoundType = "telluride")));
    expect(tellurides.map((r) => r.material)).toEqual(["Bi2Te3", "Bi2Te3"]);
    const rhombo = applyFilters(
      rows,
      withState((f) => (f.crystalStructure = "rhombohedral")),
    );
    expect(rhombo).toHaveLength(2);
    // a label the dataset never uses selects nothing, not everything
    expect(applyFilters(rows, withState((f) => (f.compoundType = "boride")))).toEqual([]);
  });

  it("applies numeric ranges per measurement with inclusive bounds", () => {
    const high = applyFilters(rows, withState((f) => (f.zt.min = 1.2)));
    expect(high.map((r) => [r.material, r.canonical_value])).toEqual([
      ["Bi2Te3", 1.2],
      ["SnSe", 2.3],
    ]);
    const low = applyFilters(rows, withState((f) => (f.zt.max = 0.8)));
    expect(low.map((r) => r.canonical_value)).toEqual([0.5, 0.8, 0.7]);
    const band = applyFilters(
      rows,
      withState((f) => {
        f.zt.min = 0.6;
        f.zt.max = 1.3;
      }),
    );
    expect(band.map((r) => r.canonical_value)).toEqual([0.8, 1.2, 0.7]);
    const sigma = applyFilters(rows, withState((f) => (f.sigma.min = 10000)));
    expect(sigma.map((r) => [r.material, r.property])).toEqual([
      ["SnTe", "electrical_conductivity"],
    ]);
  });

  it("excludes rows without a canonical value from active ranges", () => {
    const unknownUnit: Row = {
      ...rows.find((r) => r.property === "zt")!,
      key: "synthetic|X|0",
      canonical_value: null,
      flags: ["unknown_unit"],
    };
    const all = [...rows, unknownUnit];
    expect(applyFilters(all, emptyFilterState())).toContain(unknownUnit);
    const filtered = applyFilters(all, withState((f) => (f.zt.min = 0)));
    expect(filtered).not.toContain(unknownUnit);
  });

  it("composes filters conjunctively", () => {
    const both = applyFilters(
      rows,
      withState((f) => {
        f.material = "PbTe";
        f.kappa.max = 3.0;
      }),
    );
    expect(both.map((r) => [r.material, r.property, r.canonical_value])).toEqual([
      ["PbTe", "thermal_conductivity", 2.3],
    ]);
    const none = applyFilters(
      rows,
      withState((f) => {
        f.material = "PbTe";
        f.kappa.max = 1.0;
      }),
    );
    expect(none).toEqual([]);
  });

  it("never enlarges the result when a filter is added", () => {
    const base = withState((f) => (f.material = "Te"));
    const baseRows = new Set(applyFilters(rows, base));
    const narrower = [
      withState((f) => {
        f.material = "Te";
        f.zt.min = 0.1;
      }),
      withState((f) => {
        f.material = "Te";
        f.compoundType = "telluride";
      }),
      withState((f) => {
        f.material = "Te";
        f.crystalStructure = "rhombohedral";
        f.kappa.max = 5;
      }),
    ];
    for (const state of narrower) {
      for (const row of applyFilters(rows, state)) {
        expect(baseRows.has(row)).toBe(true);
      }
    }
  });

  it("is pure: the same state yields the same subset", () => {
    const state = withState((f) => {
      f.material = "sn";
      f.zt.min = 0.5;
    });
    expect(applyFilters(rows, state)).toEqual(applyFilters(rows, state));
  });

  it("rejects an empty range instead of silently matching nothing", () => {
    const bad = withState((f) => {
      f.zt.min = 2;
      f.zt.max = 1;
    });
    expect(filterStateErrors(bad)).toEqual(["zt range is empty (min 2 > max 1)"]);
    expect(() => applyFilters(rows, bad)).toThrow(/invalid filter state/);
    expect(filterStateErrors(emptyFilterState())).toEqual([]);
  });
});
