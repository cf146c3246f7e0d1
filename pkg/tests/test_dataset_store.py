"""Dataset persistence, number formatting, CSV export, and statistics."""

import json
import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoharvest.dataset_store import (
    CSV_COLUMNS,
    Dataset,
    Manifest,
    bench_records,
    binned_zt_vs_temperature,
    build_histogram,
    coverage_stats,
    distribution_stats,
    format_number,
    quartile_exclusive,
    top_categories,
    write_bench_records,
)
from thermoharvest.errors import ManifestMismatch
from thermoharvest.evaluate import load_ontology
from thermoharvest.records import (
    PROPERTIES,
    NormalizedEntry,
    PropertyMeasurement,
    StructureRecord,
)


def meas(prop="zt", value=1.2, t=700.0, source="text", canonical=None,
         unit="", flags=()):
    return PropertyMeasurement(
        property=prop, value=value, raw_unit=unit, canonical_value=canonical,
        canonical_unit="" if canonical is None else "x",
        temperature_k=t, source=source, flags=flags,
    )


def entry(doi="10.1/a", material="PbTe", measurements=None, structure=None,
          provenance=None):
    return NormalizedEntry(
        doi=doi, material=material,
        te_properties=list(measurements or [meas()]),
        structure=structure or StructureRecord(),
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------------------
# Number formatting (JavaScript String(n) semantics)

FORMAT_CASES = [
    (0.0, "0"),
    (-0.0, "0"),
    (1.0, "1"),
    (-1.0, "-1"),
    (300.0, "300"),
    (1.5, "1.5"),
    (0.1, "0.1"),
    (1234.5678, "1234.5678"),
    (1e20, "100000000000000000000"),
    (1e21, "1e+21"),
    (5e22, "5e+22"),
    (6.02e23, "6.02e+23"),
    (0.000001, "0.000001"),
    (3e-05, "0.00003"),
    (1e-7, "1e-7"),
    (-2.5e-7, "-2.5e-7"),
    (1e100, "1e+100"),
    (2.2250738585072014e-308, "2.2250738585072014e-308"),
    (123456.789, "123456.789"),
    (0.5, "0.5"),
]


@pytest.mark.parametrize("value,expected", FORMAT_CASES)
def test_format_number(value, expected):
    assert format_number(value) == expected


def test_format_number_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(ValueError):
            format_number(bad)


@given(st.floats(allow_nan=False, allow_infinity=False))
@settings(max_examples=500, deadline=None)
def test_format_number_round_trips(value):
    assert float(format_number(value)) == value


@given(st.floats(min_value=-1e15, max_value=1e15, allow_nan=False))
@settings(max_examples=300, deadline=None)
def test_format_number_never_uses_python_exponent_quirks(value):
    text = format_number(value)
    # ECMAScript exponents always carry an explicit sign and no leading zeros
    if "e" in text:
        mantissa, exponent = text.split("e")
        assert exponent[0] in "+-"
        assert not exponent[1:].startswith("0")
        assert mantissa not in ("", "-")


# ---------------------------------------------------------------------------
# Manifest and persistence


def test_manifest_round_trip():
    m = Manifest(created_at="2025-01-01T00:00:00+00:00", model="mock-mini",
                 pattern_checksum="abc", unit_rules_version="2024.1",
                 template_hashes={"teprop": "123"})
    assert Manifest.from_dict(m.to_dict()) == m
    assert m.to_dict()["kind"] == "manifest"


def test_save_then_load_then_save_is_byte_identical(tmp_path):
    ds = Dataset(Manifest(model="mock-mini", unit_rules_version="2024.1"))
    ds.upsert(entry("10.1/a", "PbTe", [meas("seebeck", 120.0, 300.0, unit="μV/K")]))
    ds.upsert(entry("10.1/a", "Bi2Te3", [meas("zt", 1.2, 700.0)]))
    ds.upsert(entry("10.0/z", "SnSe", [meas("zt", 2.3, 800.0)]))
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    ds.save(first)
    loaded = Dataset.load(first)
    loaded.save(second)
    assert first.read_bytes() == second.read_bytes()
    lines = first.read_text(encoding="utf-8").splitlines()
    assert json.loads(lines[0])["kind"] == "manifest"
    assert len(lines) == 4
    # keys are sorted, unicode units are kept readable
    assert json.loads(lines[1])["doi"] == "10.0/z"
    assert "μV/K" in lines[3]


def test_loaded_dataset_preserves_entries(tmp_path):
    ds = Dataset()
    source = entry("10.1/a", "PbTe",
                   [meas("seebeck", 120.0, 300.0, canonical=120.0, unit="uV/K")],
                   structure=StructureRecord(doping_type="p", dopants=("Na",)))
    ds.upsert(source)
    path = tmp_path / "d.jsonl"
    ds.save(path)
    loaded = Dataset.load(path)
    got = loaded.get("10.1/a", "pbte")
    assert got is not None
    assert got.te_properties == source.te_properties
    assert got.structure.dopants == ("Na",)


# ---------------------------------------------------------------------------
# Upsert semantics


def test_upsert_inserts_and_counts():
    ds = Dataset()
    ds.upsert(entry("10.1/a", "PbTe"))
    ds.upsert(entry("10.1/a", "SnSe"))
    assert ds.entry_count == 2
    assert ds.measurement_count == 2
    assert [e.material for e in ds.entries()] == ["PbTe", "SnSe"]


def test_upsert_merges_same_key_with_text_precedence():
    ds = Dataset()
    ds.upsert(entry("10.1/a", "PbTe", [meas("zt", 1.2, 700.0)]))
    ds.upsert(entry("10.1/a", "pbte", [meas("zt", 1.5, 700.0, source="table"),
                                       meas("seebeck", 120.0, 300.0, source="table")]))
    assert ds.entry_count == 1
    got = ds.get("10.1/a", "PbTe")
    zts = [m for m in got.te_properties if m.property == "zt"]
    assert [m.value for m in zts] == [1.2]
    assert "merge_conflict" in zts[0].flags
    assert {m.property for m in got.te_properties} == {"zt", "seebeck"}


def test_upsert_is_idempotent(tmp_path):
    ds = Dataset()
    e = entry("10.1/a", "PbTe", [meas("zt", 1.2, 700.0)])
    ds.upsert(e)
    before = tmp_path / "before.jsonl"
    ds.save(before)
    ds.upsert(entry("10.1/a", "PbTe", [meas("zt", 1.2, 700.0)]))
    after = tmp_path / "after.jsonl"
    ds.save(after)
    assert before.read_bytes() == after.read_bytes()


def test_strict_mode_rejects_foreign_provenance():
    ds = Dataset(Manifest(model="mock-mini"), strict=True)
    ds.upsert(entry(provenance={"model": "mock-mini"}))
    with pytest.raises(ManifestMismatch):
        ds.upsert(entry("10.9/z", "SnSe", provenance={"model": "other-model"}))
    # non-strict datasets accept mixed provenance
    relaxed = Dataset(Manifest(model="mock-mini"))
    relaxed.upsert(entry("10.9/z", "SnSe", provenance={"model": "other-model"}))
    assert relaxed.entry_count == 1


def test_upsert_drops_entry_when_merge_leaves_nothing():
    ds = Dataset()
    ds.upsert(NormalizedEntry(doi="10.1/a", material="PbTe"))
    assert ds.entry_count == 1
    ds.upsert(NormalizedEntry(doi="10.1/a", material="PbTe"))
    assert ds.entry_count == 0


# ---------------------------------------------------------------------------
# CSV export


def test_csv_export_exact_bytes(tmp_path):
    ds = Dataset()
    ds.upsert(entry(
        "10.1/a", "PbTe",
        [meas("seebeck", 120.0, 300.0, canonical=120.0, unit="uV/K"),
         meas("zt", 1.2, None)],
        structure=StructureRecord(compound_type="chalcogenide", space_group="Fm-3m",
                                  doping_type="p", dopants=("Na", "K")),
    ))
    path = tmp_path / "d.csv"
    text = ds.to_csv(path)
    assert path.read_text(encoding="utf-8") == text
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == ("10.1/a,PbTe,seebeck,120,uV/K,120,x,300,text,,"
                        "chalcogenide,,,Fm-3m,p,Na;K,")
    assert lines[2] == ("10.1/a,PbTe,zt,1.2,,,,,text,,"
                        "chalcogenide,,,Fm-3m,p,Na;K,")
    assert len(lines) == 3


def test_csv_rows_follow_entry_order():
    ds = Dataset()
    ds.upsert(entry("10.2/b", "B", [meas("zt", 1.0, 300.0)]))
    ds.upsert(entry("10.1/a", "A", [meas("zt", 2.0, 300.0)]))
    lines = ds.to_csv().splitlines()
    assert lines[1].startswith("10.1/a,A,")
    assert lines[2].startswith("10.2/b,B,")


def test_csv_predicate_filters_entries():
    ds = Dataset()
    ds.upsert(entry("10.1/a", "A", [meas("zt", 0.4, 300.0)]))
    ds.upsert(entry("10.1/a", "B", [meas("zt", 1.4, 300.0)]))
    text = ds.to_csv(predicate=lambda e: any(
        m.property == "zt" and m.best_value() >= 1.0 for m in e.te_properties
    ))
    lines = text.splitlines()
    assert len(lines) == 2
    assert ",B," in lines[1]


# ---------------------------------------------------------------------------
# Benchmark records


def test_bench_records_flatten_measurements_and_structure(tmp_path):
    ds = Dataset()
    ds.upsert(entry(
        "10.1/a", "PbTe",
        [meas("zt", 1.2, 700.0, canonical=1.2),
         meas("seebeck", 9.9, None, flags=("unknown_unit",))],
        structure=StructureRecord(compound_type="chalcogenide", doping_type="p"),
    ))
    records = bench_records(ds)
    numeric = [r for r in records if "property" in r]
    categorical = [r for r in records if "field" in r]
    assert numeric == [{"doi": "10.1/a", "material": "PbTe", "property": "zt",
                        "value": 1.2, "temperature_k": 700.0}]
    assert {(r["field"], r["label"]) for r in categorical} == {
        ("compound_type", "chalcogenide"), ("doping_type", "p")
    }
    path = tmp_path / "bench.jsonl"
    assert write_bench_records(ds, path) == 3
    assert len(path.read_text().splitlines()) == 3


# ---------------------------------------------------------------------------
# Histogram


def test_histogram_counts_by_hand():
    got = build_histogram([0.0, 1.0, 2.0, 3.0, 4.0], n_bins=4)
    assert got["counts"] == [1, 1, 1, 2]  # max lands in the last bin
    assert got["edges"][0] == 0.0
    assert got["edges"][-1] == 4.0
    assert got["excluded"] == 0


def test_histogram_log_scale_excludes_nonpositive():
    got = build_histogram([10.0, 100.0, 0.0, -5.0], n_bins=2, scale="log10")
    assert got["excluded"] == 2
    assert sum(got["counts"]) == 2
    assert got["edges"][0] == 1.0  # log10(10)


def test_histogram_degenerate_and_empty():
    assert build_histogram([], n_bins=4) == {
        "scale": "linear", "edges": [], "counts": [], "excluded": 0
    }
    got = build_histogram([2.0, 2.0, 2.0], n_bins=4)
    assert got["edges"] == [2.0, 2.0]
    assert got["counts"] == [3]


def test_histogram_unknown_scale():
    with pytest.raises(ValueError):
        build_histogram([1.0], scale="log2")


# ---------------------------------------------------------------------------
# Quartiles: the exclusive method matches numpy's weibull rule


def test_quartile_exclusive_matches_numpy_weibull():
    rng = random.Random(7)
    for _ in range(100):
        values = sorted(rng.uniform(-50, 50) for _ in range(rng.randrange(1, 40)))
        for p in (0.1, 0.25, 0.5, 0.75, 0.9):
            want = float(np.quantile(values, p, method="weibull"))
            got = quartile_exclusive(values, p)
            assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)


def test_quartile_exclusive_clamps_to_ends():
    assert quartile_exclusive([5.0], 0.25) == 5.0
    assert quartile_exclusive([1.0, 2.0], 0.9) == 2.0
    assert quartile_exclusive([1.0, 2.0], 0.1) == 1.0
    with pytest.raises(ValueError):
        quartile_exclusive([], 0.5)


# ---------------------------------------------------------------------------
# Randomized oracle: stats against independent brute force

MATERIALS = ("PbTe", "SnSe", "Bi2Te3", "Mg2Si", "ZrNiSn", "SnTe")
# fixed points of the label keying, so Counter sees the same strings
COMPOUNDS = (None, "chalcogenide", "oxide", "telluride", "clathrate", "zintl")
DOPINGS = (None, "p", "n", "undoped", "mixed")


def random_dataset(rng: random.Random) -> Dataset:
    ds = Dataset()
    for i in range(rng.randrange(1, 12)):
        measurements = []
        for _ in range(rng.randrange(0, 7)):
            prop = rng.choice(PROPERTIES)
            value = rng.uniform(-200.0, 200.0)
            t = None if rng.random() < 0.2 else rng.uniform(250.0, 950.0)
            measurements.append(meas(prop, value, t, canonical=value,
                                     source=rng.choice(("text", "table"))))
        doping = rng.choice(DOPINGS)
        structure = StructureRecord(
            compound_type=rng.choice(COMPOUNDS),
            doping_type=doping,
            space_group=rng.choice((None, "Fm-3m", "Pnma")),
            dopants=("Na",) if doping == "p" and rng.random() < 0.5 else (),
        )
        ds.upsert(entry(f"10.{rng.randrange(1, 4)}/art{i}",
                        rng.choice(MATERIALS) + str(i),
                        measurements or [meas("zt", rng.uniform(0.1, 2.0), 300.0)],
                        structure=structure))
    return ds


def brute_property_values(ds: Dataset, prop: str) -> list[float]:
    return [
        m.best_value()
        for e in ds.entries()
        for m in e.te_properties
        if m.property == prop and "unknown_unit" not in m.flags
    ]


def test_statistics_match_brute_force_on_200_random_datasets():
    rng = random.Random(20240817)
    for round_index in range(200):
        ds = random_dataset(rng)

        # distribution stats per property
        for prop in PROPERTIES:
            values = brute_property_values(ds, prop)
            summary = distribution_stats(ds, prop)
            if not values:
                assert summary is None
                continue
            assert summary.count == len(values)
            assert math.isclose(summary.mean, float(np.mean(values)), rel_tol=1e-9)
            assert math.isclose(summary.median, float(np.median(values)),
                                rel_tol=1e-12, abs_tol=1e-12)
            assert math.isclose(summary.std, float(np.std(values)),
                                rel_tol=1e-9, abs_tol=1e-12)
            assert summary.minimum == min(values)
            assert summary.maximum == max(values)
            hist = summary.histogram
            assert sum(hist["counts"]) + hist["excluded"] == len(values)

        # coverage
        cov = coverage_stats(ds)
        n = ds.entry_count
        assert cov["entries"] == n
        for prop in PROPERTIES:
            have = sum(
                1 for e in ds.entries()
                if any(m.property == prop for m in e.te_properties)
            )
            assert cov["te_properties"][prop]["entries"] == have
            assert cov["te_properties"][prop]["coverage"] == have / n
        doped = sum(1 for e in ds.entries() if e.structure.dopants)
        assert cov["structure"]["dopants"]["entries"] == doped

        # top-k categories against a Counter with the same tie rule
        counter = Counter(
            e.structure.compound_type for e in ds.entries()
            if e.structure.compound_type is not None
        )
        want = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
        assert top_categories(ds, "compound_type", k=3) == want

        # binned ZT medians and IQR against numpy
        for row in binned_zt_vs_temperature(ds, bin_width_k=100.0):
            values = sorted(
                m.best_value()
                for e in ds.entries()
                for m in e.te_properties
                if m.property == "zt" and m.temperature_k is not None
                and row["t_low"] <= m.temperature_k < row["t_high"]
            )
            assert row["n"] == len(values)
            assert math.isclose(row["median"], float(np.median(values)),
                                rel_tol=1e-12)
            assert math.isclose(row["q1"],
                                float(np.quantile(values, 0.25, method="weibull")),
                                rel_tol=1e-9, abs_tol=1e-12)
            assert math.isclose(row["q3"],
                                float(np.quantile(values, 0.75, method="weibull")),
                                rel_tol=1e-9, abs_tol=1e-12)
            assert row["low_support"] == (len(values) < 3)


def test_doping_type_ordering_at_scale():
    ds = Dataset()
    for i in range(3207):
        ds.upsert(entry(f"10.1/p{i}", f"M{i}",
                        structure=StructureRecord(doping_type="p")))
    for i in range(2911):
        ds.upsert(entry(f"10.1/n{i}", f"N{i}",
                        structure=StructureRecord(doping_type="n")))
    assert top_categories(ds, "doping_type", k=2) == [("p", 3207), ("n", 2911)]


# ---------------------------------------------------------------------------
# Category normalization and ZT bins


def test_top_categories_normalize_through_ontology():
    ontology = load_ontology()
    ds = Dataset()
    ds.upsert(entry("10.1/a", "A",
                    structure=StructureRecord(compound_type="telluride")))
    ds.upsert(entry("10.1/b", "B",
                    structure=StructureRecord(compound_type="chalcogenide")))
    ds.upsert(entry("10.1/c", "C",
                    structure=StructureRecord(compound_type="oxide")))
    assert top_categories(ds, "compound_type", ontology=ontology) == [
        ("chalcogenide", 2), ("oxide", 1)
    ]
    # without the ontology the spellings stay distinct
    assert top_categories(ds, "compound_type") == [
        ("chalcogenide", 1), ("oxide", 1), ("telluride", 1)
    ]


def test_top_categories_counts_dopants_individually():
    ds = Dataset()
    ds.upsert(entry("10.1/a", "A",
                    structure=StructureRecord(doping_type="p", dopants=("Na", "K"))))
    ds.upsert(entry("10.1/b", "B",
                    structure=StructureRecord(doping_type="p", dopants=("Na",))))
    assert top_categories(ds, "dopants") == [("na", 2), ("k", 1)]


def test_zt_bins_filter_by_compound_and_doping():
    ontology = load_ontology()
    ds = Dataset()
    ds.upsert(entry("10.1/a", "A", [meas("zt", 1.0, 310.0)],
                    structure=StructureRecord(compound_type="telluride",
                                              doping_type="p")))
    ds.upsert(entry("10.1/b", "B", [meas("zt", 2.0, 320.0)],
                    structure=StructureRecord(compound_type="chalcogenide",
                                              doping_type="n")))
    ds.upsert(entry("10.1/c", "C", [meas("zt", 3.0, 330.0)],
                    structure=StructureRecord(compound_type="oxide",
                                              doping_type="p")))
    all_rows = binned_zt_vs_temperature(ds, bin_width_k=50.0)
    assert len(all_rows) == 1 and all_rows[0]["n"] == 3
    assert all_rows[0]["t_low"] == 300.0 and all_rows[0]["t_high"] == 350.0
    assert all_rows[0]["low_support"] is False
    chalc = binned_zt_vs_temperature(ds, bin_width_k=50.0,
                                     compound_type="chalcogenide",
                                     ontology=ontology)
    assert chalc[0]["n"] == 2  # telluride folds into chalcogenide
    p_only = binned_zt_vs_temperature(ds, bin_width_k=50.0, doping="p")
    assert p_only[0]["n"] == 2
    assert binned_zt_vs_temperature(ds, bin_width_k=50.0, n_min=4)[0]["low_support"]


def test_zt_bins_skip_unresolved_temperatures():
    ds = Dataset()
    ds.upsert(entry("10.1/a", "A", [meas("zt", 1.0, None),
                                    meas("zt", 1.1, 400.0)]))
    rows = binned_zt_vs_temperature(ds, bin_width_k=50.0)
    assert len(rows) == 1
    assert rows[0]["n"] == 1


def test_conductivity_view_feeds_distribution_stats():
    from thermoharvest.records import ConductivityPoint

    ds = Dataset()
    e = entry("10.1/a", "SnTe",
              [meas("electrical_conductivity", 5.0e4, 300.0, canonical=5.0e4)])
    e.conductivity_view = [ConductivityPoint(5.0e4, 300.0, "sigma")]
    ds.upsert(e)
    summary = distribution_stats(ds, "conductivity")
    assert summary.count == 1
    assert summary.mean == 5.0e4
