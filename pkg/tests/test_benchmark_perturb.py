"""Seeded perturbation fixtures for the benchmark scorer.

Gold values inside one (doi, material, property) group are spaced at
least 20% apart and perturbed values move at most 5%, so every
prediction's fate (match or miss) is decided by construction. The
scorer then has to reproduce the planned TP/FP/FN counts exactly, for
any seed.
"""

import json
import random

import pytest

from thermoharvest.evaluate import benchmark_run
from thermoharvest.records import PROPERTIES


def _num(doi, material, prop, value, temperature):
    rec = {"doi": doi, "material": material, "property": prop, "value": value}
    if temperature is not None:
        rec["temperature_k"] = temperature
    return rec


def _cat(doi, material, field, label):
    return {"doi": doi, "material": material, "field": field, "label": label}


def write_records(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


_NUMERIC_ACTIONS = (
    "exact",       # identical point                       -> TP
    "value_in",    # value * 1.005, inside 1% tolerance    -> TP
    "value_out",   # value * 1.05, outside tolerance       -> FP + FN
    "temp_in",     # temperature + 0.9 K, inside 1 K       -> TP
    "temp_out",    # temperature + 5 K, outside 1 K        -> FP + FN
    "temp_none",   # temperature omitted, gate waived      -> TP
    "drop",        # prediction missing                    -> FN
)

# field, gold label, same-class synonym, different-class label
_FIELD_CASES = (
    ("compound_type", "chalcogenide", "telluride", "oxide"),
    ("compound_type", "half-Heusler", "half Heusler", "skutterudite"),
    ("crystal_structure", "rhombohedral", "trigonal", "cubic"),
    ("doping_type", "p", "p-type", "n"),
    ("doping_type", "undoped", "pristine", "p"),
)

_CAT_ACTIONS = ("keep", "synonym", "wrong", "drop", "spurious")


def build_fixture(seed, n_groups=40):
    """Gold records, perturbed predictions, and the planned counts."""
    rng = random.Random(seed)
    gold, pred = [], []
    exp_props = {p: [0, 0, 0] for p in PROPERTIES}
    exp_fields = {}

    for g in range(n_groups):
        doi = f"10.5555/perturb.{g:03d}"
        material = f"M{g}"
        prop = PROPERTIES[g % len(PROPERTIES)]
        tp, fp, fn = exp_props[prop]

        n_points = rng.randint(1, 4)
        base = rng.uniform(1.0, 10.0)
        for i in range(n_points):
            value = round(base * 1.2**i, 6)
            temp = 300.0 + 50.0 * i
            gold.append(_num(doi, material, prop, value, temp))
            action = rng.choice(_NUMERIC_ACTIONS)
            if action == "exact":
                pred.append(_num(doi, material, prop, value, temp))
                tp += 1
            elif action == "value_in":
                pred.append(_num(doi, material, prop, round(value * 1.005, 6), temp))
                tp += 1
            elif action == "value_out":
                pred.append(_num(doi, material, prop, round(value * 1.05, 6), temp))
                fp += 1
                fn += 1
            elif action == "temp_in":
                pred.append(_num(doi, material, prop, value, temp + 0.9))
                tp += 1
            elif action == "temp_out":
                pred.append(_num(doi, material, prop, value, temp + 5.0))
                fp += 1
                fn += 1
            elif action == "temp_none":
                pred.append(_num(doi, material, prop, value, None))
                tp += 1
            else:
                fn += 1
        if rng.random() < 0.3:
            # Invented point 20% above the group's largest gold value,
            # out of tolerance of every gold point.
            pred.append(_num(doi, material, prop, round(base * 1.2**n_points, 6), 300.0))
            fp += 1

        exp_props[prop] = [tp, fp, fn]

        if rng.random() < 0.6:
            field, gold_label, synonym, wrong = rng.choice(_FIELD_CASES)
            ftp, ffp, ffn = exp_fields.get(field, (0, 0, 0))
            action = rng.choice(_CAT_ACTIONS)
            if action == "spurious":
                pred.append(_cat(doi, material, field, gold_label))
                ffp += 1
            else:
                gold.append(_cat(doi, material, field, gold_label))
                if action == "keep":
                    pred.append(_cat(doi, material, field, gold_label))
                    ftp += 1
                elif action == "synonym":
                    pred.append(_cat(doi, material, field, synonym))
                    ftp += 1
                elif action == "wrong":
                    pred.append(_cat(doi, material, field, wrong))
                    ffp += 1
                    ffn += 1
                else:
                    ffn += 1
            exp_fields[field] = (ftp, ffp, ffn)

    # Scoring must not depend on record order.
    rng.shuffle(gold)
    rng.shuffle(pred)
    return gold, pred, {p: tuple(c) for p, c in exp_props.items()}, exp_fields


@pytest.mark.parametrize("seed", [7, 1234, 20240817])
def test_planned_counts_reproduced_exactly(tmp_path, seed):
    gold, pred, exp_props, exp_fields = build_fixture(seed)
    gold_path = tmp_path / "gold.jsonl"
    pred_path = tmp_path / "pred.jsonl"
    write_records(gold_path, gold)
    write_records(pred_path, pred)

    report = benchmark_run(pred_path, gold_path)
    assert report.schema_errors == []

    for prop, (tp, fp, fn) in exp_props.items():
        if tp + fp + fn == 0:
            assert prop not in report.per_property
            continue
        cell = report.per_property[prop]
        assert (cell["tp"], cell["fp"], cell["fn"]) == (tp, fp, fn), prop

    for field, (tp, fp, fn) in exp_fields.items():
        cell = report.per_field[field]
        assert (cell["tp"], cell["fp"], cell["fn"]) == (tp, fp, fn), field

    micro_tp = sum(c[0] for c in exp_props.values())
    micro_fp = sum(c[1] for c in exp_props.values())
    micro_fn = sum(c[2] for c in exp_props.values())
    assert report.te_micro["precision"] == micro_tp / (micro_tp + micro_fp)
    assert report.te_micro["recall"] == micro_tp / (micro_tp + micro_fn)

    assert report.n_gold_records == len(gold)
    assert report.n_pred_records == len(pred)


def test_identical_files_score_perfectly(tmp_path):
    gold, _, _, _ = build_fixture(99)
    gold_path = tmp_path / "gold.jsonl"
    pred_path = tmp_path / "pred.jsonl"
    write_records(gold_path, gold)
    write_records(pred_path, gold)

    report = benchmark_run(pred_path, gold_path)
    assert report.schema_errors == []
    assert report.te_micro["f1"] == 1.0
    assert report.te_macro["f1"] == 1.0
    assert report.struct_micro["f1"] == 1.0
    for cell in list(report.per_property.values()) + list(report.per_field.values()):
        assert cell["f1"] == 1.0
        assert cell["fp"] == 0
        assert cell["fn"] == 0


def test_matching_never_crosses_doi_or_material(tmp_path):
    gold_path = tmp_path / "gold.jsonl"
    pred_path = tmp_path / "pred.jsonl"
    write_records(gold_path, [_num("10.1/a", "M1", "zt", 1.0, 300.0)])
    write_records(pred_path, [
        _num("10.1/a", "M2", "zt", 1.0, 300.0),   # same doi, other material
        _num("10.2/b", "M1", "zt", 1.0, 300.0),   # other doi, same material
    ])

    report = benchmark_run(pred_path, gold_path)
    cell = report.per_property["zt"]
    assert (cell["tp"], cell["fp"], cell["fn"]) == (0, 2, 1)


def test_malformed_records_reported_not_scored(tmp_path):
    gold_path = tmp_path / "gold.jsonl"
    write_records(gold_path, [
        _num("10.1/a", "M1", "zt", 1.0, 300.0),
        _cat("10.1/a", "M1", "compound_type", "oxide"),
    ])

    pred_lines = [
        json.dumps(_num("10.1/a", "M1", "zt", 1.0, 300.0)),
        json.dumps(_num("10.1/a", "M1", "banana", 1.0, 300.0)),
        json.dumps({"doi": "10.1/a", "material": "M1", "property": "zt"}),
        json.dumps({"doi": "10.1/a", "material": "M1", "property": "zt",
                    "value": 1.0, "temperature_k": "hot"}),
        json.dumps(_cat("10.1/a", "M1", "flavor", "sweet")),
        json.dumps({"doi": "10.1/a", "material": "M1", "field": "compound_type"}),
        json.dumps(_cat("10.1/a", "M1", "compound_type", "oxide")),
        json.dumps(_cat("10.1/a", "M1", "compound_type", "zintl")),  # duplicate key
        "{not json",
        json.dumps({"material": "M1", "value": 1.0}),
        json.dumps({"doi": "10.1/a", "material": "M1", "note": "hi"}),
    ]
    pred_path = tmp_path / "pred.jsonl"
    pred_path.write_text("\n".join(pred_lines) + "\n", encoding="utf-8")

    report = benchmark_run(pred_path, gold_path)
    # Lines 2-6 and 8-11 are malformed (line 8 duplicates line 7's key).
    assert len(report.schema_errors) == 9
    for lineno in (2, 3, 4, 5, 6, 8, 9, 10, 11):
        assert any(err.startswith(f"pred:{lineno}:") for err in report.schema_errors), lineno

    # The well-formed records still score: the numeric point matches and
    # the first compound_type label wins the duplicate.
    assert report.per_property["zt"]["tp"] == 1
    assert report.per_field["compound_type"]["tp"] == 1
