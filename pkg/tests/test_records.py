"""Domain record types: validation, aliases, keys, round trips."""

import pytest

from thermoharvest.records import (
    CANONICAL_UNITS,
    PROPERTIES,
    ConductivityPoint,
    ExtractionEntry,
    MaterialCandidate,
    NormalizedEntry,
    PropertyMeasurement,
    StructureRecord,
    canonical_doping_label,
    canonical_property,
    material_key,
)


# ---------------------------------------------------------------------------
# Property aliases and doping labels


@pytest.mark.parametrize("raw, expected", [
    ("ZT", "zt"),
    ("figure of merit", "zt"),
    ("Seebeck Coefficient", "seebeck"),
    ("thermopower", "seebeck"),
    ("S", "seebeck"),
    ("sigma", "electrical_conductivity"),
    (" conductivity ", "electrical_conductivity"),
    ("rho", "electrical_resistivity"),
    ("PF", "power_factor"),
    ("kappa", "thermal_conductivity"),
    ("thermal conductivity", "thermal_conductivity"),
    ("hall mobility", None),
    ("", None),
])
def test_canonical_property(raw, expected):
    assert canonical_property(raw) == expected


def test_every_property_has_a_canonical_unit():
    assert set(CANONICAL_UNITS) == set(PROPERTIES)


@pytest.mark.parametrize("raw, expected", [
    ("p", "p"),
    ("P-Type", "p"),
    ("p_type", "p"),
    ("hole", "p"),
    ("n type", "n"),
    ("donor", "n"),
    ("compensated", "mixed"),
    ("ambipolar", "mixed"),
    ("p+n", "mixed"),
    ("pristine", "undoped"),
    ("Intrinsic", "undoped"),
    ("none", "undoped"),
    ("unknown", "unknown"),
    ("semimetal", None),
    (None, None),
])
def test_canonical_doping_label(raw, expected):
    assert canonical_doping_label(raw) == expected


def test_material_key_collapses_case_and_whitespace():
    assert material_key("PbTe") == material_key(" pbte ")
    assert material_key("Bi2  Te3") == "bi2 te3"
    assert material_key("PbTe") != material_key("GeTe")


# ---------------------------------------------------------------------------
# PropertyMeasurement


def test_measurement_validates_property_and_source():
    with pytest.raises(ValueError, match="unknown property"):
        PropertyMeasurement(property="hall", value=1.0)
    with pytest.raises(ValueError, match="unknown source"):
        PropertyMeasurement(property="zt", value=1.0, source="figure")


def test_measurement_flags_are_sorted_and_deduplicated():
    m = PropertyMeasurement(property="zt", value=1.0,
                            flags=("b", "a", "b"))
    assert m.flags == ("a", "b")
    assert m.with_flags("c", "a").flags == ("a", "b", "c")


def test_best_value_prefers_canonical():
    raw_only = PropertyMeasurement(property="seebeck", value=0.12,
                                   raw_unit="mV/K")
    assert raw_only.best_value() == 0.12
    normalized = PropertyMeasurement(property="seebeck", value=0.12,
                                     raw_unit="mV/K", canonical_value=120.0,
                                     canonical_unit="μV/K")
    assert normalized.best_value() == 120.0


def test_measurement_dict_round_trip_drops_unknown_keys():
    m = PropertyMeasurement(
        property="zt", value=1.2, raw_unit="", canonical_value=1.2,
        temperature_k=700.0, source="table", flags=("approximate",),
    )
    again, dropped = PropertyMeasurement.from_dict(m.to_dict())
    assert again == m
    assert dropped == []
    _, dropped = PropertyMeasurement.from_dict(
        {"property": "zt", "value": 1, "confidence": 0.9, "page": 3}
    )
    assert dropped == ["confidence", "page"]


def test_measurement_to_dict_omits_absent_optionals():
    d = PropertyMeasurement(property="zt", value=1.0).to_dict()
    assert "canonical_value" not in d
    assert "temperature_k" not in d
    assert "flags" not in d


# ---------------------------------------------------------------------------
# StructureRecord


def test_structure_rejects_raw_doping_spellings():
    # Raw spellings are canonicalized upstream; the record only holds the
    # five class labels.
    with pytest.raises(ValueError, match="unknown doping type"):
        StructureRecord(doping_type="p-type")
    assert StructureRecord(doping_type="p").doping_type == "p"
    assert StructureRecord().doping_type is None


def test_enforce_invariants_clears_dopants_on_undoped():
    record = StructureRecord(doping_type="undoped", dopants=("Na",))
    notes = record.enforce_invariants()
    assert record.dopants == ()
    assert "doping_invariant" in record.flags
    assert notes and "dopants cleared" in notes[0]
    # a consistent record is left alone
    ok = StructureRecord(doping_type="p", dopants=("Na",))
    assert ok.enforce_invariants() == []
    assert ok.dopants == ("Na",)


def test_structure_is_empty():
    assert StructureRecord().is_empty()
    assert not StructureRecord(space_group="Fm-3m").is_empty()
    assert not StructureRecord(dopants=("Na",)).is_empty()


def test_structure_dict_round_trip():
    record = StructureRecord(
        compound_type="chalcogenide", crystal_structure="cubic",
        space_group="Fm-3m", doping_type="p", dopants=("Na", "K"),
        processing_method="spark plasma sintering", flags=("table_origin",),
    )
    again, dropped = StructureRecord.from_dict(record.to_dict())
    assert again == record
    assert dropped == []
    _, dropped = StructureRecord.from_dict({"space_group": "Pnma", "color": "blue"})
    assert dropped == ["color"]


def test_structure_to_dict_omits_none_fields():
    assert StructureRecord(space_group="Pnma").to_dict() == {"space_group": "Pnma"}


# ---------------------------------------------------------------------------
# Candidates, entries, conductivity view


def test_candidate_key_uses_material_key():
    c = MaterialCandidate(name="  PbTe ", evidence=(0, 2))
    assert c.key() == "pbte"
    assert not c.validated


def test_entry_key_and_properties_present():
    entry = ExtractionEntry(
        doi="10.1/a", material="PbTe",
        te_properties=[
            PropertyMeasurement(property="zt", value=1.2),
            PropertyMeasurement(property="zt", value=1.4),
            PropertyMeasurement(property="seebeck", value=120.0),
        ],
    )
    assert entry.key() == ("10.1/a", "pbte")
    assert entry.properties_present() == {"zt", "seebeck"}


def test_conductivity_point_round_trip():
    p = ConductivityPoint(value_s_per_m=50000.0, temperature_k=300.0,
                          origin="rho")
    assert ConductivityPoint.from_dict(p.to_dict()) == p
    no_temp = ConductivityPoint(value_s_per_m=1.0, temperature_k=None,
                                origin="sigma")
    assert "temperature_k" not in no_temp.to_dict()
    assert ConductivityPoint.from_dict(no_temp.to_dict()) == no_temp


def test_normalized_entry_round_trip_collects_nested_drops():
    entry = NormalizedEntry(
        doi="10.1/a", material="PbTe",
        te_properties=[PropertyMeasurement(property="zt", value=1.2,
                                           temperature_k=700.0)],
        structure=StructureRecord(doping_type="p", dopants=("Na",)),
        provenance={"model": "mock-mini"},
        flags=("merge_conflict",),
        conductivity_view=[ConductivityPoint(2.0, 300.0, "sigma")],
    )
    again, dropped = NormalizedEntry.from_dict(entry.to_dict())
    assert again == entry
    assert dropped == []

    payload = entry.to_dict()
    payload["surprise"] = 1
    payload["te_properties"][0]["margin"] = 0.1
    payload["structure"]["color"] = "blue"
    _, dropped = NormalizedEntry.from_dict(payload)
    assert dropped == ["surprise", "te_properties.margin", "structure.color"]


def test_entry_flags_sorted_on_construction():
    entry = ExtractionEntry(doi="d", material="m", flags=("z", "a", "z"))
    assert entry.flags == ("a", "z")
