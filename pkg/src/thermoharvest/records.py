"""Shared domain records: measurements, structure fields, extraction entries.

These types are the currency between the agents, the merge step, the
normalizer, and the dataset store, so they live in one dependency-free
module. Serialization is dict-based with unknown keys dropped (and
reported) rather than erroring, because agent payloads routinely carry
extra fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace


# Canonical property identifiers and their target units. Temperatures are
# kelvin everywhere; degrees Celsius are converted at normalization time.
PROPERTIES = (
    "zt",
    "seebeck",
    "electrical_conductivity",
    "electrical_resistivity",
    "power_factor",
    "thermal_conductivity",
)

CANONICAL_UNITS = {
    "zt": "",
    "seebeck": "μV/K",
    "electrical_conductivity": "S/m",
    "electrical_resistivity": "Ω·m",
    "power_factor": "W/mK²",
    "thermal_conductivity": "W/mK",
}

# Spellings accepted from agent payloads for the property field.
PROPERTY_ALIASES = {
    "zt": "zt",
    "figure of merit": "zt",
    "figure-of-merit": "zt",
    "seebeck": "seebeck",
    "seebeck coefficient": "seebeck",
    "thermopower": "seebeck",
    "s": "seebeck",
    "electrical_conductivity": "electrical_conductivity",
    "electrical conductivity": "electrical_conductivity",
    "conductivity": "electrical_conductivity",
    "sigma": "electrical_conductivity",
    "electrical_resistivity": "electrical_resistivity",
    "electrical resistivity": "electrical_resistivity",
    "resistivity": "electrical_resistivity",
    "rho": "electrical_resistivity",
    "power_factor": "power_factor",
    "power factor": "power_factor",
    "pf": "power_factor",
    "thermal_conductivity": "thermal_conductivity",
    "thermal conductivity": "thermal_conductivity",
    "kappa": "thermal_conductivity",
}

DOPING_TYPES = ("p", "n", "undoped", "mixed", "unknown")

# Relaxed equivalence for doping labels: raw spellings seen in articles
# and in benchmark files all collapse onto the five classes above.
_DOPING_LABELS = {
    "p": "p",
    "p-type": "p",
    "p type": "p",
    "ptype": "p",
    "acceptor": "p",
    "hole": "p",
    "n": "n",
    "n-type": "n",
    "n type": "n",
    "ntype": "n",
    "donor": "n",
    "electron": "n",
    "undoped": "undoped",
    "un-doped": "undoped",
    "intrinsic": "undoped",
    "pristine": "undoped",
    "none": "undoped",
    "mixed": "mixed",
    "compensated": "mixed",
    "ambipolar": "mixed",
    "p+n": "mixed",
    "n+p": "mixed",
    "p/n": "mixed",
    "unknown": "unknown",
}

MEASUREMENT_SOURCES = ("text", "table")


def canonical_property(raw: str) -> str | None:
    """Map an agent-reported property name to its canonical id, or None."""
    return PROPERTY_ALIASES.get(str(raw).strip().lower())


def canonical_doping_label(raw: str | None) -> str | None:
    """Collapse a raw doping label onto the canonical class set, or None."""
    if raw is None:
        return None
    return _DOPING_LABELS.get(str(raw).strip().lower().replace("_", "-"))


def material_key(name: str) -> str:
    """Key used to identify a material within a document.

    Case-insensitive with collapsed whitespace, so "PbTe" and "pbte "
    land on the same entry while the first-seen spelling is preserved
    for display.
    """
    return " ".join(str(name).split()).lower()


def _sorted_flags(flags) -> tuple[str, ...]:
    return tuple(sorted(set(flags or ())))


@dataclass(frozen=True)
class PropertyMeasurement:
    """One numeric property observation, possibly temperature-resolved."""

    property: str
    value: float
    raw_unit: str = ""
    canonical_value: float | None = None
    canonical_unit: str = ""
    temperature_k: float | None = None
    source: str = "text"
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.property not in PROPERTIES:
            raise ValueError(f"unknown property: {self.property!r}")
        if self.source not in MEASUREMENT_SOURCES:
            raise ValueError(f"unknown source: {self.source!r}")
        object.__setattr__(self, "flags", _sorted_flags(self.flags))

    def with_flags(self, *extra: str) -> "PropertyMeasurement":
        return replace(self, flags=self.flags + tuple(extra))

    def best_value(self) -> float:
        """Canonical value when normalization succeeded, raw value otherwise."""
        return self.value if self.canonical_value is None else self.canonical_value

    def to_dict(self) -> dict:
        out: dict = {
            "property": self.property,
            "value": self.value,
            "raw_unit": self.raw_unit,
            "canonical_unit": self.canonical_unit,
            "source": self.source,
        }
        if self.canonical_value is not None:
            out["canonical_value"] = self.canonical_value
        if self.temperature_k is not None:
            out["temperature_k"] = self.temperature_k
        if self.flags:
            out["flags"] = list(self.flags)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> tuple["PropertyMeasurement", list[str]]:
        known = {
            "property",
            "value",
            "raw_unit",
            "canonical_value",
            "canonical_unit",
            "temperature_k",
            "source",
            "flags",
        }
        dropped = sorted(set(payload) - known)
        return (
            cls(
                property=payload["property"],
                value=float(payload["value"]),
                raw_unit=payload.get("raw_unit", ""),
                canonical_value=payload.get("canonical_value"),
                canonical_unit=payload.get("canonical_unit", ""),
                temperature_k=payload.get("temperature_k"),
                source=payload.get("source", "text"),
                flags=tuple(payload.get("flags", ())),
            ),
            dropped,
        )


_STRUCTURE_FIELDS = (
    "compound_type",
    "crystal_structure",
    "lattice_structure",
    "lattice_parameters",
    "space_group",
    "doping_type",
    "processing_method",
)


@dataclass
class StructureRecord:
    """Structural and synthesis metadata for one material."""

    compound_type: str | None = None
    crystal_structure: str | None = None
    lattice_structure: str | None = None
    lattice_parameters: str | None = None
    space_group: str | None = None
    doping_type: str | None = None
    dopants: tuple[str, ...] = ()
    processing_method: str | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.doping_type is not None and self.doping_type not in DOPING_TYPES:
            raise ValueError(f"unknown doping type: {self.doping_type!r}")
        self.dopants = tuple(self.dopants)
        self.flags = _sorted_flags(self.flags)

    def enforce_invariants(self) -> list[str]:
        """Clear dopants on undoped records. Returns human-readable notes."""
        notes = []
        if self.doping_type == "undoped" and self.dopants:
            notes.append(
                f"doping_type=undoped but dopants={list(self.dopants)}; dopants cleared"
            )
            self.dopants = ()
            self.flags = _sorted_flags(self.flags + ("doping_invariant",))
        return notes

    def is_empty(self) -> bool:
        return all(getattr(self, f) is None for f in _STRUCTURE_FIELDS) and not self.dopants

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in _STRUCTURE_FIELDS if getattr(self, f) is not None}
        if self.dopants:
            out["dopants"] = list(self.dopants)
        if self.flags:
            out["flags"] = list(self.flags)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> tuple["StructureRecord", list[str]]:
        known = set(_STRUCTURE_FIELDS) | {"dopants", "flags"}
        dropped = sorted(set(payload) - known)
        kwargs = {f: payload.get(f) for f in _STRUCTURE_FIELDS}
        return (
            cls(
                dopants=tuple(payload.get("dopants", ())),
                flags=tuple(payload.get("flags", ())),
                **kwargs,
            ),
            dropped,
        )


@dataclass(frozen=True)
class MaterialCandidate:
    """A material name proposed by the finder agent with its evidence."""

    name: str
    evidence: tuple[int, ...] = ()
    validated: bool = False

    def key(self) -> str:
        return material_key(self.name)


@dataclass(frozen=True)
class ConductivityPoint:
    """Unified conductivity view: every point is expressed in S/m."""

    value_s_per_m: float
    temperature_k: float | None
    origin: str  # "sigma" when reported directly, "rho" when derived as 1/rho

    def to_dict(self) -> dict:
        out: dict = {"value_s_per_m": self.value_s_per_m, "origin": self.origin}
        if self.temperature_k is not None:
            out["temperature_k"] = self.temperature_k
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "ConductivityPoint":
        return cls(
            value_s_per_m=float(payload["value_s_per_m"]),
            temperature_k=payload.get("temperature_k"),
            origin=payload["origin"],
        )


@dataclass
class ExtractionEntry:
    """Everything extracted for one (doi, material) pair."""

    doi: str
    material: str
    te_properties: list[PropertyMeasurement] = field(default_factory=list)
    structure: StructureRecord = field(default_factory=StructureRecord)
    provenance: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.flags = _sorted_flags(self.flags)

    def key(self) -> tuple[str, str]:
        return (self.doi, material_key(self.material))

    def properties_present(self) -> set[str]:
        return {m.property for m in self.te_properties}

    def to_dict(self) -> dict:
        out: dict = {
            "doi": self.doi,
            "material": self.material,
            "te_properties": [m.to_dict() for m in self.te_properties],
            "structure": self.structure.to_dict(),
            "provenance": self.provenance,
        }
        if self.flags:
            out["flags"] = list(self.flags)
        return out


@dataclass
class NormalizedEntry(ExtractionEntry):
    """Extraction entry after unit normalization and sigma/rho unification."""

    conductivity_view: list[ConductivityPoint] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["conductivity_view"] = [p.to_dict() for p in self.conductivity_view]
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> tuple["NormalizedEntry", list[str]]:
        known = {
            "doi",
            "material",
            "te_properties",
            "structure",
            "provenance",
            "flags",
            "conductivity_view",
        }
        dropped = sorted(set(payload) - known)
        measurements = []
        for raw in payload.get("te_properties", ()):
            meas, extra = PropertyMeasurement.from_dict(raw)
            measurements.append(meas)
            dropped.extend(f"te_properties.{k}" for k in extra)
        structure, extra = StructureRecord.from_dict(payload.get("structure", {}))
        dropped.extend(f"structure.{k}" for k in extra)
        entry = cls(
            doi=payload["doi"],
            material=payload["material"],
            te_properties=measurements,
            structure=structure,
            provenance=dict(payload.get("provenance", {})),
            flags=tuple(payload.get("flags", ())),
            conductivity_view=[
                ConductivityPoint.from_dict(p) for p in payload.get("conductivity_view", ())
            ],
        )
        return entry, dropped
