"""Quantity parsing, unit normalization, and measurement merging.

Unit handling is table-driven: every property has a list of accepted
unit spellings with a linear factor (and offset for temperatures). At
load time each authored spelling is collapsed to an internal key by the
same normalizer applied to incoming units, so "W m⁻¹ K⁻²", "W/(m·K²)"
and "W/mK²" all land on one rule row. Spellings outside the table are
never guessed at: the measurement keeps its raw value and is flagged
unknown_unit.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .diagnostics import DiagnosticLog
from .errors import UnknownUnit
from .records import (
    CANONICAL_UNITS,
    PROPERTIES,
    ConductivityPoint,
    ExtractionEntry,
    NormalizedEntry,
    PropertyMeasurement,
)

# Value agreement between sources reuses the benchmark value tolerance,
# so "the table agrees with the text" means exactly what a benchmark
# match would mean.
SIGMA_RHO_TOLERANCE = 0.05
TEMPERATURE_BUCKET_K = 1.0

_SUPERSCRIPTS = {
    "⁰": "0", "¹": "1", "²": "2", "³": "3", "⁴": "4",
    "⁵": "5", "⁶": "6", "⁷": "7", "⁸": "8", "⁹": "9",
    "⁻": "-", "⁺": "+",
}
_SUPERSCRIPT_RE = re.compile("[" + "".join(_SUPERSCRIPTS) + "]+")

_UNICODE_MAP = {
    "µ": "μ",   # micro sign -> greek mu
    "Ω": "Ω",   # ohm sign -> greek omega
    "−": "-",   # minus sign
    "–": "-",   # en dash
    "—": "-",   # em dash
    "⋅": "·",   # dot operator
    "∙": "·",   # bullet operator
    " ": " ",
    " ": " ",
    " ": " ",
    "℃": "°C",  # ℃
    "˚": "°",
}

_DEG_C_RE = re.compile(r"(?i)\bdeg(?:rees?)?\.?\s*C\b")
_OHM_WORD_RE = re.compile(r"(?i)\bohms?\b")
_MICRO_U_RE = re.compile(r"(?<![A-Za-z])u(?=[VWSAΩ])")
_PER_RE = re.compile(r"(?i)\bper\b")
_TOKEN_EXP_RE = re.compile(r"^(.*?)\^(-?\d+)$")

APPROX_MARKERS = (
    "approximately", "approx.", "approx", "about", "up to", "nearly",
    "around", "circa", "ca.", "~", "≈", "∼", "⁓",
)


def _apply_unicode_cleanup(text: str) -> str:
    for src, dst in _UNICODE_MAP.items():
        text = text.replace(src, dst)
    text = _SUPERSCRIPT_RE.sub(
        lambda m: "^" + "".join(_SUPERSCRIPTS[c] for c in m.group(0)), text
    )
    return text


def normalize_unit_spelling(raw: str) -> str:
    """Collapse a unit spelling to the internal rule key.

    Multiplication separators (middle dots, spaces, parentheses) vanish,
    "/" segments after the first accumulate as the denominator, and
    negative exponents move their token across the fraction bar. The
    result is a lookup key, not a display form.
    """
    text = _apply_unicode_cleanup(str(raw).strip())
    text = _DEG_C_RE.sub("°C", text)
    text = _OHM_WORD_RE.sub("Ω", text)
    text = _MICRO_U_RE.sub("μ", text)
    text = _PER_RE.sub("/", text)
    text = text.strip()
    if text.startswith("(") and text.endswith(")"):
        text = text[1:-1].strip()
    if not text:
        return ""

    segments = [seg.strip() for seg in text.split("/")]
    numerator: list[tuple[str, int]] = []
    denominator: list[tuple[str, int]] = []
    for seg_index, segment in enumerate(segments):
        segment = segment.strip()
        if segment.startswith("(") and segment.endswith(")"):
            segment = segment[1:-1]
        target = numerator if seg_index == 0 else denominator
        other = denominator if seg_index == 0 else numerator
        for token in re.split(r"[·\s]+", segment):
            token = token.strip("()")
            if not token:
                continue
            m = _TOKEN_EXP_RE.match(token)
            if m and m.group(1):
                base, exp = m.group(1), int(m.group(2))
            else:
                base, exp = token, 1
            if exp < 0:
                other.append((base, -exp))
            else:
                target.append((base, exp))

    def render(tokens: list[tuple[str, int]]) -> str:
        return "".join(
            base if exp == 1 else f"{base}^{exp}" for base, exp in tokens
        )

    num = render(numerator) or "1"
    den = render(denominator)
    return f"{num}/{den}" if den else num


@dataclass(frozen=True)
class ParsedQuantity:
    value: float
    unit: str
    approximate: bool = False


_POW10_RE = re.compile(r"^10\^(-?\d+)\s*(.*)$", re.DOTALL)
_SCI_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+))\s*[x×*]\s*10\^?(-?\d+)\s*(.*)$", re.DOTALL
)
_NUM_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(.*)$", re.DOTALL
)


def parse_quantity(raw: str) -> ParsedQuantity:
    """Split "≈1.2 × 10⁻³ W m⁻¹ K⁻²" into value, unit key, approx flag.

    Raises ValueError when no leading number can be found.
    """
    text = _apply_unicode_cleanup(str(raw).strip())
    approximate = False
    lowered = text.lower()
    for marker in APPROX_MARKERS:
        if lowered.startswith(marker):
            text = text[len(marker):].strip()
            lowered = text.lower()
            approximate = True
    for pattern in (_SCI_RE, _POW10_RE, _NUM_RE):
        m = pattern.match(text)
        if not m:
            continue
        if pattern is _POW10_RE:
            value = 10.0 ** int(m.group(1))
            unit = m.group(2)
        elif pattern is _SCI_RE:
            value = float(m.group(1)) * 10.0 ** int(m.group(2))
            unit = m.group(3)
        else:
            value = float(m.group(1))
            unit = m.group(2)
        return ParsedQuantity(
            value=value, unit=normalize_unit_spelling(unit), approximate=approximate
        )
    raise ValueError(f"no numeric value in {raw!r}")


_RANGE_SPLIT_RE = re.compile(r"(?<=[\d.])\s*(?:-|–|—|\bto\b)\s*(?=[+-]?\d)")


def split_range(raw: str) -> list[str]:
    """Split "1.0–1.2" style ranges into endpoint strings.

    Negative signs and exponents are not split because the separator
    must follow a digit. Returns the input unchanged (as a single-item
    list) when no range separator is present.
    """
    parts = _RANGE_SPLIT_RE.split(str(raw), maxsplit=1)
    return [p.strip() for p in parts if p.strip()]


def coerce_values(raw) -> list[tuple[float, tuple[str, ...]]]:
    """Agent "value" fields: number, numeric string, range, or junk.

    Returns (value, flags) pairs; ranges yield both endpoints flagged
    range_endpoint. Raises ValueError for values that cannot be read
    as numbers at all.
    """
    if isinstance(raw, bool):
        raise ValueError(f"boolean is not a measurement value: {raw!r}")
    if isinstance(raw, (int, float)):
        return [(float(raw), ())]
    if isinstance(raw, str):
        parts = split_range(raw)
        if len(parts) == 2:
            out = []
            for part in parts:
                q = parse_quantity(part)
                flags = ("range_endpoint",) + (("approximate",) if q.approximate else ())
                out.append((q.value, flags))
            return out
        q = parse_quantity(raw)
        return [(q.value, ("approximate",) if q.approximate else ())]
    raise ValueError(f"unsupported value type: {type(raw).__name__}")


# ---------------------------------------------------------------------------
# Rule table

@dataclass(frozen=True)
class UnitRule:
    spelling: str
    key: str
    factor: float
    offset: float = 0.0


class UnitRules:
    """Per-property unit conversion table keyed by normalized spelling."""

    def __init__(self, version: str, tables: dict[str, dict[str, UnitRule]]):
        self.version = version
        self.tables = tables

    def rule_for(self, property: str, raw_unit: str) -> UnitRule:
        table = self.tables.get(property)
        if table is None:
            raise UnknownUnit(f"no rules for property {property!r}")
        key = normalize_unit_spelling(raw_unit)
        rule = table.get(key)
        if rule is None:
            raise UnknownUnit(
                f"no rule for {property} unit {raw_unit!r} (key {key!r})"
            )
        return rule

    def convert(self, property: str, value: float, raw_unit: str) -> float:
        rule = self.rule_for(property, raw_unit)
        return value * rule.factor + rule.offset

    def temperature_to_kelvin(self, value: float, unit: str | None) -> float:
        if unit is None or not str(unit).strip():
            return float(value)  # unstated temperature units are kelvin
        return self.convert("temperature", float(value), unit)


def load_unit_rules(path: str | Path | None = None) -> UnitRules:
    if path is None:
        text = resources.files("thermoharvest").joinpath("data/unit_rules.json").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    payload = json.loads(text)
    tables: dict[str, dict[str, UnitRule]] = {}
    for property, spec in payload["properties"].items():
        table: dict[str, UnitRule] = {}
        for row in spec["rules"]:
            rule = UnitRule(
                spelling=row["unit"],
                key=normalize_unit_spelling(row["unit"]),
                factor=float(row["factor"]),
                offset=float(row.get("offset", 0.0)),
            )
            if rule.key in table and (
                table[rule.key].factor != rule.factor
                or table[rule.key].offset != rule.offset
            ):
                raise ValueError(
                    f"conflicting rules for {property}: {table[rule.key].spelling!r} "
                    f"and {rule.spelling!r} normalize to the same key {rule.key!r}"
                )
            table[rule.key] = rule
        tables[property] = table
    return UnitRules(version=str(payload.get("version", "0")), tables=tables)


def sigma_from_rho(rho: float) -> float:
    return 1.0 / rho


def rho_from_sigma(sigma: float) -> float:
    return 1.0 / sigma


def normalize_measurement(
    meas: PropertyMeasurement,
    rules: UnitRules,
    doi: str = "",
    diagnostics: DiagnosticLog | None = None,
) -> PropertyMeasurement:
    """Attach canonical_value/canonical_unit, or flag unknown_unit."""
    try:
        canonical = rules.convert(meas.property, meas.value, meas.raw_unit)
    except UnknownUnit as exc:
        if diagnostics is not None:
            diagnostics.add(doi, "normalize", "warning", str(exc))
        if "unknown_unit" in meas.flags:
            return meas
        return meas.with_flags("unknown_unit")
    return replace(
        meas,
        canonical_value=canonical,
        canonical_unit=CANONICAL_UNITS[meas.property],
    )


def _bucket(meas: PropertyMeasurement) -> tuple[str, float | None]:
    t = meas.temperature_k
    if t is None:
        return (meas.property, None)
    return (meas.property, round(t / TEMPERATURE_BUCKET_K) * TEMPERATURE_BUCKET_K)


def _dedupe_key(meas: PropertyMeasurement) -> tuple:
    return (
        meas.property,
        meas.best_value(),
        meas.temperature_k,
        meas.source,
    )


_PROPERTY_ORDER = {name: i for i, name in enumerate(PROPERTIES)}


def _merge_sort_key(meas: PropertyMeasurement) -> tuple:
    return (
        _PROPERTY_ORDER[meas.property],
        meas.temperature_k is None,
        meas.temperature_k if meas.temperature_k is not None else 0.0,
        meas.best_value(),
        meas.raw_unit,
    )


@dataclass(frozen=True)
class MergeConflict:
    doi: str
    material: str
    property: str
    temperature_k: float | None
    kept_value: float
    dropped_value: float
    kept_source: str
    dropped_source: str


def merge_measurements(
    primary: list[PropertyMeasurement],
    secondary: list[PropertyMeasurement],
    doi: str = "",
    material: str = "",
    diagnostics: DiagnosticLog | None = None,
) -> tuple[list[PropertyMeasurement], list[MergeConflict]]:
    """Union with primary precedence per (property, 1 K temperature bucket).

    Secondary measurements fill empty slots. When a slot is occupied and
    the secondary value agrees within the benchmark value tolerance it
    is dropped silently; a disagreeing value is dropped with a conflict
    record and the kept measurement is flagged merge_conflict.
    Exact duplicates collapse; differing values from the same side and
    bucket are kept (repeat samples are real).
    """
    from .evaluate import within_value_tolerance

    merged: list[PropertyMeasurement] = []
    seen: set[tuple] = set()
    occupied: dict[tuple, int] = {}
    conflicts: list[MergeConflict] = []

    for meas in primary:
        key = _dedupe_key(meas)
        if key in seen:
            continue
        seen.add(key)
        occupied.setdefault(_bucket(meas), len(merged))
        merged.append(meas)

    for meas in sorted(secondary, key=_merge_sort_key):
        key = _dedupe_key(meas)
        if key in seen:
            continue
        bucket = _bucket(meas)
        slot = occupied.get(bucket)
        if slot is None:
            seen.add(key)
            occupied[bucket] = len(merged)
            merged.append(meas)
            continue
        holder = merged[slot]
        if within_value_tolerance(holder.best_value(), meas.best_value()):
            continue
        conflict = MergeConflict(
            doi=doi,
            material=material,
            property=meas.property,
            temperature_k=bucket[1],
            kept_value=holder.best_value(),
            dropped_value=meas.best_value(),
            kept_source=holder.source,
            dropped_source=meas.source,
        )
        conflicts.append(conflict)
        if "merge_conflict" not in holder.flags:
            merged[slot] = holder.with_flags("merge_conflict")
        if diagnostics is not None:
            diagnostics.add(
                doi,
                "merge",
                "warning",
                f"{material}: {meas.property} at {bucket[1]} K: kept "
                f"{holder.source} value {holder.best_value()!r}, dropped "
                f"{meas.source} value {meas.best_value()!r}",
            )
    return merged, conflicts


def unify_sigma_rho(
    entry: ExtractionEntry, diagnostics: DiagnosticLog | None = None
) -> NormalizedEntry:
    """Build the unified conductivity view and cross-check sigma vs rho.

    Every point is in S/m: reported conductivities directly, reported
    resistivities as 1/rho. When both exist at the same temperature
    bucket and |sigma * rho - 1| > 0.05 the pair is flagged.
    """
    view: list[ConductivityPoint] = []
    sigma_at: dict[float | None, float] = {}
    rho_at: dict[float | None, float] = {}
    for meas in entry.te_properties:
        if meas.canonical_value is None:
            continue
        t = meas.temperature_k
        bucket = None if t is None else round(t / TEMPERATURE_BUCKET_K) * TEMPERATURE_BUCKET_K
        if meas.property == "electrical_conductivity":
            view.append(ConductivityPoint(meas.canonical_value, t, "sigma"))
            sigma_at[bucket] = meas.canonical_value
        elif meas.property == "electrical_resistivity" and meas.canonical_value != 0:
            view.append(
                ConductivityPoint(sigma_from_rho(meas.canonical_value), t, "rho")
            )
            rho_at[bucket] = meas.canonical_value

    flags = list(entry.flags)
    inconsistent = False
    for bucket, sigma in sigma_at.items():
        rho = rho_at.get(bucket)
        if rho is None:
            continue
        if abs(sigma * rho - 1.0) > SIGMA_RHO_TOLERANCE:
            inconsistent = True
            if diagnostics is not None:
                diagnostics.add(
                    entry.doi,
                    "normalize",
                    "warning",
                    f"{entry.material}: sigma*rho = {sigma * rho:.4f} at "
                    f"{bucket} K deviates from 1 by more than {SIGMA_RHO_TOLERANCE}",
                )
    measurements = entry.te_properties
    if inconsistent:
        flags.append("sigma_rho_inconsistent")
        measurements = [
            m.with_flags("sigma_rho_inconsistent")
            if m.property in ("electrical_conductivity", "electrical_resistivity")
            and "sigma_rho_inconsistent" not in m.flags
            else m
            for m in measurements
        ]
    return NormalizedEntry(
        doi=entry.doi,
        material=entry.material,
        te_properties=measurements,
        structure=entry.structure,
        provenance=entry.provenance,
        flags=tuple(flags),
        conductivity_view=view,
    )


def postprocess(
    entries: list, diagnostics: DiagnosticLog | None = None
) -> list[NormalizedEntry]:
    """Final dataset hygiene before storage.

    Dict records are coerced (unknown keys dropped with a diagnostic),
    duplicate (doi, material) entries merge by union with text
    precedence, structure invariants are enforced, and entries with no
    TE measurement at all are removed. Output is sorted by
    (doi, material key).
    """
    coerced: list[NormalizedEntry] = []
    for item in entries:
        if isinstance(item, dict):
            entry, dropped = NormalizedEntry.from_dict(item)
            if dropped and diagnostics is not None:
                diagnostics.add(
                    entry.doi,
                    "postprocess",
                    "info",
                    f"{entry.material}: dropped unknown field(s) {dropped}",
                )
            coerced.append(entry)
        elif isinstance(item, NormalizedEntry):
            coerced.append(item)
        elif isinstance(item, ExtractionEntry):
            coerced.append(unify_sigma_rho(item, diagnostics))
        else:
            raise TypeError(f"cannot postprocess {type(item).__name__}")

    grouped: dict[tuple[str, str], list[NormalizedEntry]] = {}
    for entry in coerced:
        grouped.setdefault(entry.key(), []).append(entry)

    out: list[NormalizedEntry] = []
    for key in sorted(grouped):
        group = grouped[key]
        first = group[0]
        if len(group) == 1:
            merged_entry = first
        else:
            text_side = [m for e in group for m in e.te_properties if m.source == "text"]
            table_side = [m for e in group for m in e.te_properties if m.source == "table"]
            measurements, _ = merge_measurements(
                text_side,
                table_side,
                doi=first.doi,
                material=first.material,
                diagnostics=diagnostics,
            )
            structure = first.structure
            for other in group[1:]:
                for field_name in (
                    "compound_type",
                    "crystal_structure",
                    "lattice_structure",
                    "lattice_parameters",
                    "space_group",
                    "doping_type",
                    "processing_method",
                ):
                    mine = getattr(structure, field_name)
                    theirs = getattr(other.structure, field_name)
                    if mine is None and theirs is not None:
                        setattr(structure, field_name, theirs)
                    elif mine is not None and theirs is not None and mine != theirs:
                        if diagnostics is not None:
                            diagnostics.add(
                                first.doi,
                                "postprocess",
                                "warning",
                                f"{first.material}: conflicting {field_name} "
                                f"{mine!r} vs {theirs!r}; kept {mine!r}",
                            )
                if not structure.dopants and other.structure.dopants:
                    structure.dopants = other.structure.dopants
            flags = tuple(dict.fromkeys(f for e in group for f in e.flags))
            merged_entry = NormalizedEntry(
                doi=first.doi,
                material=first.material,
                te_properties=measurements,
                structure=structure,
                provenance=first.provenance,
                flags=flags,
            )
        for note in merged_entry.structure.enforce_invariants():
            if diagnostics is not None:
                diagnostics.add(
                    merged_entry.doi, "postprocess", "warning",
                    f"{merged_entry.material}: {note}",
                )
        if not merged_entry.te_properties:
            if diagnostics is not None:
                diagnostics.add(
                    merged_entry.doi,
                    "postprocess",
                    "info",
                    f"{merged_entry.material}: no TE measurement; entry dropped",
                )
            continue
        out.append(unify_sigma_rho_refresh(merged_entry, diagnostics))
    return out


def unify_sigma_rho_refresh(
    entry: NormalizedEntry, diagnostics: DiagnosticLog | None = None
) -> NormalizedEntry:
    """Rebuild the conductivity view after measurements changed."""
    base = ExtractionEntry(
        doi=entry.doi,
        material=entry.material,
        te_properties=entry.te_properties,
        structure=entry.structure,
        provenance=entry.provenance,
        flags=tuple(f for f in entry.flags if f != "sigma_rho_inconsistent"),
    )
    return unify_sigma_rho(base, diagnostics)
