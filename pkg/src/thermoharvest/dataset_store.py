"""Dataset storage keyed by (doi, material), stats, and stable exports.

The on-disk format is line-delimited JSON: one manifest line followed
by one line per entry, sorted by key, serialized with sorted keys, so a
dataset re-exported from the same content is byte-identical no matter
how many workers produced it.

CSV export renders numbers with ECMAScript Number-to-string semantics
(format_number below) rather than Python repr, so downstream viewers
implemented in JavaScript can reproduce the same bytes with their
native formatter. One CSV row per measurement; structural fields repeat
on each of the entry's rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from .diagnostics import DiagnosticLog
from .errors import ManifestMismatch
from .normalize import postprocess
from .records import PROPERTIES, NormalizedEntry, material_key

SCHEMA_VERSION = 1

CSV_COLUMNS = (
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
)


def format_number(x: float) -> str:
    """ECMAScript Number::toString(10) on shortest round-trip digits.

    Python's repr and JavaScript's String() agree on the digits but not
    on when to switch to exponent notation (1e-5 vs 0.00001). This
    renders the JavaScript choice so CSV bytes match across both
    implementations.
    """
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot format {x!r}")
    if x == 0:
        return "0"
    sign = "-" if x < 0 else ""
    d = Decimal(repr(abs(x))).normalize()
    digit_tuple, exponent = d.as_tuple().digits, d.as_tuple().exponent
    s = "".join(str(dig) for dig in digit_tuple)
    k = len(s)
    n = exponent + k
    if k <= n <= 21:
        body = s + "0" * (n - k)
    elif 0 < n <= 21:
        body = s[:n] + "." + s[n:]
    elif -6 < n <= 0:
        body = "0." + "0" * (-n) + s
    else:
        mantissa = s[0] + ("." + s[1:] if k > 1 else "")
        e = n - 1
        body = f"{mantissa}e{'+' if e >= 0 else '-'}{abs(e)}"
    return sign + body


@dataclass
class Manifest:
    created_at: str = ""
    model: str = ""
    pattern_checksum: str = ""
    unit_rules_version: str = ""
    template_hashes: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "kind": "manifest",
            "schema_version": self.schema_version,
            "created_at": self.created_at,
            "model": self.model,
            "pattern_checksum": self.pattern_checksum,
            "unit_rules_version": self.unit_rules_version,
            "template_hashes": self.template_hashes,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Manifest":
        return cls(
            created_at=payload.get("created_at", ""),
            model=payload.get("model", ""),
            pattern_checksum=payload.get("pattern_checksum", ""),
            unit_rules_version=payload.get("unit_rules_version", ""),
            template_hashes=dict(payload.get("template_hashes", {})),
            schema_version=int(payload.get("schema_version", SCHEMA_VERSION)),
        )


_MANIFEST_PROVENANCE_KEYS = ("model", "pattern_checksum", "unit_rules_version")


class Dataset:
    """(doi, material)-keyed collection of normalized entries."""

    def __init__(self, manifest: Manifest | None = None, strict: bool = False):
        self.manifest = manifest or Manifest()
        self.strict = strict
        self._entries: dict[tuple[str, str], NormalizedEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entry_count(self) -> int:
        return len(self._entries)

    @property
    def measurement_count(self) -> int:
        return sum(len(e.te_properties) for e in self._entries.values())

    def entries(self) -> list[NormalizedEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def get(self, doi: str, material: str) -> NormalizedEntry | None:
        return self._entries.get((doi, material_key(material)))

    def upsert(self, entry: NormalizedEntry, diagnostics: DiagnosticLog | None = None) -> None:
        """Insert or merge an entry (union, text precedence on conflicts)."""
        if self.strict:
            for key in _MANIFEST_PROVENANCE_KEYS:
                expected = getattr(self.manifest, key)
                got = entry.provenance.get(key, "")
                if expected and got and expected != got:
                    raise ManifestMismatch(
                        f"{entry.doi}/{entry.material}: provenance {key}={got!r} "
                        f"does not match manifest {expected!r}"
                    )
        key = entry.key()
        existing = self._entries.get(key)
        if existing is None:
            self._entries[key] = entry
            return
        merged = postprocess([existing, entry], diagnostics)
        if merged:
            self._entries[key] = merged[0]
        else:
            del self._entries[key]

    # ------------------------------------------------------------------
    # Persistence

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.manifest.to_dict(), sort_keys=True,
                                ensure_ascii=False) + "\n")
            for entry in self.entries():
                record = {"kind": "entry", **entry.to_dict()}
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path, strict: bool = False) -> "Dataset":
        dataset = cls(strict=strict)
        with open(path, encoding="utf-8") as fh:
            first = True
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                payload = json.loads(line)
                kind = payload.pop("kind", "entry")
                if kind == "manifest":
                    dataset.manifest = Manifest.from_dict(payload)
                    first = False
                    continue
                if first and "doi" not in payload:
                    first = False
                    continue
                first = False
                entry, _ = NormalizedEntry.from_dict(payload)
                dataset._entries[entry.key()] = entry
        return dataset

    def to_csv(self, path: str | Path | None = None, predicate=None) -> str:
        """Write the per-measurement CSV; returns the text either way."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for entry in self.entries():
            if predicate is not None and not predicate(entry):
                continue
            s = entry.structure
            for meas in entry.te_properties:
                writer.writerow(
                    [
                        entry.doi,
                        entry.material,
                        meas.property,
                        format_number(meas.value),
                        meas.raw_unit,
                        "" if meas.canonical_value is None
                        else format_number(meas.canonical_value),
                        meas.canonical_unit,
                        "" if meas.temperature_k is None
                        else format_number(meas.temperature_k),
                        meas.source,
                        ";".join(meas.flags),
                        s.compound_type or "",
                        s.crystal_structure or "",
                        s.lattice_structure or "",
                        s.space_group or "",
                        s.doping_type or "",
                        ";".join(s.dopants),
                        s.processing_method or "",
                    ]
                )
        text = buffer.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


_BENCH_STRUCT_FIELDS = (
    "compound_type",
    "crystal_structure",
    "lattice_structure",
    "space_group",
    "doping_type",
    "processing_method",
)


def bench_records(dataset: Dataset) -> list[dict]:
    """Flatten a dataset into benchmark records.

    Numeric records carry the canonical value when one exists; unknown-
    unit measurements are left out because their values are not
    comparable. Categorical records cover the single-label structure
    fields.
    """
    records: list[dict] = []
    for entry in dataset.entries():
        for meas in entry.te_properties:
            if "unknown_unit" in meas.flags:
                continue
            rec = {
                "doi": entry.doi,
                "material": entry.material,
                "property": meas.property,
                "value": meas.best_value(),
            }
            if meas.temperature_k is not None:
                rec["temperature_k"] = meas.temperature_k
            records.append(rec)
        for field_name in _BENCH_STRUCT_FIELDS:
            label = getattr(entry.structure, field_name)
            if label is not None:
                records.append(
                    {
                        "doi": entry.doi,
                        "material": entry.material,
                        "field": field_name,
                        "label": label,
                    }
                )
    return records


def write_bench_records(dataset: Dataset, path: str | Path) -> int:
    records = bench_records(dataset)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    return len(records)


# ---------------------------------------------------------------------------
# Statistics

@dataclass(frozen=True)
class StatSummary:
    count: int
    mean: float
    median: float
    std: float
    minimum: float
    maximum: float
    histogram: dict

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "median": self.median,
            "std": self.std,
            "min": self.minimum,
            "max": self.maximum,
            "histogram": self.histogram,
        }


def _property_values(dataset: Dataset, property: str) -> list[float]:
    if property == "conductivity":
        return [
            p.value_s_per_m
            for e in dataset.entries()
            for p in e.conductivity_view
        ]
    return [
        m.best_value()
        for e in dataset.entries()
        for m in e.te_properties
        if m.property == property and "unknown_unit" not in m.flags
    ]


def build_histogram(values: list[float], n_bins: int = 20, scale: str = "linear") -> dict:
    """Fixed-width histogram; log10 scale drops non-positive values."""
    excluded = 0
    if scale == "log10":
        usable = [v for v in values if v > 0]
        excluded = len(values) - len(usable)
        points = [math.log10(v) for v in usable]
    elif scale == "linear":
        points = list(values)
    else:
        raise ValueError(f"unknown histogram scale: {scale!r}")
    if not points:
        return {"scale": scale, "edges": [], "counts": [], "excluded": excluded}
    lo, hi = min(points), max(points)
    if lo == hi:
        return {
            "scale": scale,
            "edges": [lo, hi],
            "counts": [len(points)],
            "excluded": excluded,
        }
    width = (hi - lo) / n_bins
    edges = [lo + i * width for i in range(n_bins)] + [hi]
    counts = [0] * n_bins
    for p in points:
        idx = min(int((p - lo) / width), n_bins - 1)
        counts[idx] += 1
    return {"scale": scale, "edges": edges, "counts": counts, "excluded": excluded}


def distribution_stats(
    dataset: Dataset, property: str, n_bins: int = 20, scale: str = "linear"
) -> StatSummary | None:
    """Population statistics over one property's canonical values.

    std is the population standard deviation. Returns None when the
    dataset has no usable value for the property.
    """
    values = _property_values(dataset, property)
    if not values:
        return None
    return StatSummary(
        count=len(values),
        mean=statistics.fmean(values),
        median=statistics.median(values),
        std=statistics.pstdev(values),
        minimum=min(values),
        maximum=max(values),
        histogram=build_histogram(values, n_bins=n_bins, scale=scale),
    )


def quartile_exclusive(sorted_values: list[float], p: float) -> float:
    """Exclusive-method quantile (the p*(n+1) rule) on sorted input."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("no values")
    h = p * (n + 1)
    if h <= 1:
        return sorted_values[0]
    if h >= n:
        return sorted_values[-1]
    k = int(math.floor(h))
    g = h - k
    return sorted_values[k - 1] + g * (sorted_values[k] - sorted_values[k - 1])


_STRUCT_FIELD_GETTERS = (
    "compound_type",
    "crystal_structure",
    "lattice_structure",
    "space_group",
    "doping_type",
    "processing_method",
)


def coverage_stats(dataset: Dataset) -> dict:
    """Field coverage and temperature pairing across the dataset."""
    n = dataset.entry_count
    per_property: dict[str, dict] = {}
    for prop in PROPERTIES:
        entries_with = 0
        measurements = 0
        with_temperature = 0
        for entry in dataset.entries():
            mine = [m for m in entry.te_properties if m.property == prop]
            if mine:
                entries_with += 1
            measurements += len(mine)
            with_temperature += sum(1 for m in mine if m.temperature_k is not None)
        per_property[prop] = {
            "entries": entries_with,
            "coverage": entries_with / n if n else 0.0,
            "measurements": measurements,
            "with_temperature": with_temperature,
        }
    structure = {}
    for field_name in _STRUCT_FIELD_GETTERS:
        have = sum(
            1 for e in dataset.entries() if getattr(e.structure, field_name) is not None
        )
        structure[field_name] = {"entries": have, "coverage": have / n if n else 0.0}
    dopant_entries = sum(1 for e in dataset.entries() if e.structure.dopants)
    structure["dopants"] = {
        "entries": dopant_entries,
        "coverage": dopant_entries / n if n else 0.0,
    }
    return {
        "entries": n,
        "measurements": dataset.measurement_count,
        "te_properties": per_property,
        "structure": structure,
    }


def top_categories(
    dataset: Dataset, field_name: str, k: int = 10, ontology=None
) -> list[tuple[str, int]]:
    """Most frequent labels for a structure field.

    Labels normalize through the ontology when one is given, otherwise
    a canonical string key. Descending count, ties lexicographic.
    """
    from .evaluate import canonical_label_key, normalize_label

    counts: dict[str, int] = {}
    for entry in dataset.entries():
        if field_name == "dopants":
            raw_values = list(entry.structure.dopants)
        else:
            raw = getattr(entry.structure, field_name, None)
            raw_values = [raw] if raw is not None else []
        for raw in raw_values:
            if ontology is not None:
                normalized = normalize_label(field_name, raw, ontology)
                label = normalized.label if normalized.label else canonical_label_key(raw)
            else:
                label = canonical_label_key(raw) or raw
            counts[label] = counts.get(label, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def binned_zt_vs_temperature(
    dataset: Dataset,
    bin_width_k: float = 50.0,
    compound_type: str | None = None,
    doping: str | None = None,
    n_min: int = 3,
    ontology=None,
) -> list[dict]:
    """ZT statistics per temperature bin, optionally filtered.

    Bins cover [i*width, (i+1)*width). Bins with fewer than n_min points
    are still reported but flagged low_support. Quartiles use the
    exclusive method.
    """
    from .evaluate import normalize_label

    points: list[tuple[float, float]] = []
    for entry in dataset.entries():
        if compound_type is not None:
            mine = entry.structure.compound_type
            if mine is None:
                continue
            if ontology is not None:
                got = normalize_label("compound_type", mine, ontology).label or mine
                want = normalize_label("compound_type", compound_type, ontology).label \
                    or compound_type
                if got != want:
                    continue
            elif material_key(mine) != material_key(compound_type):
                continue
        if doping is not None and entry.structure.doping_type != doping:
            continue
        for meas in entry.te_properties:
            if meas.property != "zt" or meas.temperature_k is None:
                continue
            if "unknown_unit" in meas.flags:
                continue
            points.append((meas.temperature_k, meas.best_value()))

    bins: dict[int, list[float]] = {}
    for t, z in points:
        bins.setdefault(int(t // bin_width_k), []).append(z)

    out = []
    for index in sorted(bins):
        values = sorted(bins[index])
        out.append(
            {
                "t_low": index * bin_width_k,
                "t_high": (index + 1) * bin_width_k,
                "n": len(values),
                "mean": statistics.fmean(values),
                "median": statistics.median(values),
                "q1": quartile_exclusive(values, 0.25),
                "q3": quartile_exclusive(values, 0.75),
                "low_support": len(values) < n_min,
            }
        )
    return out
