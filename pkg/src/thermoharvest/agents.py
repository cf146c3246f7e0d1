"""The four extraction agents and candidate validation.

Agents are thin: build a prompt from templates and filtered text, ask
the gateway, repair-parse the reply, validate it against the agent's
JSON schema, and coerce the payload into records with hard type guards.
Any field an agent invents beyond the schema is dropped and logged, and
values that cannot be read as numbers never reach the dataset.

Agent names used in request metadata and ledger attribution:
    matfindr, teprop, structprop, tabledata.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .bpe import count_tokens
from .corpus_ingest import TableBlock
from .diagnostics import DiagnosticLog
from .errors import ParseFailed, SchemaViolation, UnknownUnit
from .json_repair import repair_json
from .llm_gateway import (
    BudgetConfig,
    CompletionRequest,
    CompletionResult,
    Gateway,
    allocate_tokens,
)
from .normalize import UnitRules, coerce_values, load_unit_rules
from .preprocess import FilteredText
from .records import (
    MaterialCandidate,
    PropertyMeasurement,
    StructureRecord,
    canonical_doping_label,
    canonical_property,
    material_key,
)

MATFINDR = "matfindr"
TEPROP = "teprop"
STRUCTPROP = "structprop"
TABLEDATA = "tabledata"

AGENT_NAMES = (MATFINDR, TEPROP, STRUCTPROP, TABLEDATA)

_TEMPLATE_FILES = {
    MATFINDR: "prompts/matfindr_system.txt",
    TEPROP: "prompts/teprop_system.txt",
    STRUCTPROP: "prompts/structprop_system.txt",
    TABLEDATA: "prompts/tabledata_system.txt",
}

_SCHEMA_FILES = {
    MATFINDR: "schemas/matfindr.json",
    TEPROP: "schemas/teprop.json",
    STRUCTPROP: "schemas/structprop.json",
    TABLEDATA: "schemas/tabledata.json",
}

_template_cache: dict[str, str] = {}
_schema_cache: dict[str, dict] = {}


def system_template(agent: str) -> str:
    if agent not in _template_cache:
        _template_cache[agent] = (
            resources.files("thermoharvest")
            .joinpath(_TEMPLATE_FILES[agent])
            .read_text(encoding="utf-8")
        )
    return _template_cache[agent]


def template_hash(agent: str) -> str:
    return hashlib.sha256(system_template(agent).encode("utf-8")).hexdigest()[:12]


def payload_schema(agent: str) -> dict:
    if agent not in _schema_cache:
        _schema_cache[agent] = json.loads(
            resources.files("thermoharvest")
            .joinpath(_SCHEMA_FILES[agent])
            .read_text(encoding="utf-8")
        )
    return _schema_cache[agent]


@dataclass(frozen=True)
class AgentResponse:
    data: dict
    completion: CompletionResult
    repaired: bool


def parse_payload(agent: str, text: str, repair_stages: set[str] | None = None) -> tuple[dict, bool]:
    """Repair-parse an agent reply and enforce its schema."""
    outcome = repair_json(text, enabled_stages=repair_stages)
    try:
        jsonschema.validate(outcome.data, payload_schema(agent))
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"{agent}: {exc.message}") from exc
    if not isinstance(outcome.data, dict):
        raise SchemaViolation(f"{agent}: payload is not an object")
    return outcome.data, outcome.repair_applied


def _call(
    gateway: Gateway,
    agent: str,
    model: str,
    user: str,
    doi: str,
    material: str | None,
    phase: str,
    table_rows: int,
    budget: BudgetConfig,
    temperature: float,
) -> CompletionResult:
    system = system_template(agent)
    prompt_tokens = count_tokens(system + "\n" + user, model)
    max_tokens = allocate_tokens(
        prompt_tokens,
        gateway.context_limit(model),
        phase=phase,
        table_rows=table_rows,
        config=budget,
    )
    metadata = {"agent": agent, "doi": doi}
    if material is not None:
        metadata["material"] = material
    request = CompletionRequest(
        model=model,
        system=system,
        user=user,
        max_tokens=max_tokens,
        temperature=temperature,
        metadata=metadata,
    )
    return gateway.complete(request)


# ---------------------------------------------------------------------------
# Material finder

def find_materials(
    gateway: Gateway,
    model: str,
    filtered: FilteredText,
    budget: BudgetConfig = BudgetConfig(),
    temperature: float = 0.001,
    repair_stages: set[str] | None = None,
    diagnostics: DiagnosticLog | None = None,
) -> tuple[list[MaterialCandidate], AgentResponse | None]:
    """Propose material candidates from the filtered text.

    Empty filtered text short-circuits without any gateway call. Names
    are deduplicated case-insensitively keeping the first spelling, and
    each candidate records the indices of sentences that mention it.
    """
    if not filtered.sentences:
        if diagnostics is not None:
            diagnostics.add(
                filtered.doi, MATFINDR, "info", "no filtered sentences; no call made"
            )
        return [], None
    completion = _call(
        gateway, MATFINDR, model, filtered.text(), filtered.doi,
        None, "text", 0, budget, temperature,
    )
    try:
        payload, repaired = parse_payload(MATFINDR, completion.text, repair_stages)
    except (ParseFailed, SchemaViolation) as exc:
        if diagnostics is not None:
            diagnostics.add(filtered.doi, MATFINDR, "error", str(exc))
        return [], AgentResponse({}, completion, False)
    candidates: list[MaterialCandidate] = []
    seen: set[str] = set()
    for raw_name in payload["materials"]:
        name = " ".join(str(raw_name).split())
        if not name:
            continue
        key = material_key(name)
        if key in seen:
            continue
        seen.add(key)
        evidence = tuple(
            i for i, s in enumerate(filtered.sentences) if key in s.text.lower()
        )
        candidates.append(MaterialCandidate(name=name, evidence=evidence))
    return candidates, AgentResponse(payload, completion, repaired)


_UNIT_HINT_RE = re.compile(
    r"(?:μ|µ|u|m)V\s*/?\s*K"
    r"|W\s*/?\s*\(?\s*m\s*·?\s*K"
    r"|S\s*/\s*c?m"
    r"|Ω|\bohm"
    r"|°C"
    r"|\b\d+(?:\.\d+)?\s*K\b"
)


def validate_candidates(
    candidates: list[MaterialCandidate],
    filtered: FilteredText,
    window: int = 0,
) -> list[MaterialCandidate]:
    """Keep the finder honest: a candidate passes when a sentence near a
    mention carries a TE-property keyword or a unit token plus a digit.

    window widens the check to +/- that many sentences around each
    mention. Returns all candidates with .validated set.
    """
    sentences = filtered.sentences
    out: list[MaterialCandidate] = []
    for cand in candidates:
        validated = False
        for idx in cand.evidence:
            lo = max(0, idx - window)
            hi = min(len(sentences) - 1, idx + window)
            for j in range(lo, hi + 1):
                s = sentences[j]
                has_signal = "te_property" in s.categories or _UNIT_HINT_RE.search(s.text)
                if has_signal and any(ch.isdigit() for ch in s.text):
                    validated = True
                    break
            if validated:
                break
        out.append(MaterialCandidate(name=cand.name, evidence=cand.evidence, validated=validated))
    return out


# ---------------------------------------------------------------------------
# Text property agents

def _evidence_text(material: str, filtered: FilteredText, context_window: int) -> str:
    key = material_key(material)
    picked: set[int] = set()
    for i, s in enumerate(filtered.sentences):
        if key in s.text.lower():
            lo = max(0, i - context_window)
            hi = min(len(filtered.sentences) - 1, i + context_window)
            picked.update(range(lo, hi + 1))
    if not picked:
        return filtered.text()
    return "\n".join(filtered.sentences[i].text for i in sorted(picked))


def _user_prompt_for_material(material: str, filtered: FilteredText, context_window: int) -> str:
    return (
        f"Target material: {material}\n\n"
        f"Sentences:\n{_evidence_text(material, filtered, context_window)}"
    )


def sanitize_measurements(
    items,
    source: str,
    rules: UnitRules,
    doi: str = "",
    agent: str = TEPROP,
    diagnostics: DiagnosticLog | None = None,
) -> list[PropertyMeasurement]:
    """Type-guard raw measurement dicts from an agent payload.

    Unknown property names and unparseable values are dropped with a
    diagnostic; string values may be ranges (two flagged endpoints) or
    carry approximation markers. Temperatures convert to kelvin here;
    value units stay raw for the normalizer.
    """
    measurements: list[PropertyMeasurement] = []
    for item in items:
        prop = canonical_property(item.get("property", ""))
        if prop is None:
            if diagnostics is not None:
                diagnostics.add(
                    doi, agent, "warning",
                    f"unknown property {item.get('property')!r} dropped",
                )
            continue
        try:
            values = coerce_values(item.get("value"))
        except ValueError as exc:
            if diagnostics is not None:
                diagnostics.add(doi, agent, "warning", f"{prop}: {exc}; dropped")
            continue
        unit = str(item.get("unit") or "")
        temperature_k = None
        flags_extra: tuple[str, ...] = ()
        raw_temp = item.get("temperature")
        if raw_temp is not None:
            try:
                temp_value = float(raw_temp)
            except (TypeError, ValueError):
                if diagnostics is not None:
                    diagnostics.add(
                        doi, agent, "warning",
                        f"{prop}: non-numeric temperature {raw_temp!r} ignored",
                    )
                temp_value = None
            if temp_value is not None:
                try:
                    temperature_k = rules.temperature_to_kelvin(
                        temp_value, item.get("temperature_unit")
                    )
                except UnknownUnit:
                    if diagnostics is not None:
                        diagnostics.add(
                            doi, agent, "warning",
                            f"{prop}: unknown temperature unit "
                            f"{item.get('temperature_unit')!r}; temperature dropped",
                        )
                    flags_extra = ("temperature_unit_unknown",)
        for value, flags in values:
            measurements.append(
                PropertyMeasurement(
                    property=prop,
                    value=value,
                    raw_unit=unit,
                    temperature_k=temperature_k,
                    source=source,
                    flags=flags + flags_extra,
                )
            )
    return measurements


def extract_te_properties(
    gateway: Gateway,
    model: str,
    material: str,
    filtered: FilteredText,
    rules: UnitRules | None = None,
    budget: BudgetConfig = BudgetConfig(),
    context_window: int = 1,
    temperature: float = 0.001,
    repair_stages: set[str] | None = None,
    diagnostics: DiagnosticLog | None = None,
) -> tuple[list[PropertyMeasurement], AgentResponse | None]:
    rules = rules or load_unit_rules()
    user = _user_prompt_for_material(material, filtered, context_window)
    completion = _call(
        gateway, TEPROP, model, user, filtered.doi, material,
        "text", 0, budget, temperature,
    )
    try:
        payload, repaired = parse_payload(TEPROP, completion.text, repair_stages)
    except (ParseFailed, SchemaViolation) as exc:
        if diagnostics is not None:
            diagnostics.add(filtered.doi, TEPROP, "error", str(exc))
        return [], AgentResponse({}, completion, False)
    measurements = sanitize_measurements(
        payload["measurements"], "text", rules, filtered.doi, TEPROP, diagnostics
    )
    return measurements, AgentResponse(payload, completion, repaired)


_STRUCT_FIELDS = (
    "compound_type",
    "crystal_structure",
    "lattice_structure",
    "lattice_parameters",
    "space_group",
    "processing_method",
)


def sanitize_structure(
    payload: dict,
    doi: str = "",
    diagnostics: DiagnosticLog | None = None,
) -> StructureRecord:
    known = set(_STRUCT_FIELDS) | {"doping_type", "dopants"}
    dropped = sorted(set(payload) - known)
    if dropped and diagnostics is not None:
        diagnostics.add(
            doi, STRUCTPROP, "info", f"dropped unknown field(s) {dropped}"
        )
    kwargs: dict = {}
    for field_name in _STRUCT_FIELDS:
        value = payload.get(field_name)
        if value is not None and not isinstance(value, str):
            if diagnostics is not None:
                diagnostics.add(
                    doi, STRUCTPROP, "warning",
                    f"{field_name} must be a string, got {type(value).__name__}; dropped",
                )
            value = None
        kwargs[field_name] = (value or "").strip() or None

    flags: tuple[str, ...] = ()
    doping_raw = payload.get("doping_type")
    doping = canonical_doping_label(doping_raw)
    if doping_raw is not None and str(doping_raw).strip() and doping is None:
        if diagnostics is not None:
            diagnostics.add(
                doi, STRUCTPROP, "warning",
                f"unmapped doping label {doping_raw!r}; field cleared",
            )
        flags = ("doping_label_unmapped",)

    raw_dopants = payload.get("dopants") or ()
    dopants: list[str] = []
    if isinstance(raw_dopants, (list, tuple)):
        for item in raw_dopants:
            name = str(item).strip()
            if name and name not in dopants:
                dopants.append(name)
    elif diagnostics is not None:
        diagnostics.add(
            doi, STRUCTPROP, "warning",
            f"dopants must be an array, got {type(raw_dopants).__name__}; dropped",
        )
    return StructureRecord(
        doping_type=doping, dopants=tuple(dopants), flags=flags, **kwargs
    )


def extract_structure(
    gateway: Gateway,
    model: str,
    material: str,
    filtered: FilteredText,
    budget: BudgetConfig = BudgetConfig(),
    context_window: int = 1,
    temperature: float = 0.001,
    repair_stages: set[str] | None = None,
    diagnostics: DiagnosticLog | None = None,
) -> tuple[StructureRecord, AgentResponse | None]:
    user = _user_prompt_for_material(material, filtered, context_window)
    completion = _call(
        gateway, STRUCTPROP, model, user, filtered.doi, material,
        "text", 0, budget, temperature,
    )
    try:
        payload, repaired = parse_payload(STRUCTPROP, completion.text, repair_stages)
    except (ParseFailed, SchemaViolation) as exc:
        if diagnostics is not None:
            diagnostics.add(filtered.doi, STRUCTPROP, "error", str(exc))
        return StructureRecord(), AgentResponse({}, completion, False)
    record = sanitize_structure(payload, filtered.doi, diagnostics)
    return record, AgentResponse(payload, completion, repaired)


# ---------------------------------------------------------------------------
# Table agent

def render_tables(tables: list[TableBlock]) -> str:
    blocks: list[str] = []
    for table in tables:
        lines = [f"Table {table.table_id}: {table.caption}".rstrip()]
        if table.headers:
            lines.append(" | ".join(table.headers))
        for row in table.rows:
            lines.append(" | ".join(row))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def extract_table_data(
    gateway: Gateway,
    model: str,
    tables: list[TableBlock],
    hints: list[str],
    doi: str,
    rules: UnitRules | None = None,
    budget: BudgetConfig = BudgetConfig(),
    temperature: float = 0.001,
    repair_stages: set[str] | None = None,
    diagnostics: DiagnosticLog | None = None,
) -> tuple[dict[str, list[PropertyMeasurement]], list[str], AgentResponse | None]:
    """Transcribe table measurements, keyed by material name.

    Returns (measurements by material, unhinted material names, raw
    response). Materials absent from the hint list are still returned;
    the orchestrator flags the resulting entries.
    """
    rules = rules or load_unit_rules()
    if not tables:
        return {}, [], None
    hint_line = ", ".join(hints) if hints else "(none)"
    user = f"Materials from the text: {hint_line}\n\n{render_tables(tables)}"
    total_rows = sum(t.n_rows for t in tables)
    completion = _call(
        gateway, TABLEDATA, model, user, doi, None,
        "table", total_rows, budget, temperature,
    )
    try:
        payload, repaired = parse_payload(TABLEDATA, completion.text, repair_stages)
    except (ParseFailed, SchemaViolation) as exc:
        if diagnostics is not None:
            diagnostics.add(doi, TABLEDATA, "error", str(exc))
        return {}, [], AgentResponse({}, completion, False)

    hint_keys = {material_key(h) for h in hints}
    by_material: dict[str, list[PropertyMeasurement]] = {}
    spelling: dict[str, str] = {}
    unhinted: list[str] = []
    for row in payload["rows"]:
        name = " ".join(str(row.get("material", "")).split())
        if not name:
            continue
        key = material_key(name)
        if key not in spelling:
            spelling[key] = name
            if key not in hint_keys:
                unhinted.append(name)
        display = spelling[key]
        measurements = sanitize_measurements(
            row.get("measurements", ()), "table", rules, doi, TABLEDATA, diagnostics
        )
        by_material.setdefault(display, []).extend(measurements)
    return by_material, unhinted, AgentResponse(payload, completion, repaired)
