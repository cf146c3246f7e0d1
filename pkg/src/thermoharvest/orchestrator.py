"""Per-article extraction state machine and multi-worker batch driver.

One article flows through a fixed graph:

    read -> find_materials -> validate -> te_extract -> struct_extract
         -> table_gate -> [table_extract] -> merge -> write -> done

with an early_exit terminal when validation leaves no material, in
which case no extraction call is ever made for the article. The
table_extract node runs only when the parsed article carries tables.
Every run records the nodes it visited in order, and batch runs persist
those traces so a resumed run can skip articles that already reached a
terminal state.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import agents
from .agents import (
    AgentResponse,
    extract_structure,
    extract_table_data,
    extract_te_properties,
    find_materials,
    template_hash,
    validate_candidates,
)
from .corpus_ingest import ParsedArticle
from .dataset_store import Dataset, Manifest
from .diagnostics import DiagnosticLog
from .errors import BudgetInfeasible, ContextOverflow
from .llm_gateway import BudgetConfig, Gateway
from .normalize import (
    UnitRules,
    load_unit_rules,
    merge_measurements,
    normalize_measurement,
    postprocess,
)
from .preprocess import FilteredText, PatternSet, filter_sentences, load_patterns, truncate_filtered
from .records import (
    ExtractionEntry,
    MaterialCandidate,
    NormalizedEntry,
    PropertyMeasurement,
    StructureRecord,
    material_key,
)

NODES = (
    "read",
    "find_materials",
    "validate",
    "te_extract",
    "struct_extract",
    "table_gate",
    "table_extract",
    "merge",
    "write",
    "done",
    "early_exit",
)

EDGES = frozenset(
    {
        ("read", "find_materials"),
        ("find_materials", "validate"),
        ("validate", "early_exit"),
        ("validate", "te_extract"),
        ("te_extract", "struct_extract"),
        ("struct_extract", "table_gate"),
        ("table_gate", "table_extract"),
        ("table_gate", "merge"),
        ("table_extract", "merge"),
        ("merge", "write"),
        ("write", "done"),
    }
)

TERMINAL_NODES = frozenset({"done", "early_exit"})


def default_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class PipelineConfig:
    model: str = "gpt-4.1-mini"
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    temperature: float = 0.001
    validation_window: int = 0
    context_window: int = 1
    include_figure_captions: bool = False
    repair_stages: tuple[str, ...] | None = None
    clock: object = default_clock

    def stages(self) -> set[str] | None:
        return None if self.repair_stages is None else set(self.repair_stages)


@dataclass
class PipelineState:
    doi: str
    trace: list[str] = field(default_factory=list)
    status: str = "pending"   # pending / done / early_exit / failed
    error: str | None = None
    filtered: FilteredText | None = None
    candidates: list[MaterialCandidate] = field(default_factory=list)
    validated: list[MaterialCandidate] = field(default_factory=list)
    text_measurements: dict[str, list[PropertyMeasurement]] = field(default_factory=dict)
    structures: dict[str, StructureRecord] = field(default_factory=dict)
    table_measurements: dict[str, list[PropertyMeasurement]] = field(default_factory=dict)
    unhinted: list[str] = field(default_factory=list)
    merged: dict[str, list[PropertyMeasurement]] = field(default_factory=dict)
    entries: list[NormalizedEntry] = field(default_factory=list)
    calls: int = 0
    tokens_in: int = 0
    tokens_out: int = 0

    def note_response(self, response: AgentResponse | None) -> None:
        if response is None:
            return
        self.calls += 1
        self.tokens_in += response.completion.input_tokens
        self.tokens_out += response.completion.output_tokens

    def trace_record(self) -> dict:
        record = {
            "doi": self.doi,
            "status": self.status,
            "trace": list(self.trace),
            "entries": len(self.entries),
            "calls": self.calls,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
        }
        if self.error is not None:
            record["error"] = self.error
        return record


def _shrink_to_fit(
    call,
    filtered: FilteredText,
    gateway: Gateway,
    config: PipelineConfig,
    diagnostics: DiagnosticLog,
    stage: str,
):
    """Run an agent call, truncating the filtered text when it cannot fit.

    The output-token floor plus the prompt must fit the model context;
    when they do not, trailing sentences are dropped against a shrinking
    token target and the call retried. Returns (result, filtered_used)
    or (None, last_attempt) when even a minimal prompt is infeasible.
    """
    limit = gateway.context_limit(config.model)
    room = max(limit - config.budget.min_output, 1)
    current = filtered
    for attempt in range(4):
        try:
            return call(current), current
        except (BudgetInfeasible, ContextOverflow) as exc:
            target = max(16, int(room * 0.5 ** (attempt + 1)))
            shrunk = truncate_filtered(current, target, model=config.model)
            diagnostics.add(
                filtered.doi,
                stage,
                "warning",
                f"prompt does not fit {config.model} context ({exc}); "
                f"kept {shrunk.sentence_count} of {current.sentence_count} sentences",
            )
            if not shrunk.sentences or shrunk.sentence_count == current.sentence_count:
                break
            current = shrunk
    diagnostics.add(
        filtered.doi, stage, "error",
        "prompt infeasible even after truncation; call skipped",
    )
    return None, current


def run_pipeline(
    article: ParsedArticle,
    gateway: Gateway,
    config: PipelineConfig,
    patterns: PatternSet | None = None,
    rules: UnitRules | None = None,
    diagnostics: DiagnosticLog | None = None,
) -> PipelineState:
    """Drive one article through the extraction graph."""
    patterns = patterns or load_patterns()
    rules = rules or load_unit_rules()
    diagnostics = diagnostics if diagnostics is not None else DiagnosticLog()
    state = PipelineState(doi=article.doi)

    # read: boilerplate removal and relevance filtering
    state.trace.append("read")
    state.filtered = filter_sentences(
        article,
        patterns,
        doi=article.doi,
        include_figure_captions=config.include_figure_captions,
        model=config.model,
    )

    # find_materials
    state.trace.append("find_materials")
    found, used = _shrink_to_fit(
        lambda ft: find_materials(
            gateway,
            config.model,
            ft,
            budget=config.budget,
            temperature=config.temperature,
            repair_stages=config.stages(),
            diagnostics=diagnostics,
        ),
        state.filtered,
        gateway,
        config,
        diagnostics,
        "find_materials",
    )
    state.filtered = used
    if found is None:
        state.candidates = []
    else:
        state.candidates, response = found
        state.note_response(response)

    # validate
    state.trace.append("validate")
    state.validated = [
        c
        for c in validate_candidates(
            state.candidates, state.filtered, window=config.validation_window
        )
        if c.validated
    ]
    if not state.validated:
        state.trace.append("early_exit")
        state.status = "early_exit"
        diagnostics.add(
            article.doi, "validate", "info",
            "no validated material; stopped before extraction",
        )
        return state

    # te_extract: one call per validated material
    state.trace.append("te_extract")
    for cand in state.validated:
        got, _ = _shrink_to_fit(
            lambda ft: extract_te_properties(
                gateway,
                config.model,
                cand.name,
                ft,
                rules=rules,
                budget=config.budget,
                context_window=config.context_window,
                temperature=config.temperature,
                repair_stages=config.stages(),
                diagnostics=diagnostics,
            ),
            state.filtered,
            gateway,
            config,
            diagnostics,
            "te_extract",
        )
        measurements: list[PropertyMeasurement] = []
        if got is not None:
            raw, response = got
            state.note_response(response)
            measurements = [
                normalize_measurement(m, rules, doi=article.doi, diagnostics=diagnostics)
                for m in raw
            ]
        state.text_measurements[cand.name] = measurements

    # struct_extract: one call per validated material
    state.trace.append("struct_extract")
    for cand in state.validated:
        got, _ = _shrink_to_fit(
            lambda ft: extract_structure(
                gateway,
                config.model,
                cand.name,
                ft,
                budget=config.budget,
                context_window=config.context_window,
                temperature=config.temperature,
                repair_stages=config.stages(),
                diagnostics=diagnostics,
            ),
            state.filtered,
            gateway,
            config,
            diagnostics,
            "struct_extract",
        )
        if got is None:
            state.structures[cand.name] = StructureRecord()
        else:
            structure, response = got
            state.note_response(response)
            state.structures[cand.name] = structure

    # table_gate: branch on whether the parser found any table
    state.trace.append("table_gate")
    if article.tables:
        state.trace.append("table_extract")
        try:
            by_material, unhinted, response = extract_table_data(
                gateway,
                config.model,
                article.tables,
                hints=[c.name for c in state.validated],
                doi=article.doi,
                rules=rules,
                budget=config.budget,
                temperature=config.temperature,
                repair_stages=config.stages(),
                diagnostics=diagnostics,
            )
            state.note_response(response)
            state.unhinted = unhinted
            state.table_measurements = {
                name: [
                    normalize_measurement(
                        m, rules, doi=article.doi, diagnostics=diagnostics
                    )
                    for m in items
                ]
                for name, items in by_material.items()
            }
        except (BudgetInfeasible, ContextOverflow) as exc:
            diagnostics.add(
                article.doi, "table_extract", "error",
                f"tables do not fit {config.model} context ({exc}); tables skipped",
            )

    # merge: text wins over tables per (property, temperature bucket)
    state.trace.append("merge")
    table_by_key = {material_key(name): name for name in state.table_measurements}
    claimed: set[str] = set()
    for cand in state.validated:
        key = material_key(cand.name)
        table_name = table_by_key.get(key)
        table_side: list[PropertyMeasurement] = []
        if table_name is not None:
            claimed.add(key)
            table_side = state.table_measurements[table_name]
        merged, _ = merge_measurements(
            state.text_measurements.get(cand.name, []),
            table_side,
            doi=article.doi,
            material=cand.name,
            diagnostics=diagnostics,
        )
        state.merged[cand.name] = merged

    # write: assemble entries and run dataset hygiene
    state.trace.append("write")
    provenance = build_provenance(config, state.filtered, rules)
    raw_entries: list[ExtractionEntry] = []
    for cand in state.validated:
        raw_entries.append(
            ExtractionEntry(
                doi=article.doi,
                material=cand.name,
                te_properties=tuple(state.merged.get(cand.name, [])),
                structure=state.structures.get(cand.name, StructureRecord()),
                provenance=dict(provenance),
            )
        )
    for name in state.unhinted:
        if material_key(name) in claimed:
            continue
        raw_entries.append(
            ExtractionEntry(
                doi=article.doi,
                material=name,
                te_properties=tuple(state.table_measurements.get(name, [])),
                structure=StructureRecord(),
                provenance=dict(provenance),
                flags=("unhinted_material",),
            )
        )
    state.entries = postprocess(raw_entries, diagnostics)
    state.trace.append("done")
    state.status = "done"
    return state


def build_provenance(
    config: PipelineConfig, filtered: FilteredText | None, rules: UnitRules
) -> dict:
    return {
        "model": config.model,
        "pattern_version": filtered.pattern_version if filtered else "",
        "pattern_checksum": filtered.pattern_checksum if filtered else "",
        "unit_rules_version": rules.version,
        "template_hashes": {agent: template_hash(agent) for agent in agents.AGENT_NAMES},
        "extracted_at": config.clock(),
    }


def validate_trace(trace: list[str]) -> bool:
    """True when a trace is a walk through the graph ending terminally."""
    if not trace or trace[0] != "read":
        return False
    for a, b in zip(trace, trace[1:]):
        if (a, b) not in EDGES:
            return False
    return trace[-1] in TERMINAL_NODES


# ---------------------------------------------------------------------------
# Batch driver

DATASET_FILE = "dataset.jsonl"
TRACES_FILE = "traces.jsonl"
DIAGNOSTICS_FILE = "diagnostics.jsonl"
LEDGER_FILE = "cost_ledger.jsonl"


@dataclass
class BatchResult:
    out_dir: Path
    dataset: Dataset
    states: dict[str, PipelineState]
    skipped: list[str]

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / DATASET_FILE


def _load_previous_traces(path: Path) -> dict[str, dict]:
    traces: dict[str, dict] = {}
    if not path.exists():
        return traces
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            traces[record["doi"]] = record
    return traces


def run_batch(
    articles: list[ParsedArticle],
    gateway: Gateway,
    config: PipelineConfig,
    out_dir: str | Path,
    workers: int = 1,
    resume: bool = False,
    patterns: PatternSet | None = None,
    rules: UnitRules | None = None,
) -> BatchResult:
    """Run the pipeline over many articles and persist the outputs.

    Results are folded into the dataset in sorted article order on the
    calling thread, so the persisted files are byte-identical no matter
    how many workers ran. With resume=True, articles whose previous
    trace reached a terminal state are skipped and their prior entries
    and trace records are carried over.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    patterns = patterns or load_patterns()
    rules = rules or load_unit_rules()

    previous = _load_previous_traces(out_dir / TRACES_FILE) if resume else {}
    done_before = {
        doi for doi, rec in previous.items() if rec.get("status") in ("done", "early_exit")
    }

    if resume and (out_dir / DATASET_FILE).exists():
        dataset = Dataset.load(out_dir / DATASET_FILE)
    else:
        dataset = Dataset()
    dataset.manifest = Manifest(
        created_at=config.clock(),
        model=config.model,
        pattern_checksum=patterns.checksum,
        unit_rules_version=rules.version,
        template_hashes={agent: template_hash(agent) for agent in agents.AGENT_NAMES},
    )

    ordered = sorted(articles, key=lambda a: a.doi)
    todo = [a for a in ordered if a.doi not in done_before]
    skipped = [a.doi for a in ordered if a.doi in done_before]

    logs: dict[str, DiagnosticLog] = {a.doi: DiagnosticLog() for a in todo}

    def _run_one(article: ParsedArticle) -> PipelineState:
        try:
            return run_pipeline(
                article, gateway, config,
                patterns=patterns, rules=rules, diagnostics=logs[article.doi],
            )
        except Exception as exc:  # keep one bad article from sinking the batch
            state = PipelineState(doi=article.doi)
            state.status = "failed"
            state.error = f"{type(exc).__name__}: {exc}"
            logs[article.doi].add(article.doi, "pipeline", "error", state.error)
            return state

    states: dict[str, PipelineState] = {}
    if workers <= 1:
        for article in todo:
            states[article.doi] = _run_one(article)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for state in pool.map(_run_one, todo):
                states[state.doi] = state

    for doi in sorted(states):
        for entry in states[doi].entries:
            dataset.upsert(entry)
    dataset.save(out_dir / DATASET_FILE)

    trace_records = [rec for doi, rec in sorted(previous.items()) if doi in done_before]
    trace_records.extend(states[doi].trace_record() for doi in sorted(states))
    trace_records.sort(key=lambda r: r["doi"])
    with open(out_dir / TRACES_FILE, "w", encoding="utf-8") as fh:
        for record in trace_records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    with open(out_dir / DIAGNOSTICS_FILE, "w", encoding="utf-8") as fh:
        for doi in sorted(logs):
            for item in logs[doi]:
                fh.write(json.dumps(item.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")

    if gateway.ledger is not None:
        records = sorted(
            gateway.ledger.records,
            key=lambda r: (r.doi, r.agent, r.model, r.input_tokens, r.output_tokens),
        )
        with open(out_dir / LEDGER_FILE, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    return BatchResult(
        out_dir=out_dir, dataset=dataset, states=states, skipped=skipped
    )
