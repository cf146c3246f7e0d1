"""Command line entry points.

    thermoharvest extract   run the pipeline over a corpus directory
    thermoharvest bench     score a prediction file against a gold file
    thermoharvest stats     summarize a stored dataset
    thermoharvest export    write CSV / canonical JSONL from a dataset
    thermoharvest cost      ledger totals and pre-run estimates
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import click

from . import __version__
from .config import load_settings
from .corpus_ingest import discover, parse_document
from .dataset_store import (
    Dataset,
    binned_zt_vs_temperature,
    coverage_stats,
    distribution_stats,
    format_number,
    top_categories,
    write_bench_records,
)
from .diagnostics import DiagnosticLog
from .errors import CorpusError, ParseError, ThermoHarvestError
from .evaluate import CharNgramEmbedder, benchmark_run, load_dopants, load_ontology
from .llm_gateway import CostLedger, Gateway, estimate_cost, load_pricing, make_backend
from .orchestrator import run_batch
from .records import PROPERTIES


@click.group()
@click.version_option(__version__, prog_name="thermoharvest")
def main() -> None:
    """Mine temperature-resolved thermoelectric data from article corpora."""


# ---------------------------------------------------------------------------
# extract

@main.command()
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of publisher subdirectories with XML/HTML articles.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for dataset, traces, diagnostics, ledger.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML settings file; flags override it.")
@click.option("--model", help="Model name used for every agent call.")
@click.option("--backend", type=click.Choice(["openai", "gemini", "mock"]),
              help="Provider adapter.")
@click.option("--mock-script", type=click.Path(exists=True, dir_okay=False),
              help="Scripted responses for the mock backend.")
@click.option("--workers", type=click.IntRange(min=1), help="Concurrent articles.")
@click.option("--resume", is_flag=True, default=False,
              help="Skip articles whose previous trace reached a terminal state.")
@click.option("--include-figure-captions", is_flag=True, default=None,
              help="Feed figure captions to the sentence filter as well.")
@click.option("--validation-window", type=click.IntRange(min=0),
              help="Sentences around a mention searched for supporting evidence.")
@click.option("--context-window", type=click.IntRange(min=0),
              help="Sentences around a mention included in extraction prompts.")
def extract(corpus_dir, out_dir, config_path, model, backend, mock_script,
            workers, resume, include_figure_captions, validation_window,
            context_window):
    """Run the extraction pipeline over every article in a corpus."""
    try:
        settings = load_settings(
            config_path,
            model=model,
            backend=backend,
            mock_script=mock_script,
            workers=workers,
            include_figure_captions=include_figure_captions,
            validation_window=validation_window,
            context_window=context_window,
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))

    parse_log = DiagnosticLog()
    try:
        raw_docs = discover(corpus_dir, diagnostics=parse_log)
    except CorpusError as exc:
        raise click.ClickException(str(exc))

    articles = []
    for raw in raw_docs:
        try:
            articles.append(parse_document(raw, diagnostics=parse_log))
        except ParseError as exc:
            parse_log.add(raw.doi, "parse", "error", str(exc))
            click.echo(f"parse failed, skipping {raw.doi}: {exc}", err=True)
    for item in parse_log:
        if item.severity != "error":
            click.echo(f"{item.stage} {item.severity}: {item.doi}: {item.message}",
                       err=True)
    if not articles:
        raise click.ClickException("no parseable article in the corpus")

    try:
        backend_obj = make_backend(settings.backend, settings.mock_script)
    except (ValueError, ThermoHarvestError) as exc:
        raise click.ClickException(str(exc))
    ledger = CostLedger(load_pricing())
    gateway = Gateway(backend_obj, ledger=ledger, retry=settings.retry())

    result = run_batch(
        articles,
        gateway,
        settings.pipeline(),
        out_dir,
        workers=settings.workers,
        resume=resume,
    )

    for doi in result.skipped:
        click.echo(f"{doi}: skipped (already terminal)")
    failed = 0
    for doi in sorted(result.states):
        state = result.states[doi]
        line = f"{doi}: {state.status} ({len(state.entries)} entries, {state.calls} calls)"
        if state.status == "failed":
            failed += 1
            line += f" {state.error}"
        click.echo(line)
    click.echo(
        f"dataset: {result.dataset.entry_count} entries, "
        f"{result.dataset.measurement_count} measurements -> {result.dataset_path}"
    )
    click.echo(f"spend: ${ledger.total_usd():.6f} across {len(ledger.records)} calls")
    if failed:
        click.echo(f"{failed} article(s) failed; rerun with --resume to retry them",
                   err=True)
        sys.exit(2)


# ---------------------------------------------------------------------------
# bench

def _as_bench_file(path: str, workdir: Path, side: str) -> str:
    """Accept either flat benchmark records or a stored dataset file."""
    with open(path, encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    try:
        probe = json.loads(first) if first.strip() else {}
    except json.JSONDecodeError:
        probe = {}
    if probe.get("kind") in ("manifest", "entry") or "te_properties" in probe:
        flat = workdir / f"{side}_records.jsonl"
        write_bench_records(Dataset.load(path), flat)
        return str(flat)
    return path


@main.command()
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Predictions: benchmark records or a stored dataset.")
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Gold annotations in the same formats.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              help="Write the full report as JSON here.")
@click.option("--ontology", "ontology_path", type=click.Path(exists=True, dir_okay=False),
              help="Alternative label ontology file.")
@click.option("--dopants", "dopants_path", type=click.Path(exists=True, dir_okay=False),
              help="Alternative dopant dictionary file.")
@click.option("--embedder/--no-embedder", default=False,
              help="Also try character-ngram similarity for unmatched labels.")
def bench(pred, gold, report_path, ontology_path, dopants_path, embedder):
    """Score predictions against gold annotations."""
    ontology = load_ontology(ontology_path)
    dopants = load_dopants(dopants_path)
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        report = benchmark_run(
            _as_bench_file(pred, workdir, "pred"),
            _as_bench_file(gold, workdir, "gold"),
            ontology=ontology,
            dopants=dopants,
            embedder=CharNgramEmbedder() if embedder else None,
        )
    click.echo(report.render_text())
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        click.echo(f"report written to {report_path}")


# ---------------------------------------------------------------------------
# stats

@main.command()
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--property", "properties", multiple=True,
              type=click.Choice(PROPERTIES + ("conductivity",)),
              help="Distribution for these properties (default: all present).")
@click.option("--scale", type=click.Choice(["linear", "log10"]), default="linear",
              show_default=True, help="Histogram scale.")
@click.option("--bins", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--top", "top_field", help="Rank labels of one structure field.")
@click.option("--zt-bins", is_flag=True, default=False,
              help="ZT-vs-temperature table in 50 K bins.")
@click.option("--compound-type", help="Filter the ZT table to one compound class.")
@click.option("--doping", help="Filter the ZT table to one doping type.")
@click.option("--as-json", "as_json", is_flag=True, default=False,
              help="Emit everything as one JSON object.")
def stats(dataset_path, properties, scale, bins, top_field, zt_bins,
          compound_type, doping, as_json):
    """Coverage and distribution summaries for a stored dataset."""
    dataset = Dataset.load(dataset_path)
    coverage = coverage_stats(dataset)
    wanted = properties or PROPERTIES
    distributions = {}
    for prop in wanted:
        summary = distribution_stats(dataset, prop, n_bins=bins, scale=scale)
        if summary is not None:
            distributions[prop] = summary

    payload: dict = {"coverage": coverage,
                     "distributions": {k: v.to_dict() for k, v in distributions.items()}}
    if top_field:
        payload["top"] = {top_field: top_categories(dataset, top_field,
                                                    ontology=load_ontology())}
    if zt_bins:
        payload["zt_vs_temperature"] = binned_zt_vs_temperature(
            dataset,
            compound_type=compound_type,
            doping=doping,
            ontology=load_ontology() if compound_type else None,
        )
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
        return

    click.echo(f"entries: {coverage['entries']}  measurements: {coverage['measurements']}")
    click.echo(f"{'property':<26}{'entries':>8}{'meas':>6}{'with T':>7}{'coverage':>9}")
    for prop, cell in coverage["te_properties"].items():
        click.echo(
            f"{prop:<26}{cell['entries']:>8}{cell['measurements']:>6}"
            f"{cell['with_temperature']:>7}{cell['coverage']:>9.2f}"
        )
    click.echo(f"{'structure field':<26}{'entries':>8}{'coverage':>9}")
    for fname, cell in coverage["structure"].items():
        click.echo(f"{fname:<26}{cell['entries']:>8}{cell['coverage']:>9.2f}")
    for prop, summary in distributions.items():
        click.echo(
            f"{prop}: n={summary.count} mean={format_number(round(summary.mean, 6))} "
            f"median={format_number(round(summary.median, 6))} "
            f"std={format_number(round(summary.std, 6))} "
            f"min={format_number(summary.minimum)} max={format_number(summary.maximum)}"
        )
    for fname, ranked in payload.get("top", {}).items():
        click.echo(f"top {fname}: " + ", ".join(f"{label} ({n})" for label, n in ranked))
    for row in payload.get("zt_vs_temperature", []):
        support = " low-support" if row["low_support"] else ""
        click.echo(
            f"ZT {row['t_low']:.0f}-{row['t_high']:.0f} K: n={row['n']} "
            f"mean={row['mean']:.3f} median={row['median']:.3f} "
            f"q1={row['q1']:.3f} q3={row['q3']:.3f}{support}"
        )


# ---------------------------------------------------------------------------
# export

@main.command()
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False),
              help="Write one CSV row per measurement here.")
@click.option("--jsonl", "jsonl_path", type=click.Path(dir_okay=False),
              help="Write the canonical JSONL form here.")
def export(dataset_path, csv_path, jsonl_path):
    """Re-export a stored dataset as CSV and/or canonical JSONL."""
    if not csv_path and not jsonl_path:
        raise click.ClickException("nothing to do: pass --csv and/or --jsonl")
    dataset = Dataset.load(dataset_path)
    if csv_path:
        dataset.to_csv(csv_path)
        click.echo(f"csv: {csv_path}")
    if jsonl_path:
        dataset.save(jsonl_path)
        click.echo(f"jsonl: {jsonl_path}")


# ---------------------------------------------------------------------------
# cost

@main.group()
def cost() -> None:
    """Spend accounting."""


@cost.command("report")
@click.option("--ledger", "ledger_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--as-json", "as_json", is_flag=True, default=False)
def cost_report(ledger_path, as_json):
    """Summarize a call ledger written by extract."""
    ledger = CostLedger.read_jsonl(ledger_path, load_pricing())
    payload = {
        "total_usd": round(ledger.total_usd(), 6),
        "calls": len(ledger.records),
        "by_model": ledger.totals_by_model(),
        "by_agent": ledger.totals_by_agent(),
    }
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
        return
    click.echo(f"calls: {payload['calls']}  total: ${payload['total_usd']:.6f}")
    for title, table in (("model", payload["by_model"]), ("agent", payload["by_agent"])):
        click.echo(f"{'by ' + title:<22}{'calls':>7}{'in':>10}{'out':>10}{'usd':>12}")
        for name, cell in table.items():
            click.echo(
                f"{name:<22}{cell['calls']:>7}{cell['input_tokens']:>10}"
                f"{cell['output_tokens']:>10}{cell['usd']:>12.6f}"
            )


@cost.command("estimate")
@click.option("--documents", required=True, type=click.IntRange(min=0))
@click.option("--avg-input", required=True, type=click.FloatRange(min=0),
              help="Average input tokens per call.")
@click.option("--avg-output", required=True, type=click.FloatRange(min=0),
              help="Average output tokens per call.")
@click.option("--model", required=True)
@click.option("--calls-per-document", type=click.FloatRange(min=0), default=4.0,
              show_default=True,
              help="Finder + the extraction calls a typical article needs.")
def cost_estimate(documents, avg_input, avg_output, model, calls_per_document):
    """Pre-run spend floor for a corpus of a given size."""
    usd = estimate_cost(
        documents, avg_input, avg_output, model, load_pricing(),
        calls_per_document=calls_per_document,
    )
    click.echo(f"estimated spend: ${usd:.6f} "
               f"({documents} documents x {calls_per_document} calls)")


if __name__ == "__main__":
    main()
