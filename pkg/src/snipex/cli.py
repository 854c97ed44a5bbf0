"""``snipex`` command line: ingest, top-imports, serve, work, run-local, analyze, export-taxonomy.

Machine-readable output goes to stdout, logs to stderr. Every option can
also be set through an environment variable ``SNIPEX_<COMMAND>_<OPTION>``.
"""

from __future__ import annotations

import json
import logging
import os
import signal
import socket
import sys
from pathlib import Path

import click

from . import __version__
from .corpus import DEFAULT_TAG_FILTER, IngestError, ingest, read_corpus, top_imports, write_corpus
from .sandbox import default_configs, load_configs
from .taxonomy import taxonomy_json

logger = logging.getLogger("snipex")


def _configs(path: str | None):
    return load_configs(path) if path else default_configs()


def _emit(obj):
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


@click.group(context_settings={"auto_envvar_prefix": "SNIPEX", "help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="More logging on stderr.")
def main(verbose):
    """Evaluate the executability of Q&A code snippets."""
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command("ingest")
@click.option("--posts", required=True, type=click.Path(dir_okay=False), help="Posts CSV dump.")
@click.option("--blocks", required=True, type=click.Path(dir_okay=False), help="PostBlockVersion CSV dump.")
@click.option("--refs", type=click.Path(dir_okay=False), help="GitHub references CSV (PostId,Url).")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Corpus JSONL to write.")
@click.option("--tag-filter", default=DEFAULT_TAG_FILTER, show_default=True)
@click.option(
    "--versions",
    type=click.Choice(["latest_per_root_block", "all_versions"]),
    default="latest_per_root_block",
    show_default=True,
)
def ingest_cmd(posts, blocks, refs, out, tag_filter, versions):
    """Build the snippet corpus from dump files."""
    try:
        snippets, summary = ingest(posts, blocks, refs, tag_filter, versions)
    except IngestError as e:
        raise click.ClickException(str(e)) from e
    write_corpus(snippets, out)
    _emit(summary)


@main.command("top-imports")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "--top", default=40, show_default=True, type=click.IntRange(min=1))
def top_imports_cmd(corpus, top):
    """Most imported top-level modules, for pre-provisioning environments."""
    for name, count in top_imports(read_corpus(corpus), top):
        click.echo(f"{name}\t{count}")


@main.command("export-taxonomy")
def export_taxonomy_cmd():
    """Print the versioned status-code table as JSON."""
    click.echo(taxonomy_json())


@main.command("serve")
@click.option("--store", default="snipex.db", show_default=True, help="SQLite path or database URL.")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), help="Corpus to load as jobs.")
@click.option("--interpreters", default="py2,py3", show_default=True, help="Interpreter ids per job.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--max-job-attempts", default=3, show_default=True, type=click.IntRange(min=1))
def serve_cmd(store, corpus, interpreters, host, port, max_job_attempts):
    """Run the coordinator HTTP service."""
    import uvicorn

    from .coordinator import Coordinator, create_app
    from .store import JobStore

    coordinator = Coordinator(JobStore(store), max_job_attempts=max_job_attempts)
    if corpus:
        ids = [i.strip() for i in interpreters.split(",") if i.strip()]
        added = coordinator.load_jobs(read_corpus(corpus), ids)
        logger.warning("loaded %d new jobs from %s", added, corpus)
    uvicorn.run(create_app(coordinator), host=host, port=port, log_level="warning")


@main.command("work")
@click.option("--api", required=True, help="Coordinator base URL, e.g. http://127.0.0.1:8000")
@click.option("--worker-id", default=lambda: f"{socket.gethostname()}-{os.getpid()}")
@click.option("--parallelism", type=click.IntRange(min=1), help="Concurrent evaluations [default: cores/2].")
@click.option("--configs", "configs_path", type=click.Path(exists=True, dir_okay=False), help="Interpreter configs JSON.")
@click.option("--lease-seconds", default=120.0, show_default=True, type=click.FloatRange(min=0, min_open=True))
@click.option("--idle-shutdown", default=60.0, show_default=True, type=click.FloatRange(min=0))
@click.option("--max-installs", default=5, show_default=True, type=click.IntRange(min=1))
def work_cmd(api, worker_id, parallelism, configs_path, lease_seconds, idle_shutdown, max_installs):
    """Lease jobs from a coordinator, evaluate them and submit results."""
    from .coordinator import HttpClient
    from .worker import Worker, WorkerStartupError, self_test

    configs = _configs(configs_path)
    try:
        self_test(configs)
    except WorkerStartupError as e:
        raise click.ClickException(str(e)) from e
    client = HttpClient(api)
    worker = Worker(
        client,
        worker_id,
        configs,
        parallelism=parallelism,
        lease_seconds=lease_seconds,
        idle_shutdown_after=idle_shutdown,
        max_installs=max_installs,
    )
    signal.signal(signal.SIGTERM, lambda *_: worker.stop())
    signal.signal(signal.SIGINT, lambda *_: worker.stop())
    stats = worker.run()
    client.close()
    _emit(stats)


@main.command("run-local")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--configs", "configs_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default="results.jsonl", show_default=True, type=click.Path(dir_okay=False))
@click.option("--parallelism", type=click.IntRange(min=1))
@click.option("--max-installs", default=5, show_default=True, type=click.IntRange(min=1))
@click.option("--store", default=":memory:", show_default=True, help="Where the in-process coordinator persists.")
def run_local_cmd(corpus, configs_path, out, parallelism, max_installs, store):
    """Evaluate a corpus with an in-process coordinator and worker."""
    from .worker import WorkerStartupError, run_local, self_test

    configs = _configs(configs_path)
    try:
        self_test(configs)
    except WorkerStartupError as e:
        raise click.ClickException(str(e)) from e
    stats = run_local(read_corpus(corpus), configs, out, parallelism=parallelism, store=store, max_installs=max_installs)
    _emit(stats)


@main.command("export-results")
@click.option("--store", required=True, help="SQLite path or database URL used by serve.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def export_results_cmd(store, out):
    """Write stored results as JSON lines for analyze."""
    from .coordinator import Coordinator
    from .store import JobStore

    if "://" not in store and not Path(store).exists():
        raise click.ClickException(f"store {store} does not exist; run serve and work first")
    n = Coordinator(JobStore(store)).export_results(out)
    _emit({"outcomes_written": n})


REPORTS = ("table1", "table2", "trend", "groups", "linecount", "json")


@main.command("analyze")
@click.option("--results", required=True, type=click.Path(dir_okay=False), help="Results JSONL.")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), help="Corpus for metadata missing from results.")
@click.option("--report", "report_name", type=click.Choice(REPORTS), default="json", show_default=True)
@click.option("--pair", default="py2,py3", show_default=True, help="Ordered interpreter pair.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--iterations", default=10000, show_default=True, type=click.IntRange(min=1))
@click.option("--bin", "bin_", type=click.Choice(["year", "month"]), default="year", show_default=True)
@click.option("--max-line", default=30, show_default=True, type=click.IntRange(min=1))
def analyze_cmd(results, corpus, report_name, pair, seed, iterations, bin_, max_line):
    """Compute rates, tables, trends and group comparisons from results."""
    from . import report
    from .analysis import AnalysisError, Selector, load_results

    if not Path(results).exists():
        raise click.ClickException(f"results file {results} not found; produce it with run-local or export-results")
    pair_ids = tuple(p.strip() for p in pair.split(","))
    if len(pair_ids) != 2:
        raise click.BadParameter("expected two comma-separated interpreter ids", param_hint="--pair")
    rs = load_results(results)
    if not len(rs):
        raise click.ClickException(f"{results} contains no results")
    if corpus:
        rs.attach_corpus(read_corpus(corpus))
    try:
        if report_name == "table1":
            click.echo(report.table1(rs, pair_ids))
        elif report_name == "table2":
            click.echo(report.table2(rs, pair_ids))
        elif report_name == "trend":
            click.echo(report.trends_text(rs, pair_ids, bin_))
        elif report_name == "groups":
            click.echo(report.groups_text(rs, pair_ids, iterations, seed))
        elif report_name == "linecount":
            click.echo(report.line_curve_csv(rs, Selector.overall(pair_ids), max_line), nl=False)
        else:
            _emit(report.full_report(rs, pair_ids, iterations, seed, max_line))
    except AnalysisError as e:
        raise click.ClickException(str(e)) from e


if __name__ == "__main__":
    main()
