"""Operator command line for the full pipeline.

Subcommands cover ingestion (HTML stories to JSONL), index building,
batch persona generation, paired-judgment evaluation, survey statistics,
a terminal chat REPL, the HTTP service, and composite report emission.

Errors print one machine-readable JSON line to stderr and exit with
2 (validation), 3 (I/O), or 4 (generation). All paths resolve relative
to ``--workdir``; a ``key=value`` config file supplies defaults that
explicit flags override.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path
from typing import Sequence

import click
from click.core import ParameterSource

from . import __version__
from .chat import SystemMessageConfig, answer, load_system_message, new_session
from .corpus import (
    DEFAULT_CONTAINER_SELECTOR,
    DEFAULT_MAX_CHUNK_CHARS,
    Persona,
    SuccessStory,
    apply_patch,
    chunk_markdown,
    extract_story_text,
    load_persona_dir,
    load_story_urls,
    read_stories_jsonl,
    write_stories_jsonl,
)
from .embedding import EmbedderConfig, make_embedder
from .errors import (
    CorruptFile,
    FormatVersionMismatch,
    GenerationFailed,
    NoJsonFound,
    PersonaRagError,
    RemoteUnavailable,
    WrongExampleCount,
)
from .evalstats import (
    SurveyRound,
    analysis_to_jsonable,
    analyze_judgments,
    efficiency_summary,
    load_judgments,
    load_survey,
    mean_rating,
    proportion_at_least,
    rating_distribution,
    write_efficiency_csv,
    write_mcnemar_csv,
    write_summary_json,
)
from .index import Category, DocumentRecord, IndexConfig, SearchIndex
from .index.storage import load_index, save_index
from .llm import LLMClient, RemoteLLMClient, ScriptedLLMClient
from .personagen import (
    FEW_SHOT_EXAMPLE_COUNT,
    PromptStrategy,
    batch_generate,
    read_generation_records,
    write_generation_records,
)
from .retrieval import DEFAULT_TOP_K, RetrievalConfig
from .service import ServiceState, create_app

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_GENERATION = 4

_GENERATION_ERRORS = (GenerationFailed, RemoteUnavailable, NoJsonFound)
_IO_ERRORS = (CorruptFile, FormatVersionMismatch, OSError)


def _fail(exc: BaseException, code: int) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(code)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _GENERATION_ERRORS as exc:
            _fail(exc, EXIT_GENERATION)
        except _IO_ERRORS as exc:
            _fail(exc, EXIT_IO)
        except (PersonaRagError, ValueError) as exc:
            _fail(exc, EXIT_VALIDATION)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _load_config(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _cfg(ctx: click.Context, name: str, value):
    """Config-file fallback for options the user left at their default."""
    config = ctx.obj["config"]
    if ctx.get_parameter_source(name) is ParameterSource.DEFAULT and name in config:
        raw = config[name]
        if isinstance(value, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(value, int):
            return int(raw)
        if isinstance(value, float):
            return float(raw)
        return raw
    return value


def _resolve(ctx: click.Context, path: str | None) -> Path | None:
    if path is None:
        return None
    candidate = Path(path)
    if candidate.is_absolute():
        return candidate
    return ctx.obj["workdir"] / candidate


def _make_llm(backend: str, model: str | None) -> LLMClient:
    if backend == "scripted":
        return ScriptedLLMClient(model_id=model or "scripted-mock")
    return RemoteLLMClient(model_id=model)


def _load_examples(path: Path | None) -> tuple[Persona, ...]:
    if path is None:
        return ()
    return tuple(persona for _, persona in load_persona_dir(path))


def _system_config(path: Path | None) -> SystemMessageConfig:
    if path is not None:
        return load_system_message(path)
    from importlib import resources

    ref = resources.files("persona_rag") / "templates" / "system_message.txt"
    with resources.as_file(ref) as file:
        return load_system_message(file)


@click.group()
@click.version_option(version=__version__, prog_name="persona-rag")
@click.option("--workdir", default=".", show_default=True,
              help="Base directory all relative paths resolve against.")
@click.option("--config", "config_path", default=None,
              help="key=value file supplying option defaults.")
@click.option("--seed", default=0, show_default=True, help="Seed for all randomized steps.")
@click.option("--fixed-time", default=None,
              help="ISO timestamp replacing wall-clock time for reproducible output.")
@click.pass_context
def main(ctx: click.Context, workdir: str, config_path: str | None, seed: int,
         fixed_time: str | None) -> None:
    """Persona generation, hybrid retrieval, and paired-evaluation workbench."""
    base = Path(workdir).resolve()
    config_file = None
    if config_path is not None:
        candidate = Path(config_path)
        config_file = candidate if candidate.is_absolute() else base / candidate
    try:
        config = _load_config(config_file)
    except OSError as exc:
        _fail(exc, EXIT_IO)
    except ValueError as exc:
        _fail(exc, EXIT_VALIDATION)
    ctx.obj = {"workdir": base, "config": config, "seed": seed, "fixed_time": fixed_time}


# -- ingest -----------------------------------------------------------------


@main.command()
@click.option("--urls", "urls_path", required=True, help="story_id,url,segment CSV.")
@click.option("--html-dir", required=True, help="Directory of {story_id}.html pages.")
@click.option("--patch-dir", default=None,
              help="Directory of {story_id}.txt correction paragraphs.")
@click.option("--selector", default=DEFAULT_CONTAINER_SELECTOR, show_default=True,
              help="Story container selector (tag, #id, or .class).")
@click.option("--out", "out_path", required=True, help="Output stories JSONL.")
@click.pass_context
@_guarded
def ingest(ctx: click.Context, urls_path: str, html_dir: str, patch_dir: str | None,
           selector: str, out_path: str) -> None:
    """Extract success stories from local HTML pages into JSONL."""
    selector = _cfg(ctx, "selector", selector)
    rows = load_story_urls(_resolve(ctx, urls_path))
    html_base = _resolve(ctx, html_dir)
    patch_base = _resolve(ctx, patch_dir)
    stories = []
    for story_id, url, segment in rows:
        html = (html_base / f"{story_id}.html").read_text(encoding="utf-8")
        paragraphs = extract_story_text(html, container_selector=selector)
        if patch_base is not None:
            patch_file = patch_base / f"{story_id}.txt"
            if patch_file.exists():
                paragraphs = apply_patch(paragraphs, patch_file.read_text(encoding="utf-8"))
        stories.append(SuccessStory(
            story_id=story_id, source_url=url, segment=segment,
            paragraphs=tuple(paragraphs),
        ))
    out = _resolve(ctx, out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_stories_jsonl(stories, out)
    click.echo(f"ingested {len(stories)} stories -> {out}")


# -- index ------------------------------------------------------------------


@main.command(name="index")
@click.option("--personas", "personas_dir", default=None, help="Directory of persona *.json.")
@click.option("--general", "general_dir", default=None,
              help="Directory of general-knowledge *.md, chunked at headings.")
@click.option("--stories", "stories_path", default=None, help="Stories JSONL from ingest.")
@click.option("--out", "out_path", required=True, help="Output index file.")
@click.option("--dimension", default=1536, show_default=True, help="Embedding dimension.")
@click.option("--backend", default="mock", show_default=True,
              type=click.Choice(["mock", "remote"]), help="Embedding backend.")
@click.option("--model", default="mock-embedder", show_default=True, help="Embedding model id.")
@click.option("--max-chunk-chars", default=DEFAULT_MAX_CHUNK_CHARS, show_default=True)
@click.pass_context
@_guarded
def index_cmd(ctx: click.Context, personas_dir: str | None, general_dir: str | None,
              stories_path: str | None, out_path: str, dimension: int, backend: str,
              model: str, max_chunk_chars: int) -> None:
    """Build and save a search index from personas, knowledge docs, and stories."""
    dimension = _cfg(ctx, "dimension", dimension)
    backend = _cfg(ctx, "backend", backend)
    model = _cfg(ctx, "model", model)
    if personas_dir is None and general_dir is None and stories_path is None:
        raise ValueError("provide at least one of --personas, --general, --stories")
    seed = ctx.obj["seed"]
    documents: list[DocumentRecord] = []
    if personas_dir is not None:
        for stem, persona in load_persona_dir(_resolve(ctx, personas_dir)):
            documents.append(DocumentRecord(
                id=f"persona:{stem}", title=persona.name, category=Category.PERSONA,
                content=persona.content_text(),
            ))
    if general_dir is not None:
        for file in sorted(_resolve(ctx, general_dir).glob("*.md")):
            chunks = chunk_markdown(file.read_text(encoding="utf-8"), file.stem,
                                    max_chunk_chars=max_chunk_chars)
            for chunk in chunks:
                title = " / ".join(chunk.heading_path) if chunk.heading_path else file.stem
                documents.append(DocumentRecord(
                    id=f"general:{chunk.chunk_id}", title=title,
                    category=Category.GENERAL_INFORMATION, content=chunk.body,
                ))
    if stories_path is not None:
        for story in read_stories_jsonl(_resolve(ctx, stories_path)):
            documents.append(DocumentRecord(
                id=f"story:{story.story_id}", title=f"Success story {story.story_id}",
                category=Category.SUCCESS_STORY, content=story.full_text,
            ))
    embedder = make_embedder(EmbedderConfig(
        backend=backend, model_id=model, dimension=dimension, seed=seed,
    ))
    search_index = SearchIndex(embedder, IndexConfig(dimension=dimension, seed=seed))
    search_index.upsert_documents(documents)
    out = _resolve(ctx, out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_index(search_index, out)
    by_category = {c.value: len(search_index.list_documents(c)) for c in Category}
    click.echo(f"indexed {len(search_index)} documents {by_category} -> {out}")


# -- generate ---------------------------------------------------------------


@main.command()
@click.option("--stories", "stories_path", required=True, help="Stories JSONL from ingest.")
@click.option("--strategy", default="both", show_default=True,
              type=click.Choice(["few_shot", "cot", "both"]))
@click.option("--examples", "examples_dir", default=None,
              help="Directory with exactly three example persona *.json (few-shot).")
@click.option("--backend", default="scripted", show_default=True,
              type=click.Choice(["scripted", "remote"]), help="LLM backend.")
@click.option("--model", default=None, help="LLM model id.")
@click.option("--parallel", default=1, show_default=True, help="Concurrent generations.")
@click.option("--out", "out_path", required=True, help="Output generation-records JSONL.")
@click.pass_context
@_guarded
def generate(ctx: click.Context, stories_path: str, strategy: str, examples_dir: str | None,
             backend: str, model: str | None, parallel: int, out_path: str) -> None:
    """Generate personas for every story with one or both prompting strategies."""
    backend = _cfg(ctx, "backend", backend)
    parallel = _cfg(ctx, "parallel", parallel)
    strategies = ([PromptStrategy.FEW_SHOT, PromptStrategy.COT] if strategy == "both"
                  else [PromptStrategy(strategy)])
    examples = _load_examples(_resolve(ctx, examples_dir))
    if PromptStrategy.FEW_SHOT in strategies and len(examples) != FEW_SHOT_EXAMPLE_COUNT:
        raise WrongExampleCount(
            f"few-shot prompts need exactly {FEW_SHOT_EXAMPLE_COUNT} examples, "
            f"got {len(examples)}"
        )
    stories = read_stories_jsonl(_resolve(ctx, stories_path))
    client = _make_llm(backend, model)
    kwargs = {}
    fixed_time = ctx.obj["fixed_time"]
    if fixed_time is not None:
        kwargs["now"] = lambda: fixed_time
        kwargs["clock"] = lambda: 0.0
    result = batch_generate(stories, strategies, client, examples=examples,
                            parallelism=parallel, **kwargs)
    out = _resolve(ctx, out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_generation_records(result.records, out)
    click.echo(f"generated {len(result.records)} personas "
               f"({len(result.failures)} failures) -> {out}")
    if result.failures:
        for failure in result.failures:
            click.echo(json.dumps({
                "error": "GenerationFailed", "story_id": failure.story_id,
                "strategy": failure.strategy.value, "message": failure.message,
            }), err=True)
        sys.exit(EXIT_GENERATION)


# -- evaluate ---------------------------------------------------------------


def _echo_mcnemar(analysis) -> None:
    for metric in sorted(analysis, key=lambda m: m.value):
        table, result = analysis[metric]
        click.echo(
            f"{metric.value}: b={table.b} c={table.c} variant={result.variant} "
            f"statistic={result.statistic:.4f} p={result.p_value:.4f} "
            f"significant={str(result.significant).lower()}"
        )


@main.command()
@click.option("--judgments", "judgments_path", required=True, help="Paired judgments CSV.")
@click.option("--policy", default="auto", show_default=True,
              type=click.Choice(["auto", "exact", "chi_square"]))
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--out", "out_dir", default=".", show_default=True, help="Report directory.")
@click.pass_context
@_guarded
def evaluate(ctx: click.Context, judgments_path: str, policy: str, alpha: float,
             out_dir: str) -> None:
    """Paired McNemar analysis of the strategy judgments, one test per metric."""
    policy = _cfg(ctx, "policy", policy)
    alpha = _cfg(ctx, "alpha", alpha)
    judgments = load_judgments(_resolve(ctx, judgments_path))
    analysis = analyze_judgments(judgments, policy=policy, alpha=alpha)
    out = _resolve(ctx, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mcnemar_csv(analysis, out / "mcnemar.csv")
    write_summary_json({"schema_version": 1, "mcnemar": analysis_to_jsonable(analysis)},
                       out / "summary.json")
    _echo_mcnemar(analysis)


# -- survey -----------------------------------------------------------------


def _survey_report(responses, proportions: Sequence[str]):
    """Per-question/round means and histograms plus requested label proportions."""
    questions = sorted({r.question_id for r in responses})
    rounds = [SurveyRound.INITIAL, SurveyRound.AUGMENTED]
    means = []
    distributions = []
    for question in questions:
        for survey_round in rounds:
            subset = [r for r in responses
                      if r.question_id == question and r.survey_round is survey_round]
            answered = [r for r in subset if r.answer.strip()]
            if not answered:
                continue
            try:
                mean = mean_rating(responses, question, survey_round)
            except PersonaRagError:
                mean = None
            means.append((question, survey_round.value, len(answered), mean))
            for answer, count in rating_distribution(responses, question, survey_round).items():
                distributions.append((question, survey_round.value, answer, count))
    proportion_rows = []
    for spec_item in proportions:
        if "=" not in spec_item:
            raise ValueError(f"--proportion expects question=label|label, got {spec_item!r}")
        question, _, labels_raw = spec_item.partition("=")
        labels = tuple(label for label in labels_raw.split("|") if label)
        if not labels:
            raise ValueError(f"--proportion {spec_item!r} lists no labels")
        for survey_round in rounds:
            if any(r.question_id == question and r.survey_round is survey_round
                   and r.answer.strip() for r in responses):
                value = proportion_at_least(responses, question, labels, survey_round)
                proportion_rows.append((question, survey_round.value, "|".join(labels), value))
    return means, distributions, proportion_rows


def _write_survey_csvs(out: Path, means, distributions, proportion_rows) -> None:
    with open(out / "survey_means.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["question_id", "round", "n", "mean"])
        for question, round_value, count, mean in means:
            writer.writerow([question, round_value, count,
                             "" if mean is None else f"{mean:.4f}"])
    with open(out / "survey_distribution.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["question_id", "round", "answer", "count"])
        writer.writerows(distributions)
    if proportion_rows:
        with open(out / "survey_proportions.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["question_id", "round", "labels", "proportion"])
            for question, round_value, labels, value in proportion_rows:
                writer.writerow([question, round_value, labels, f"{value:.4f}"])


def _survey_summary_section(means, proportion_rows) -> dict:
    return {
        "means": [
            {"question_id": q, "round": rv, "n": n, "mean": mean}
            for q, rv, n, mean in means
        ],
        "proportions": [
            {"question_id": q, "round": rv, "labels": labels, "proportion": value}
            for q, rv, labels, value in proportion_rows
        ],
    }


@main.command()
@click.option("--responses", "responses_path", required=True, help="Survey responses CSV.")
@click.option("--proportion", "proportions", multiple=True,
              help="question=label|label rows to report as proportions.")
@click.option("--out", "out_dir", default=".", show_default=True, help="Report directory.")
@click.pass_context
@_guarded
def survey(ctx: click.Context, responses_path: str, proportions: tuple[str, ...],
           out_dir: str) -> None:
    """Descriptive statistics over the survey responses."""
    responses = load_survey(_resolve(ctx, responses_path))
    means, distributions, proportion_rows = _survey_report(responses, proportions)
    out = _resolve(ctx, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_survey_csvs(out, means, distributions, proportion_rows)
    write_summary_json(
        {"schema_version": 1, "survey": _survey_summary_section(means, proportion_rows)},
        out / "summary.json",
    )
    for question, round_value, count, mean in means:
        shown = "n/a" if mean is None else f"{mean:.4f}"
        click.echo(f"{question} [{round_value}]: n={count} mean={shown}")
    for question, round_value, labels, value in proportion_rows:
        click.echo(f"{question} [{round_value}] in {{{labels}}}: {value:.4f}")


# -- chat -------------------------------------------------------------------


@main.command()
@click.option("--index", "index_path", required=True, help="Saved index file.")
@click.option("--backend", default="scripted", show_default=True,
              type=click.Choice(["scripted", "remote"]), help="LLM backend.")
@click.option("--model", default=None, help="LLM model id.")
@click.option("--system-message", "system_path", default=None,
              help="System-message file ([role]/[tone]/[guidelines] sections).")
@click.option("--k", default=DEFAULT_TOP_K, show_default=True, help="Documents per answer.")
@click.pass_context
@_guarded
def chat(ctx: click.Context, index_path: str, backend: str, model: str | None,
         system_path: str | None, k: int) -> None:
    """Interactive REPL answering questions over a saved index."""
    backend = _cfg(ctx, "backend", backend)
    k = _cfg(ctx, "k", k)
    search_index = load_index(_resolve(ctx, index_path))
    client = _make_llm(backend, model)
    system_config = _system_config(_resolve(ctx, system_path))
    retrieval_config = RetrievalConfig(top_k=k)
    session = new_session()
    click.echo(f"persona-rag chat over {len(search_index)} documents. "
               "Blank line or /quit exits.", err=True)
    for line in sys.stdin:
        query = line.strip()
        if not query or query == "/quit":
            break
        result = answer(session, query, search_index, retrieval_config, client, system_config)
        click.echo(result.answer_text)
        if result.citations:
            joined = "; ".join(f"{doc_id} ({title})" for doc_id, title in result.citations)
            click.echo(f"sources: {joined}")
        click.echo("")


# -- serve ------------------------------------------------------------------


@main.command()
@click.option("--index", "index_path", envvar="PERSONA_RAG_INDEX", required=True,
              help="Saved index file (env PERSONA_RAG_INDEX).")
@click.option("--addr", envvar="PERSONA_RAG_ADDR", default="127.0.0.1:8000",
              show_default=True, help="host:port to bind (env PERSONA_RAG_ADDR).")
@click.option("--llm-backend", default="scripted", show_default=True,
              type=click.Choice(["scripted", "remote"]))
@click.option("--model", default=None, help="LLM model id.")
@click.option("--system-message", "system_path", default=None)
@click.option("--stories", "stories_path", default=None,
              help="Stories JSONL enabling generation by story_id.")
@click.option("--examples", "examples_dir", default=None,
              help="Directory with three example persona *.json (few-shot).")
@click.option("--api-key", default=None, help="Require this X-Api-Key on every request.")
@click.option("--cors-origin", "cors_origins", multiple=True, help="Allowed CORS origin.")
@click.option("--transcript", "transcript_path", default=None,
              help="JSONL file receiving every chat exchange.")
@click.option("--session-ttl", default=3600.0, show_default=True,
              help="Idle session lifetime in seconds.")
@click.option("--init", "init_empty", is_flag=True,
              help="Create an empty index at --index when the file is missing.")
@click.option("--dimension", default=1536, show_default=True,
              help="Embedding dimension for --init.")
@click.pass_context
@_guarded
def serve(ctx: click.Context, index_path: str, addr: str, llm_backend: str,
          model: str | None, system_path: str | None, stories_path: str | None,
          examples_dir: str | None, api_key: str | None,
          cors_origins: tuple[str, ...], transcript_path: str | None,
          session_ttl: float, init_empty: bool, dimension: int) -> None:
    """Start the HTTP service over a saved index."""
    addr = _cfg(ctx, "addr", addr)
    dimension = _cfg(ctx, "dimension", dimension)
    index_file = _resolve(ctx, index_path)
    if not index_file.exists() and init_empty:
        embedder = make_embedder(EmbedderConfig(
            backend="mock", model_id="mock-embedder", dimension=dimension,
            seed=ctx.obj["seed"],
        ))
        empty = SearchIndex(embedder, IndexConfig(dimension=dimension, seed=ctx.obj["seed"]))
        index_file.parent.mkdir(parents=True, exist_ok=True)
        save_index(empty, index_file)
    search_index = load_index(index_file)
    stories = {}
    if stories_path is not None:
        stories = {s.story_id: s for s in read_stories_jsonl(_resolve(ctx, stories_path))}
    state = ServiceState(
        index=search_index,
        llm_client=_make_llm(llm_backend, model),
        system_config=_system_config(_resolve(ctx, system_path)),
        examples=_load_examples(_resolve(ctx, examples_dir)),
        stories=stories,
        api_key=api_key,
        cors_origins=tuple(cors_origins),
        transcript_path=_resolve(ctx, transcript_path),
        session_ttl_seconds=session_ttl,
    )
    host, _, port_raw = addr.rpartition(":")
    if not host or not port_raw.isdigit():
        raise ValueError(f"--addr must be host:port, got {addr!r}")
    app = create_app(state)
    import uvicorn

    click.echo(f"serving {len(search_index)} documents on http://{addr}", err=True)
    uvicorn.run(app, host=host, port=int(port_raw), log_level="warning")


# -- report -----------------------------------------------------------------


@main.command()
@click.option("--records", "records_path", default=None, help="Generation records JSONL.")
@click.option("--judgments", "judgments_path", default=None, help="Paired judgments CSV.")
@click.option("--survey", "survey_path", default=None, help="Survey responses CSV.")
@click.option("--proportion", "proportions", multiple=True,
              help="question=label|label survey proportions.")
@click.option("--policy", default="auto", show_default=True,
              type=click.Choice(["auto", "exact", "chi_square"]))
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--out", "out_dir", default=".", show_default=True, help="Report directory.")
@click.pass_context
@_guarded
def report(ctx: click.Context, records_path: str | None, judgments_path: str | None,
           survey_path: str | None, proportions: tuple[str, ...], policy: str,
           alpha: float, out_dir: str) -> None:
    """Emit every plot-ready CSV plus one JSON summary for the inputs given."""
    if records_path is None and judgments_path is None and survey_path is None:
        raise ValueError("provide at least one of --records, --judgments, --survey")
    out = _resolve(ctx, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict[str, object] = {"schema_version": 1}
    if judgments_path is not None:
        judgments = load_judgments(_resolve(ctx, judgments_path))
        analysis = analyze_judgments(judgments, policy=policy, alpha=alpha)
        write_mcnemar_csv(analysis, out / "mcnemar.csv")
        summary["mcnemar"] = analysis_to_jsonable(analysis)
        _echo_mcnemar(analysis)
    if records_path is not None:
        records = read_generation_records(_resolve(ctx, records_path))
        efficiency = efficiency_summary(records)
        write_efficiency_csv(efficiency, out / "efficiency.csv")
        summary["efficiency"] = {
            strategy.value: {
                "mean_elapsed_seconds": row.mean_elapsed_seconds,
                "mean_total_tokens": row.mean_total_tokens,
                "count": row.count,
            }
            for strategy, row in efficiency.items()
        }
        for strategy, row in efficiency.items():
            click.echo(f"{strategy.value}: mean_elapsed={row.mean_elapsed_seconds:.4f}s "
                       f"mean_tokens={row.mean_total_tokens:.2f} n={row.count}")
    if survey_path is not None:
        responses = load_survey(_resolve(ctx, survey_path))
        means, distributions, proportion_rows = _survey_report(responses, proportions)
        _write_survey_csvs(out, means, distributions, proportion_rows)
        summary["survey"] = _survey_summary_section(means, proportion_rows)
    write_summary_json(summary, out / "summary.json")
    click.echo(f"report -> {out}")
