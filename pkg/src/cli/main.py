"""
Command-line entry point: `python -m src.cli.main <command> ...`.

Commands:
    summarize  run one strategy over one entity record or one book
    bench      run strategies over an entity dataset and build the benchmark table
    eval       score a saved run (entity P/R/F1, or book coherence)
    chunk      split a text file into token-limited chunks
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

from src.config import AppConfig, DedupMode, Matcher, OutputFormat, Task, build_run_config, parse_strategies
from src.data.fetch_data import (
    load_book_text,
    load_entity_record,
    load_entity_records,
    load_run_result,
    write_json,
)
from src.errors import ConfigError, PipelineError, SummarizerError
from src.eval.coherence import coherence_eval
from src.eval.metrics import build_matcher
from src.eval.report import (
    build_benchmark_table,
    evaluate_run,
    format_table,
    per_turn_mean,
    turn_table,
    write_table_csv,
)
from src.models.memory import FallbackMode, chunk_document
from src.models.schema import load_schema
from src.pipeline.rendering import render_text_summary
from src.pipeline.strategies import STORY_SUBJECT, run_result_to_dict, run_strategy
from src.ui.visualization_helpers import plot_turn_curves

logger = logging.getLogger(__name__)


#####################################################
# ARGUMENTS
#####################################################

def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("-v", "--verbose", action="store_true", help="Shortcut for --log-level INFO")
    common.add_argument("--out", help="Output JSON file")
    common.add_argument("--deterministic", action="store_true", help="Omit the generated_at timestamp")
    common.add_argument("--tokenizer", default="bytes", choices=["bytes", "tiktoken"])
    return common


def _run_parser():
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--task", default="entity", choices=[t.value for t in Task])
    run.add_argument("--schema", help="entity, book, or a schema JSON file (defaults to the task)")
    run.add_argument("--backend", required=True, help="http:<url>, scripted:<file> or record:<file>")
    run.add_argument("--endpoint", help="HTTP endpoint for record mode (else $SUMMARIZER_ENDPOINT)")
    run.add_argument("--temperature", type=float, default=0.8)
    run.add_argument("--token-budget", type=int, help="Memory token limit K")
    run.add_argument("--chunk-limit", type=int, help="Book chunk size in tokens (default 2000)")
    run.add_argument("--max-retries", type=int, default=3, help="Compression attempts before the fallback")
    run.add_argument("--fallback", default="truncate-values", choices=[f.value for f in FallbackMode])
    run.add_argument("--gm-dedup", default="per-turn", choices=[d.value for d in DedupMode])
    run.add_argument("--final-format", choices=[f.value for f in OutputFormat])
    return run


def build_parser():
    parser = argparse.ArgumentParser(prog="summarizer", description="Structured-memory incremental summarization")
    commands = parser.add_subparsers(dest="command", required=True)
    common, run = _common_parser(), _run_parser()

    summarize = commands.add_parser("summarize", parents=[common, run], help="Run one strategy over one stream")
    summarize.add_argument("--strategy", required=True)
    summarize.add_argument("--in", dest="input", required=True, help="Entity record JSON or book text")

    bench = commands.add_parser("bench", parents=[common, run], help="Benchmark strategies over a dataset")
    bench.add_argument("--strategies", default="all", help="Comma-separated strategies or 'all'")
    bench.add_argument("--in", "--dataset", dest="input", required=True, help="JSON-lines entity dataset")
    bench.add_argument("--matcher", default="exact", choices=[m.value for m in Matcher])
    bench.add_argument("--evaluator", help="Backend spec for the llm matcher")
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--csv", help="Write the table as CSV")
    bench.add_argument("--plot", help="Write per-turn charts as HTML")

    evaluate = commands.add_parser("eval", parents=[common], help="Score a saved run")
    evaluate.add_argument("--run", required=True, help="Run file written by summarize")
    evaluate.add_argument("--gold", help="Entity record(s) holding the gold summaries")
    evaluate.add_argument("--matcher", default="exact", choices=[m.value for m in Matcher])
    evaluate.add_argument("--evaluator", help="Backend spec for coherence or the llm matcher")
    evaluate.add_argument("--endpoint", help="HTTP endpoint for record mode (else $SUMMARIZER_ENDPOINT)")
    evaluate.add_argument("--workers", type=int, default=1)
    evaluate.add_argument("--temperature", type=float, default=0.8)
    evaluate.add_argument("--csv", help="Write the per-turn table as CSV")

    chunk = commands.add_parser("chunk", parents=[common], help="Split a text into token-limited chunks")
    chunk.add_argument("--in", dest="input", required=True)
    chunk.add_argument("--limit", type=int, default=2000)
    return parser


def _configure_logging(args):
    level = "INFO" if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(level=getattr(logging, level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _app_config(args):
    return AppConfig.from_env(
        backend=getattr(args, "backend", None),
        endpoint=getattr(args, "endpoint", None),
        evaluator=getattr(args, "evaluator", None),
        tokenizer=args.tokenizer,
        matcher=getattr(args, "matcher", "exact"),
        workers=getattr(args, "workers", 1),
        deterministic=args.deterministic,
        out=args.out,
        csv=getattr(args, "csv", None),
        plot=getattr(args, "plot", None),
    )


def _run_config(args, strategy):
    schema = load_schema(args.schema or args.task)
    return build_run_config(
        strategy=strategy,
        summary_schema=schema,
        task=args.task,
        temperature=args.temperature,
        token_budget=args.token_budget,
        chunk_limit=args.chunk_limit,
        max_retries=args.max_retries,
        fallback=args.fallback,
        gm_dedup=args.gm_dedup,
        final_format=args.final_format,
    )


def _stamp(document, app):
    if not app.deterministic:
        document["generated_at"] = datetime.now(timezone.utc).isoformat()
    return document


#####################################################
# COMMANDS
#####################################################

def cmd_summarize(args):
    """
    Runs one strategy over one entity record or book and writes the run document.

    Returns:
        int: 0 on success
    """
    app = _app_config(args)
    strategies = parse_strategies(args.strategy)
    if len(strategies) != 1:
        raise ConfigError("summarize takes exactly one --strategy")
    cfg = _run_config(args, strategies[0])
    backend = app.make_backend()
    tokenizer = app.make_tokenizer()

    if cfg.task is Task.BOOK:
        source, subject = load_book_text(args.input), STORY_SUBJECT
    else:
        record = load_entity_record(args.input)
        source, subject = record.paragraphs, record.entity

    try:
        result = run_strategy(source, backend, cfg, subject, tokenizer)
    except PipelineError as exc:
        if app.out and exc.partial is not None:
            write_json(app.out, _stamp(run_result_to_dict(exc.partial, cfg), app))
            logger.error("Wrote %d completed turns to %s", len(exc.partial.turns), app.out)
        raise

    document = _stamp(run_result_to_dict(result, cfg), app)
    if app.out:
        write_json(app.out, document)
    print(f"{cfg.strategy.value}: {len(result.turns)} turns, last memory {result.turns[-1].memory_tokens} tokens")
    return 0


def _bench_job(job):
    strategy, record, args, app, backend, evaluator, tokenizer = job
    cfg = _run_config(args, strategy)
    result = run_strategy(record.paragraphs, backend, cfg, record.entity, tokenizer)
    matcher = build_matcher(app.matcher.value, evaluator, record.entity)
    return evaluate_run(result, record, matcher)


def cmd_bench(args):
    """
    Runs every record under each strategy and reports start / last / Avg P, R, F1.

    Returns:
        int: 0 on success
    """
    app = _app_config(args)
    strategies = parse_strategies(args.strategies)
    records = load_entity_records(args.input)
    backend = app.make_backend()
    evaluator = app.make_evaluator()
    tokenizer = app.make_tokenizer()
    for strategy in strategies:
        _run_config(args, strategy)

    jobs = [(s, r, args, app, backend, evaluator, tokenizer) for s in strategies for r in records]
    with ThreadPoolExecutor(max_workers=app.workers) as pool:
        scores = list(pool.map(_bench_job, jobs))

    by_strategy = {}
    for score in scores:
        by_strategy.setdefault(score.strategy, []).append(score)
    table = build_benchmark_table(by_strategy)
    print(format_table(table))

    if app.csv:
        write_table_csv(table, app.csv)
    if app.plot:
        plot_turn_curves(
            {name: per_turn_mean([s.per_turn for s in items]) for name, items in by_strategy.items()},
            {name: per_turn_mean([list(s.tokens) for s in items]) for name, items in by_strategy.items()},
            app.plot,
            args.token_budget,
        )
    if app.out:
        document = {
            "strategies": [s.value for s in strategies],
            "matcher": app.matcher.value,
            "table": table.to_dict(orient="records"),
            "entities": [score.to_dict() for score in scores],
        }
        write_json(app.out, _stamp(document, app))
    return 0


def _pick_record(records, subject, path):
    for record in records:
        if record.entity == subject:
            return record
    if len(records) == 1:
        return records[0]
    raise ConfigError(f"No record for '{subject}' in {path}")


def cmd_eval(args):
    """
    Scores a saved run: P/R/F1 per turn for entity runs, coherence for book runs.

    Returns:
        int: 0 on success
    """
    app = _app_config(args)
    result, raw = load_run_result(args.run)
    task = Task((raw.get("config") or {}).get("task", Task.ENTITY.value))

    if task is Task.BOOK:
        evaluator = app.make_evaluator()
        if evaluator is None:
            raise ConfigError("Book runs are scored for coherence and need --evaluator")
        summary = result.final_summary
        text = summary if isinstance(summary, str) else render_text_summary(summary or {})
        report = coherence_eval(text, evaluator, app.workers, args.temperature)
        print(f"coherence_score {report.coherence_score:.3f} (confusion_ratio {report.confusion_ratio:.3f}, "
              f"{len(report.sentences)} sentences)")
        document = {"task": task.value, "strategy": result.strategy, "coherence": report.to_dict()}
    else:
        if not args.gold:
            raise ConfigError("Entity runs need --gold")
        record = _pick_record(load_entity_records(args.gold), result.subject, args.gold)
        matcher = build_matcher(app.matcher.value, app.make_evaluator(), record.entity)
        score = evaluate_run(result, record, matcher)
        table = turn_table(score)
        print(format_table(table))
        aggregate = score.aggregate
        print(f"start F1 {100 * aggregate.start.f1:.1f}  last F1 {100 * aggregate.last.f1:.1f}  "
              f"Avg F1 {100 * aggregate.avg.f1:.1f}")
        if app.csv:
            write_table_csv(table, app.csv)
        document = {"task": task.value, **score.to_dict()}

    if app.out:
        write_json(app.out, _stamp(document, app))
    return 0


def cmd_chunk(args):
    """
    Splits a text file into chunks of at most --limit tokens.

    Returns:
        int: 0 on success
    """
    app = _app_config(args)
    if args.limit < 1:
        raise ConfigError("--limit must be at least 1")
    chunks = chunk_document(app.make_tokenizer(), load_book_text(args.input), args.limit)
    for chunk in chunks:
        print(f"{chunk.index}\t{chunk.token_count}\t{len(chunk.text)}")
    if app.out:
        document = {
            "limit": args.limit,
            "tokenizer": app.tokenizer,
            "chunks": [{"index": c.index, "token_count": c.token_count, "text": c.text} for c in chunks],
        }
        write_json(app.out, _stamp(document, app))
    return 0


COMMANDS = {"summarize": cmd_summarize, "bench": cmd_bench, "eval": cmd_eval, "chunk": cmd_chunk}


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except SummarizerError as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
