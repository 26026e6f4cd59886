"""Command-line entry point: ``evcorr run | report | export-graph | synth``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .ingest import EventSource, SourceError
from .pipeline import (
    Config,
    ConfigError,
    StoreError,
    export_stored_graph,
    parse_batch_range,
    read_config_file,
    report,
    run_pipeline,
)

EXIT_OK, EXIT_USAGE, EXIT_SOURCE, EXIT_STORE = 0, 1, 2, 3

log = logging.getLogger("evcorr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evcorr", description="Hierarchical network event correlation.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="correlate an event stream batch by batch")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--input", help="event file, or - for standard input")
    src.add_argument("--listen", metavar="HOST:PORT", help="accept one TCP connection of newline-delimited records")
    run.add_argument("--config", type=Path, help="flat key = value file; flags override it")
    run.add_argument("--format", choices=("jsonl", "csv"))
    run.add_argument("--batch-size", type=int)
    run.add_argument("--support", type=int)
    run.add_argument("--flag-threshold", type=int)
    run.add_argument("--out", type=Path, help="store directory for per-batch results")
    run.add_argument("--top-n", type=int)
    run.add_argument("--sort-by", choices=("pkts", "bytes"))
    run.add_argument("--flush-timeout", type=float, metavar="S")
    run.add_argument("--keep-raw", action="store_true", default=None, help="also persist raw events")

    rep = sub.add_parser("report", help="tabulate persisted analytics")
    rep.add_argument("--store", type=Path, required=True)
    rep.add_argument("--top-n", type=int, default=10)
    rep.add_argument("--sort-by", choices=("pkts", "bytes"), default="pkts")
    rep.add_argument("--batches", metavar="A..B")
    rep.add_argument("--figures", type=Path, metavar="DIR", help="also render PNG figures into DIR")
    rep.add_argument("--csv", action="store_true", help="comma-delimited instead of tab-delimited")

    exp = sub.add_parser("export-graph", help="print a persisted graph")
    exp.add_argument("--store", type=Path, required=True)
    exp.add_argument("--batch", type=int, required=True)
    exp.add_argument("--kind", choices=("gflow", "ghyper"), required=True)
    exp.add_argument("--format", choices=("dot", "json"), default="dot")

    syn = sub.add_parser("synth", help="write a synthetic trace to standard output")
    syn.add_argument("--events", type=int, default=10_000)
    syn.add_argument("--dup", type=int, default=8, help="occurrences of each distinct five-tuple")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    return p


def config_from_args(args) -> Config:
    values = read_config_file(args.config) if args.config else {}
    flags = {
        "batch_size": args.batch_size,
        "support": args.support,
        "flag_threshold": args.flag_threshold,
        "flush_timeout_secs": args.flush_timeout,
        "top_n": args.top_n,
        "sort_key": args.sort_by,
        "keep_raw": args.keep_raw,
        "out_dir": args.out,
        "format": args.format,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.input is not None:
        values.pop("listen", None)
        values["input"] = args.input
    elif args.listen is not None:
        values.pop("input", None)
        values["listen"] = args.listen

    fmt = values.pop("format", "jsonl")
    if fmt not in ("jsonl", "csv"):
        raise ConfigError(f"unknown format {fmt!r}")
    inp, listen = values.pop("input", None), values.pop("listen", None)
    if inp and listen:
        raise ConfigError("give either input or listen, not both")
    if listen:
        source = EventSource.tcp(listen, fmt)
    elif inp == "-":
        source = EventSource.stdin(fmt)
    elif inp:
        source = EventSource.file(inp, fmt)
    else:
        raise ConfigError("an event source is required (--input or --listen)")
    return Config(source=source, **values).validate()


def _cmd_run(args) -> int:
    config = config_from_args(args)
    n = 0
    try:
        for result in run_pipeline(config):
            n += 1
            r = result.reduction
            print(
                f"batch {result.batch_index}: events={r.raw_events} aggregates={r.aggregates} "
                f"clusters={r.clusters} hyper_groups={r.hyper_groups} "
                f"flagged={len(result.gflow.flagged)} aggregation_reduction={r.aggregation_reduction:.4f} "
                f"time={result.timing.total:.3f}s",
                flush=True,
            )
    except SourceError as exc:
        log.error("source failure: %s (yielded=%d skipped=%d)", exc, exc.yielded, exc.skipped)
        return EXIT_SOURCE
    print(f"{n} batch(es) processed", file=sys.stderr)
    return EXIT_OK


def _cmd_report(args) -> int:
    rep = report(args.store, args.top_n, args.sort_by, parse_batch_range(args.batches),
                 figures_dir=args.figures, delimiter="," if args.csv else "\t")
    for w in rep.warnings:
        log.warning("%s", w)
    if rep.text:
        print(rep.text)
    for fig in rep.figures:
        print(f"# figure {fig}", file=sys.stderr)
    return EXIT_OK


def _cmd_export(args) -> int:
    sys.stdout.write(export_stored_graph(args.store, args.batch, args.kind, args.format))
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import synthetic_events, write_csv, write_jsonl

    events = synthetic_events(args.events, args.dup, args.seed)
    (write_csv if args.format == "csv" else write_jsonl)(events, sys.stdout)
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "report": _cmd_report, "export-graph": _cmd_export, "synth": _cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except StoreError as exc:
        log.error("store failure: %s", exc)
        return EXIT_STORE
    except SourceError as exc:
        log.error("source failure: %s", exc)
        return EXIT_SOURCE
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
