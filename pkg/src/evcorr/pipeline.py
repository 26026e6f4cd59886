"""End-to-end batch pipeline, the file-backed result store and store reports."""

from __future__ import annotations

import contextlib
import gc
import hashlib
import json
import logging
import os
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

from .aggregation import AggregatedEventSet, aggregate
from .analytics import (
    SORT_KEYS,
    PairAnalyticsRow,
    ReductionReport,
    TimingReport,
    pair_analytics,
    reduction_report,
    rows_to_csv,
    top_flows,
)
from .correlation import ClusterTable, cluster_summary, correlate, promote
from .events import LABELS, Batch
from .graph import FlowGraph, HyperEventGraph, build_gflow, build_ghyper, export_graph, dumps_json
from .ingest import EventSource, batch_stream

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
BATCH_FILES = ("clusters.json", "ghyper.json", "gflow.json", "gflow.dot", "analytics.json", "metrics.json")


class ConfigError(ValueError):
    pass


class StoreError(OSError):
    def __init__(self, message: str, path):
        super().__init__(f"{message}: {path}")
        self.path = Path(path)


@dataclass
class Config:
    batch_size: int = 10_000
    support: int = 1
    flag_threshold: int = 5
    flush_timeout_secs: float = 10.0
    source: EventSource | None = None
    out_dir: Path | None = None
    top_n: int = 10
    sort_key: str = "pkts"
    keep_raw: bool = False

    def validate(self) -> "Config":
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.support < 1:
            raise ConfigError("support must be >= 1")
        if self.flag_threshold < 0:
            raise ConfigError("flag_threshold must be >= 0")
        if self.top_n < 0:
            raise ConfigError("top_n must be >= 0")
        if self.sort_key not in SORT_KEYS:
            raise ConfigError(f"sort_key must be one of {', '.join(SORT_KEYS)}")
        if self.flush_timeout_secs is not None and self.flush_timeout_secs < 0:
            raise ConfigError("flush_timeout must be >= 0")
        return self

    def echo(self) -> dict:
        src = self.source
        return {
            "batch_size": self.batch_size,
            "support": self.support,
            "flag_threshold": self.flag_threshold,
            "flush_timeout_secs": self.flush_timeout_secs,
            "source": None if src is None else {"kind": src.kind.value, "location": src.location,
                                                "format": src.format.value},
            "top_n": self.top_n,
            "sort_key": self.sort_key,
            "keep_raw": self.keep_raw,
        }


# flat key=value config files; keys mirror the CLI flags
_CONFIG_KEYS = {
    "batch_size": ("batch_size", int),
    "support": ("support", int),
    "flag_threshold": ("flag_threshold", int),
    "flush_timeout": ("flush_timeout_secs", float),
    "top_n": ("top_n", int),
    "sort_by": ("sort_key", str),
    "keep_raw": ("keep_raw", lambda v: v.lower() in ("1", "true", "yes", "on")),
    "out": ("out_dir", Path),
    "input": ("input", str),
    "listen": ("listen", str),
    "format": ("format", str),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines into Config-ready values (plus input/listen/format)."""
    values: dict = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        name, conv = _CONFIG_KEYS[key]
        try:
            values[name] = conv(value)
        except ValueError:
            raise ConfigError(f"{path}:{n}: bad value for {key}: {value!r}") from None
    return values


@dataclass
class BatchResult:
    batch_index: int
    raw_count: int
    aggregate_count: int
    total_bytes: int
    total_pkts: int
    window: tuple[int, int] | None
    clusters: ClusterTable
    ghyper: HyperEventGraph
    gflow: FlowGraph
    rows: list[PairAnalyticsRow]
    top: list[PairAnalyticsRow]
    reduction: ReductionReport
    timing: TimingReport
    skipped_records: int = 0
    raw_events: tuple = field(default=(), repr=False)

    def aggregate_summary(self) -> dict:
        return {
            "raw_events": self.raw_count,
            "aggregates": self.aggregate_count,
            "bytes": self.total_bytes,
            "pkts": self.total_pkts,
            "window": list(self.window) if self.window else None,
        }


@contextlib.contextmanager
def _gc_paused():
    # The stages build large acyclic structures; generational passes over them
    # make per-batch cost grow faster than the batch.
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def process_batch(batch: Batch, config: Config, timing: TimingReport | None = None) -> BatchResult:
    """Run one batch through aggregation, clustering and both graphs."""
    timing = timing or TimingReport()
    timing.event_count = len(batch)
    t0 = time.perf_counter()
    with _gc_paused():
        with timing.stage("aggregate"):
            aes: AggregatedEventSet = aggregate(batch)
        with timing.stage("correlate"):
            table = correlate(aes)
        with timing.stage("promote"):
            clusters = promote(table, config.support)
        with timing.stage("ghyper"):
            ghyper = build_ghyper(clusters)
        with timing.stage("gflow"):
            gflow = build_gflow(clusters, config.flag_threshold)
        with timing.stage("analytics"):
            rows = pair_analytics(clusters, aes)
            top = top_flows(rows, config.sort_key, config.top_n)
            reduction = reduction_report(max(len(batch), 1), len(aes), len(clusters), len(ghyper))
    timing.total += time.perf_counter() - t0
    return BatchResult(
        batch_index=batch.batch_index,
        raw_count=len(batch),
        aggregate_count=len(aes),
        total_bytes=aes.total_bytes,
        total_pkts=aes.total_pkts,
        window=batch.window,
        clusters=clusters,
        ghyper=ghyper,
        gflow=gflow,
        rows=rows,
        top=top,
        reduction=reduction,
        timing=timing,
        raw_events=batch.events if config.keep_raw else (),
    )


def run_pipeline(config: Config, stdin: IO[str] | None = None, stream=None) -> Iterator[BatchResult]:
    """Yield one BatchResult per batch as soon as it is processed (and persisted)."""
    config.validate()
    if stream is None:
        if config.source is None:
            raise ConfigError("no event source configured")
        stream = batch_stream(config.source, config.batch_size, config.flush_timeout_secs, stdin=stdin)
    it = iter(stream)
    while True:
        timing = TimingReport()
        t0 = time.perf_counter()
        try:
            batch = next(it)
        except StopIteration:
            break
        timing.stages["ingest"] = time.perf_counter() - t0
        timing.total = timing.stages["ingest"]
        result = process_batch(batch, config, timing)
        result.skipped_records = getattr(stream, "skipped", 0)
        if config.out_dir is not None:
            persist_batch(result, config.out_dir, config)
        yield result


# store

def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def batch_dir(out_dir, index: int) -> Path:
    return Path(out_dir) / f"batch-{index}"


def render_batch_files(result: BatchResult, config: Config | None = None) -> dict[str, str]:
    config = config or Config()
    summary = {k.value: v for k, v in cluster_summary(result.clusters).items()}
    files = {
        "clusters.json": dumps_json({"schema": SCHEMA_VERSION, "batch_index": result.batch_index,
                                     **result.clusters.to_dict()}),
        "ghyper.json": export_graph(result.ghyper, "json"),
        "gflow.json": export_graph(result.gflow, "json"),
        "gflow.dot": export_graph(result.gflow, "dot"),
        "analytics.json": dumps_json({
            "schema": SCHEMA_VERSION,
            "batch_index": result.batch_index,
            "aggregates": result.aggregate_summary(),
            "summary": summary,
            "reduction": result.reduction.to_dict(),
            "sort_key": config.sort_key,
            "top_n": config.top_n,
            "rows": [r.to_dict() for r in result.rows],
            "top": [r.to_dict() for r in result.top],
        }),
        "metrics.json": dumps_json({
            "schema": SCHEMA_VERSION,
            "batch_index": result.batch_index,
            "skipped_records": result.skipped_records,
            "timing": result.timing.to_dict(),
            "reduction": result.reduction.to_dict(),
            "clusters": len(result.clusters),
            "hyper_groups": len(result.ghyper),
        }),
    }
    if result.raw_events:
        files["raw.jsonl"] = "".join(json.dumps(e.to_dict()) + "\n" for e in result.raw_events)
    return files


def persist_batch(result: BatchResult, out_dir, config: Config | None = None) -> Path:
    """Write ``out_dir/batch-<index>/``; the manifest is written last."""
    target = batch_dir(out_dir, result.batch_index)
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StoreError(f"cannot create batch directory ({exc.strerror})", target) from exc
    manifest_path = target / MANIFEST
    files = render_batch_files(result, config)
    checksums = {}
    current = manifest_path
    try:
        if manifest_path.exists():
            manifest_path.unlink()
        for name, text in files.items():
            current = target / name
            data = text.encode("utf-8")
            _atomic_write(current, data)
            checksums[name] = hashlib.sha256(data).hexdigest()
        manifest = {
            "schema": SCHEMA_VERSION,
            "batch_index": result.batch_index,
            "config": (config or Config()).echo(),
            "files": checksums,
        }
        current = manifest_path
        _atomic_write(manifest_path, dumps_json(manifest).encode("utf-8"))
    except OSError as exc:
        raise StoreError(f"write failed ({exc.strerror or exc})", current) from exc
    return manifest_path


@dataclass
class StoredBatch:
    index: int
    path: Path
    manifest: dict
    analytics: dict
    metrics: dict | None = None


def _verify_batch(path: Path) -> StoredBatch:
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise StoreError("missing manifest", manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StoreError(f"corrupt manifest ({exc})", manifest_path) from exc
    for name, digest in manifest.get("files", {}).items():
        fp = path / name
        try:
            actual = hashlib.sha256(fp.read_bytes()).hexdigest()
        except OSError:
            raise StoreError("listed file missing", fp) from None
        if actual != digest:
            raise StoreError("checksum mismatch", fp)
    analytics = json.loads((path / "analytics.json").read_text(encoding="utf-8"))
    metrics_path = path / "metrics.json"
    metrics = json.loads(metrics_path.read_text(encoding="utf-8")) if metrics_path.exists() else None
    return StoredBatch(manifest["batch_index"], path, manifest, analytics, metrics)


_BATCH_DIR = re.compile(r"^batch-(\d+)$")


def list_batches(store_dir) -> list[tuple[int, Path]]:
    store = Path(store_dir)
    if not store.is_dir():
        raise StoreError("store directory not found", store)
    found = []
    for child in store.iterdir():
        m = _BATCH_DIR.match(child.name)
        if m and child.is_dir():
            found.append((int(m.group(1)), child))
    return sorted(found)


def load_store(store_dir, batches: tuple[int | None, int | None] = (None, None)):
    """Verified batches in index order, plus warnings for the ones skipped."""
    lo, hi = batches
    loaded, warnings = [], []
    for index, path in list_batches(store_dir):
        if (lo is not None and index < lo) or (hi is not None and index > hi):
            continue
        try:
            loaded.append(_verify_batch(path))
        except (StoreError, json.JSONDecodeError, KeyError) as exc:
            warnings.append(f"batch {index}: {exc}")
    return loaded, warnings


def parse_batch_range(text: str | None) -> tuple[int | None, int | None]:
    if not text:
        return (None, None)
    m = re.fullmatch(r"\s*(\d*)\s*(?:\.\.\s*(\d*))?\s*", text)
    if not m:
        raise ConfigError(f"bad batch range {text!r}; expected A..B")
    a, b = m.group(1), m.group(2)
    if "." not in text:
        return (int(a), int(a))
    return (int(a) if a else None, int(b) if b else None)


@dataclass
class Report:
    text: str
    warnings: list[str]
    batches: list[StoredBatch]
    figures: list[Path] = field(default_factory=list)


def report(store_dir, top_n: int = 10, sort_key: str = "pkts",
           batches: tuple[int | None, int | None] = (None, None), figures_dir=None,
           delimiter: str = "\t") -> Report:
    """Re-sort persisted analytics and tabulate the cluster summary per batch."""
    if sort_key not in SORT_KEYS:
        raise ConfigError(f"sort_key must be one of {', '.join(SORT_KEYS)}")
    if top_n < 0:
        raise ConfigError("top_n must be >= 0")
    stored, warnings = load_store(store_dir, batches)
    if not stored:
        warnings.append("no batches in the requested range")
    out = []
    figures: list[Path] = []
    for sb in stored:
        a = sb.analytics
        rows = [PairAnalyticsRow.from_dict(r) for r in a["rows"]]
        top = top_flows(rows, sort_key, top_n)
        red = a["reduction"]
        out.append(
            f"# batch {sb.index} raw_events={red['raw_events']} aggregates={red['aggregates']} "
            f"clusters={red['clusters']} hyper_groups={red['hyper_groups']} "
            f"aggregation_reduction={red['aggregation_reduction']:.4f} "
            f"cluster_reduction={red['cluster_reduction']:.4f}"
        )
        out.append(f"# top {top_n} flows by {sort_key}")
        out.append(rows_to_csv(top, delimiter).rstrip("\n"))
        out.append("# cluster summary")
        out.append(delimiter.join(("label", "count")))
        out.extend(f"{l.value}{delimiter}{a['summary'].get(l.value, 0)}" for l in LABELS)
        out.append(f"total{delimiter}{sum(a['summary'].values())}")
        out.append("")
        if figures_dir is not None:
            from . import plotting

            fig_dir = Path(figures_dir)
            fig_dir.mkdir(parents=True, exist_ok=True)
            figures.append(plotting.cluster_summary_chart(
                a["summary"], fig_dir / f"batch-{sb.index}-clusters.png", title=f"Clusters, batch {sb.index}"))
            figures.append(plotting.top_flows_chart(
                top, sort_key, fig_dir / f"batch-{sb.index}-top-{sort_key}.png"))
            gflow_json = sb.path / "gflow.json"
            if gflow_json.exists():
                from .graph import load_graph

                figures.append(plotting.gflow_chart(
                    load_graph(gflow_json.read_text(encoding="utf-8")), fig_dir / f"batch-{sb.index}-gflow.png"))
    if figures_dir is not None and len(stored) > 1:
        from . import plotting

        metrics = [sb.metrics for sb in stored if sb.metrics]
        if metrics:
            figures.append(plotting.runtime_chart(metrics, Path(figures_dir) / "runtime.png"))
    return Report("\n".join(out), warnings, stored, figures)


def export_stored_graph(store_dir, batch: int, kind: str, format: str) -> str:
    if kind not in ("gflow", "ghyper"):
        raise ConfigError("kind must be gflow or ghyper")
    if format not in ("dot", "json"):
        raise ConfigError("format must be dot or json")
    sb = _verify_batch(batch_dir(store_dir, batch))
    name = f"{kind}.{format}"
    path = sb.path / name
    if path.exists():
        return path.read_text(encoding="utf-8")
    from .graph import load_graph

    return export_graph(load_graph((sb.path / f"{kind}.json").read_text(encoding="utf-8")), format)
