"""Per-pair flow analytics, top-N queries and reduction/timing reports."""

from __future__ import annotations

import csv
import io
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from .aggregation import AggregatedEventSet
from .correlation import ClusterTable
from .events import LABELS, RuleLabel, ip_sort_key

ROW_COLUMNS = ("src_ip", "dst_ip", "bytes", "pkts", "port_count") + tuple(l.value for l in LABELS)
STAGES = ("ingest", "aggregate", "correlate", "promote", "ghyper", "gflow", "analytics")
SORT_KEYS = ("pkts", "bytes")


@dataclass
class PairAnalyticsRow:
    src_ip: str
    dst_ip: str
    bytes: int = 0
    pkts: int = 0
    port_count: int = 0
    label_counts: dict[RuleLabel, int] = field(default_factory=lambda: {l: 0 for l in LABELS})

    def to_dict(self) -> dict:
        d = {
            "src_ip": self.src_ip,
            "dst_ip": self.dst_ip,
            "bytes": self.bytes,
            "pkts": self.pkts,
            "port_count": self.port_count,
        }
        d.update({l.value: self.label_counts.get(l, 0) for l in LABELS})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PairAnalyticsRow":
        return cls(d["src_ip"], d["dst_ip"], d["bytes"], d["pkts"], d["port_count"],
                   {l: d.get(l.value, 0) for l in LABELS})


def pair_analytics(clusters: ClusterTable, aes: AggregatedEventSet) -> list[PairAnalyticsRow]:
    rows: dict[tuple[str, str], PairAnalyticsRow] = {}
    ports: dict[tuple[str, str], set[int]] = {}
    for agg in aes:
        pair = (agg.tuple.src_ip, agg.tuple.dst_ip)
        row = rows.get(pair)
        if row is None:
            row = rows[pair] = PairAnalyticsRow(*pair)
            ports[pair] = set()
        row.bytes += agg.bytes
        row.pkts += agg.pkts
        ports[pair].add(agg.tuple.dst_port)
    for pair, p in ports.items():
        rows[pair].port_count = len(p)
    for c in clusters:
        rows[(c.src_ip, c.dst_ip)].label_counts[c.label] += 1
    return [rows[p] for p in sorted(rows, key=lambda p: (ip_sort_key(p[0]), ip_sort_key(p[1])))]


def top_flows(rows, sort_key: str = "pkts", n: int = 10) -> list[PairAnalyticsRow]:
    """Descending by ``sort_key``; ties go to the lower (src_ip, dst_ip)."""
    if sort_key not in SORT_KEYS:
        raise ValueError(f"sort_key must be one of {SORT_KEYS}")
    if n < 0:
        raise ValueError("n must be >= 0")
    ordered = sorted(rows, key=lambda r: (-getattr(r, sort_key), ip_sort_key(r.src_ip), ip_sort_key(r.dst_ip)))
    return ordered[:n]


def rows_to_csv(rows, delimiter: str = ",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        d = r.to_dict()
        w.writerow([d[c] for c in ROW_COLUMNS])
    return buf.getvalue()


@dataclass(frozen=True)
class ReductionReport:
    raw_events: int
    aggregates: int
    clusters: int
    hyper_groups: int
    aggregation_reduction: float
    cluster_reduction: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def reduction_report(raw_events: int, aggregates: int, clusters: int, hyper_groups: int) -> ReductionReport:
    if raw_events < 1:
        raise ValueError("raw_events must be >= 1; reduction ratios are undefined otherwise")
    return ReductionReport(
        raw_events, aggregates, clusters, hyper_groups,
        aggregation_reduction=1 - aggregates / raw_events,
        cluster_reduction=1 - clusters / raw_events,
    )


@dataclass
class TimingReport:
    """Wall-clock seconds per stage (monotonic clock)."""

    event_count: int = 0
    stages: dict[str, float] = field(default_factory=lambda: {s: 0.0 for s in STAGES})
    total: float = 0.0

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    @property
    def correlation_time(self) -> float:
        """Aggregation through both graphs, excluding ingest and analytics."""
        return sum(self.stages[s] for s in ("aggregate", "correlate", "promote", "ghyper", "gflow"))

    def to_dict(self) -> dict:
        return {"event_count": self.event_count, "stages": dict(self.stages), "total": self.total}
