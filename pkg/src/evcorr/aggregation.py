"""Fusing identical five-tuples inside one batch."""

from __future__ import annotations

from dataclasses import dataclass
from operator import attrgetter

from .events import Batch, FiveTuple, RuleLabel, canonical_key


@dataclass(frozen=True, slots=True)
class AggregateEvent:
    """All events of a batch that share a five-tuple.

    ``ts`` is the earliest constituent timestamp, ``bytes`` the byte total
    and ``pkts`` the number of constituent events.
    """

    tuple: FiveTuple
    ts: int
    bytes: int
    pkts: int
    id: int

    def to_dict(self) -> dict:
        return {"id": self.id, "ts": self.ts, **self.tuple._asdict(), "bytes": self.bytes, "pkts": self.pkts}


@dataclass(frozen=True)
class AggregatedEventSet:
    aggregates: tuple[AggregateEvent, ...]
    raw_count: int

    def __len__(self) -> int:
        return len(self.aggregates)

    def __iter__(self):
        return iter(self.aggregates)

    def __getitem__(self, agg_id: int) -> AggregateEvent:
        # ids are dense 0..n-1 in storage order
        return self.aggregates[agg_id]

    @property
    def total_bytes(self) -> int:
        return sum(a.bytes for a in self.aggregates)

    @property
    def total_pkts(self) -> int:
        return sum(a.pkts for a in self.aggregates)


_tuple_of = attrgetter("src_ip", "dst_ip", "src_port", "dst_port", "proto")


def aggregate(batch: Batch) -> AggregatedEventSet:
    # plain tuples as keys: attrgetter builds them in C, FiveTuple is made once per group
    groups: dict[tuple, list[int]] = {}
    for ev in batch.events:
        k = _tuple_of(ev)
        acc = groups.get(k)
        if acc is None:
            groups[k] = [ev.ts, ev.bytes, 1]
        else:
            if ev.ts < acc[0]:
                acc[0] = ev.ts
            acc[1] += ev.bytes
            acc[2] += 1

    ordered = sorted(groups.items(), key=lambda kv: (kv[1][0], canonical_key(FiveTuple._make(kv[0]), RuleLabel.SC)))
    # allocate in final order so later in-order walks stay cache friendly
    aggregates = tuple(
        AggregateEvent(FiveTuple._make(k), ts, nbytes, pkts, i) for i, (k, (ts, nbytes, pkts)) in enumerate(ordered)
    )
    return AggregatedEventSet(aggregates, len(batch.events))
