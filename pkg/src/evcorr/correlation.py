"""Rule-based candidate mining and cluster promotion.

Every aggregate is projected under each of the five rules; projections that
share a key form one candidate meta-event in a single associative table.
Promotion keeps candidates meeting the support threshold and, where several
labels produced the same member set, only the most specific label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .aggregation import AggregatedEventSet
from .events import LABELS, RULE_FIELDS, RuleLabel, encode_fields


@dataclass(frozen=True, slots=True)
class MetaEvent:
    label: RuleLabel
    key: bytes
    key_fields: dict
    count: int
    pkts: int
    bytes: int
    ts: int
    members: tuple[int, ...]

    @property
    def src_ip(self) -> str:
        return self.key_fields["src_ip"]

    @property
    def dst_ip(self) -> str:
        return self.key_fields["dst_ip"]

    @property
    def sort_key(self) -> tuple:
        return (self.ts, self.label.rank, self.key)

    def to_dict(self) -> dict:
        return {
            "key": self.key.hex(),
            "label": self.label.value,
            "fields": dict(self.key_fields),
            "count": self.count,
            "pkts": self.pkts,
            "bytes": self.bytes,
            "ts": self.ts,
            "members": list(self.members),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetaEvent":
        return cls(
            label=RuleLabel(d["label"]),
            key=bytes.fromhex(d["key"]),
            key_fields=dict(d["fields"]),
            count=d["count"],
            pkts=d["pkts"],
            bytes=d["bytes"],
            ts=d["ts"],
            members=tuple(d["members"]),
        )


@dataclass
class CorrelationTable:
    entries: dict[bytes, MetaEvent]
    aes: AggregatedEventSet | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def by_label(self, label: RuleLabel) -> list[MetaEvent]:
        return [m for m in self.entries.values() if m.label is label]


@dataclass
class ClusterTable:
    clusters: tuple[MetaEvent, ...]
    support: int
    dropped_by_support: int = 0
    dropped_by_dedup: int = 0
    aes: AggregatedEventSet | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def to_dict(self) -> dict:
        return {
            "support": self.support,
            "dropped_by_support": self.dropped_by_support,
            "dropped_by_dedup": self.dropped_by_dedup,
            "summary": {k.value: v for k, v in cluster_summary(self).items()},
            "clusters": [c.to_dict() for c in self.clusters],
        }


def correlate(aes: AggregatedEventSet) -> CorrelationTable:
    # key -> [count, pkts, bytes, ts, members, label, projected fields]
    acc: dict[bytes, list] = {}
    plan = [(label, bytes([label.rank]), RULE_FIELDS[label]) for label in LABELS]
    for agg in aes.aggregates:
        encoded = encode_fields(agg.tuple)
        for label, prefix, names in plan:
            key = prefix + b"".join([encoded[f] for f in names])
            slot = acc.get(key)
            if slot is None:
                fields = {f: getattr(agg.tuple, f) for f in names}
                acc[key] = [1, agg.pkts, agg.bytes, agg.ts, [agg.id], label, fields]
            else:
                slot[0] += 1
                slot[1] += agg.pkts
                slot[2] += agg.bytes
                if slot[3] > agg.ts:
                    slot[3] = agg.ts
                slot[4].append(agg.id)

    # aggregates are visited in id order, so member lists are already sorted
    entries = {
        key: MetaEvent(label, key, fields, count, pkts, nbytes, ts, tuple(members))
        for key, (count, pkts, nbytes, ts, members, label, fields) in acc.items()
    }
    return CorrelationTable(entries, aes)


def promote(table: CorrelationTable, support: int = 1) -> ClusterTable:
    """Filter by support (inclusive) then keep the most specific label per member set."""
    if support < 1:
        raise ValueError("support must be >= 1")
    survivors = [m for m in table.entries.values() if m.count >= support]
    best: dict[tuple[int, ...], MetaEvent] = {}
    for m in survivors:
        held = best.get(m.members)
        if held is None or (m.label.rank, m.key) < (held.label.rank, held.key):
            best[m.members] = m
    clusters = tuple(sorted(best.values(), key=lambda m: m.sort_key))
    return ClusterTable(
        clusters=clusters,
        support=support,
        dropped_by_support=len(table.entries) - len(survivors),
        dropped_by_dedup=len(survivors) - len(best),
        aes=table.aes,
    )


def cluster_summary(clusters: ClusterTable | list[MetaEvent]) -> dict[RuleLabel, int]:
    counts = {label: 0 for label in LABELS}
    for c in clusters:
        counts[c.label] += 1
    return counts
