"""Domain types shared by every correlation stage.

Events are immutable value objects. Addresses are held as canonical text
(``ipaddress`` compressed form); ordering and key encoding go through the
16-byte packed form so IPv4 and IPv6 hosts share one total order.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

FIELDS = ("src_ip", "dst_ip", "src_port", "dst_port", "proto")


class RuleLabel(enum.Enum):
    """Correlation rule levels, declared from most to least specific."""

    SC = "SC"
    VC1 = "VC1"
    VC2 = "VC2"
    VC3 = "VC3"
    VC4 = "VC4"

    def __init__(self, value: str) -> None:
        # 0 for SC (most specific) up to 4 for VC4
        self.rank: int = len(type(self).__members__)

    # members are singletons; identity hashing keeps dict lookups in C
    __hash__ = object.__hash__

    @property
    def fields(self) -> tuple[str, ...]:
        """Five-tuple fields the rule projects."""
        return RULE_FIELDS[self]


LABELS = tuple(RuleLabel)

RULE_FIELDS: dict[RuleLabel, tuple[str, ...]] = {
    RuleLabel.SC: ("src_ip", "dst_ip", "src_port", "dst_port", "proto"),
    RuleLabel.VC1: ("src_ip", "dst_ip", "src_port", "dst_port"),
    RuleLabel.VC2: ("src_ip", "dst_ip", "src_port"),
    RuleLabel.VC3: ("src_ip", "dst_ip", "dst_port"),
    RuleLabel.VC4: ("src_ip", "dst_ip"),
}


@lru_cache(maxsize=1 << 16)
def canonical_ip(text: str) -> str:
    """Normalise an address string; raises ValueError on garbage."""
    addr = ipaddress.ip_address(text.strip())
    if isinstance(addr, ipaddress.IPv6Address) and addr.ipv4_mapped is not None:
        addr = addr.ipv4_mapped
    return str(addr)


@lru_cache(maxsize=1 << 16)
def packed_ip(text: str) -> bytes:
    """16-byte form of an address; IPv4 is IPv4-mapped (::ffff:a.b.c.d)."""
    addr = ipaddress.ip_address(text)
    if isinstance(addr, ipaddress.IPv4Address):
        return b"\x00" * 10 + b"\xff\xff" + addr.packed
    return addr.packed


def ip_sort_key(text: str) -> bytes:
    return packed_ip(text)


def validate_proto(token: str) -> str:
    proto = token.strip().lower()
    if not proto or any(ch.isspace() for ch in proto):
        raise ValueError(f"invalid protocol token {token!r}")
    return proto


class FiveTuple(NamedTuple):
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: str

    def __str__(self) -> str:
        return f"{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}/{self.proto}"


@dataclass(frozen=True, slots=True)
class RawEvent:
    """One normalized network event. ``ts`` is integer microseconds (UTC)."""

    ts: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: str
    bytes: int

    def __post_init__(self) -> None:
        if self.ts < 0:
            raise ValueError("ts must be >= 0")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")
        if self.bytes < 0:
            raise ValueError("bytes must be >= 0")

    def to_dict(self) -> dict:
        """Record form accepted back by the ingest parsers."""
        return {
            "ts": format_ts(self.ts),
            "src_ip": self.src_ip,
            "dst_ip": self.dst_ip,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
            "proto": self.proto,
            "bytes": self.bytes,
        }


def format_ts(us: int) -> str:
    """Epoch seconds with a six-digit fraction, exact for integer microseconds."""
    return f"{us // 1_000_000}.{us % 1_000_000:06d}"


def five_tuple(event: RawEvent) -> FiveTuple:
    return FiveTuple(event.src_ip, event.dst_ip, event.src_port, event.dst_port, event.proto)


@dataclass(frozen=True, slots=True)
class Batch:
    events: tuple[RawEvent, ...]
    batch_index: int
    window: tuple[int, int] | None = None

    @classmethod
    def of(cls, events, batch_index: int = 0) -> "Batch":
        events = tuple(events)
        window = (min(e.ts for e in events), max(e.ts for e in events)) if events else None
        return cls(events, batch_index, window)

    def __len__(self) -> int:
        return len(self.events)


def _lp(chunk: bytes) -> bytes:
    return len(chunk).to_bytes(2, "big") + chunk


def encode_fields(tup: FiveTuple) -> dict[str, bytes]:
    """Length-prefixed encoding of each five-tuple field."""
    return {
        "src_ip": _lp(packed_ip(tup.src_ip)),
        "dst_ip": _lp(packed_ip(tup.dst_ip)),
        "src_port": _lp(tup.src_port.to_bytes(2, "big")),
        "dst_port": _lp(tup.dst_port.to_bytes(2, "big")),
        "proto": _lp(tup.proto.encode("utf-8")),
    }


def key_from_encoded(encoded: dict[str, bytes], label: RuleLabel) -> bytes:
    return bytes([label.rank]) + b"".join(encoded[f] for f in RULE_FIELDS[label])


def canonical_key(tup: FiveTuple, label: RuleLabel) -> bytes:
    """Injective digest of the fields ``label`` projects, label byte first.

    Every component is length-prefixed so the concatenation cannot be
    ambiguous; keys of different labels differ in their first byte.
    """
    return key_from_encoded(encode_fields(tup), label)


def project(tup: FiveTuple, label: RuleLabel) -> dict:
    return {f: getattr(tup, f) for f in RULE_FIELDS[label]}
