"""Synthetic event traces for demos, benchmarks and tests."""

from __future__ import annotations

import json
import math
import random
from typing import IO, Iterable

from .events import FiveTuple, RawEvent, format_ts

_COMMON_DPORTS = (80, 443, 53, 22, 25, 123, 67, 110, 143, 3389, 8080)
_PROTOS = ("tcp", "tcp", "tcp", "udp", "udp", "icmp")


def _host(prefix: str, i: int) -> str:
    return f"{prefix}.{(i >> 8) & 0xFF}.{i & 0xFF}"


def distinct_tuples(count: int, rng: random.Random) -> list[FiveTuple]:
    """``count`` distinct five-tuples over host pools sized to the request."""
    clients = max(8, int(math.sqrt(count)) * 2)
    servers = max(4, int(math.sqrt(count)))
    seen: set[FiveTuple] = set()
    out: list[FiveTuple] = []
    while len(out) < count:
        src = _host("10.1", rng.randrange(clients))
        dst = _host("172.16", rng.randrange(servers))
        proto = rng.choice(_PROTOS)
        if proto == "icmp":
            sport, dport = 0, rng.choice((0, 8))
        else:
            sport = rng.randrange(1024, 65536) if rng.random() < 0.8 else rng.randrange(1024, 1100)
            dport = rng.choice(_COMMON_DPORTS) if rng.random() < 0.85 else rng.randrange(1, 1024)
        tup = FiveTuple(src, dst, sport, dport, proto)
        if tup not in seen:
            seen.add(tup)
            out.append(tup)
    return out


def synthetic_events(n_events: int, dup: int = 8, seed: int = 0, start_ts: int = 921_000_000_000_000,
                     span_us: int = 600_000_000) -> list[RawEvent]:
    """Arrival-ordered trace in which every distinct tuple occurs ``dup`` times.

    When ``n_events`` is not a multiple of ``dup`` the last tuple occurs fewer
    times.
    """
    if dup < 1:
        raise ValueError("dup must be >= 1")
    rng = random.Random(seed)
    tuples = distinct_tuples(math.ceil(n_events / dup), rng)
    draws = [(start_ts + rng.randrange(span_us), i // dup, rng.randrange(40, 1501)) for i in range(n_events)]
    # sort before building so events sit in memory in arrival order, as after ingest
    draws.sort(key=lambda d: d[0])
    return [RawEvent(ts, *tuples[k], nbytes) for ts, k, nbytes in draws]


def sweep_events(scanner: str, targets: int, seed: int = 0, dport: int = 22,
                 base_ts: int = 1_000_000) -> list[RawEvent]:
    """One probe per target host, single packet each."""
    rng = random.Random(seed)
    return [
        RawEvent(base_ts + i * 1000, scanner, _host("192.168", i + 1), rng.randrange(1024, 65536), dport, "tcp", 60)
        for i in range(targets)
    ]


def write_jsonl(events: Iterable[RawEvent], fh: IO[str]) -> None:
    for e in events:
        fh.write(json.dumps(e.to_dict()) + "\n")


def write_csv(events: Iterable[RawEvent], fh: IO[str], header: bool = True) -> None:
    if header:
        fh.write("ts,src_ip,dst_ip,src_port,dst_port,proto,bytes\n")
    for e in events:
        fh.write(f"{format_ts(e.ts)},{e.src_ip},{e.dst_ip},{e.src_port},{e.dst_port},{e.proto},{e.bytes}\n")
