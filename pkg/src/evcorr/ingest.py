"""Reading normalized event records and cutting them into count-based batches."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import logging
import queue
import re
import socket
import sys
import threading
import time
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import IO, Iterable, Iterator

from .events import Batch, RawEvent, canonical_ip, validate_proto, FIELDS

log = logging.getLogger(__name__)

RECORD_FIELDS = ("ts",) + FIELDS + ("bytes",)

_NUMERIC_TS = re.compile(r"^\d+(?:\.\d+)?$")
_DATETIME_TS = re.compile(r"^(\d{4})-(\d{2})-(\d{2})[ T](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?$")
_TIME_TS = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?$")

_EPOCH = dt.datetime(1970, 1, 1, tzinfo=dt.timezone.utc)


class ParseErrorReason(str, enum.Enum):
    BAD_TIMESTAMP = "bad_timestamp"
    BAD_ADDRESS = "bad_address"
    BAD_PORT = "bad_port"
    BAD_BYTES = "bad_bytes"
    MISSING_FIELD = "missing_field"
    MALFORMED_RECORD = "malformed_record"


class ParseError(ValueError):
    def __init__(self, reason: ParseErrorReason | str, line_number: int = 0, detail: str = ""):
        self.reason = ParseErrorReason(reason)
        self.line_number = line_number
        self.detail = detail
        super().__init__(f"line {line_number}: {self.reason.value}" + (f" ({detail})" if detail else ""))


class SourceError(IOError):
    """The event source failed; carries how far the stream got."""

    def __init__(self, message: str, yielded: int = 0, skipped: int = 0):
        super().__init__(message)
        self.yielded = yielded
        self.skipped = skipped


class SourceKind(str, enum.Enum):
    FILE = "file"
    STDIN = "stdin"
    TCP_LISTENER = "tcp_listener"


class RecordFormat(str, enum.Enum):
    JSONL = "jsonl"
    CSV = "csv"


@dataclass(frozen=True)
class EventSource:
    kind: SourceKind
    location: str = ""
    format: RecordFormat = RecordFormat.JSONL

    @classmethod
    def file(cls, path, format: str = "jsonl") -> "EventSource":
        return cls(SourceKind.FILE, str(path), RecordFormat(format))

    @classmethod
    def stdin(cls, format: str = "jsonl") -> "EventSource":
        return cls(SourceKind.STDIN, "-", RecordFormat(format))

    @classmethod
    def tcp(cls, address: str, format: str = "jsonl") -> "EventSource":
        return cls(SourceKind.TCP_LISTENER, address, RecordFormat(format))


def _fraction_us(frac: str | None) -> int:
    return int(frac.ljust(6, "0")) if frac else 0


def parse_timestamp(text) -> int:
    """Return integer microseconds since the UTC epoch.

    Accepts epoch seconds (``"1331901635.25"``), ``YYYY-MM-DD HH:MM:SS[.ffffff]``
    read as UTC, and bare ``HH:MM:SS[.ffffff]`` read as an offset from
    1970-01-01 00:00 UTC. Fractions beyond microseconds are truncated.
    """
    if isinstance(text, bool):
        raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=repr(text))
    if isinstance(text, int):
        if text < 0:
            raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=repr(text))
        return text * 1_000_000
    if isinstance(text, float):
        text = repr(text)
    if not isinstance(text, str):
        raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=repr(text))
    s = text.strip()

    if _NUMERIC_TS.match(s):
        try:
            return int(Decimal(s) * 1_000_000)
        except InvalidOperation:  # pragma: no cover - regex already filters
            raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=s) from None

    m = _DATETIME_TS.match(s)
    if m:
        y, mo, d, hh, mm, ss = (int(g) for g in m.groups()[:6])
        try:
            stamp = dt.datetime(y, mo, d, hh, mm, ss, tzinfo=dt.timezone.utc)
        except ValueError:
            raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=s) from None
        delta = stamp - _EPOCH
        if delta.days < 0:
            raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=s)
        whole = delta.days * 86_400 + delta.seconds
        return whole * 1_000_000 + _fraction_us(m.group(7))

    m = _TIME_TS.match(s)
    if m:
        hh, mm, ss = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if hh > 23 or mm > 59 or ss > 59:
            raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=s)
        return (hh * 3600 + mm * 60 + ss) * 1_000_000 + _fraction_us(m.group(4))

    raise ParseError(ParseErrorReason.BAD_TIMESTAMP, detail=s)


def _int_field(value, reason: ParseErrorReason, lo: int, hi: int | None) -> int:
    if isinstance(value, bool):
        raise ParseError(reason, detail=repr(value))
    if isinstance(value, int):
        n = value
    elif isinstance(value, str) and value.strip().isdigit():
        n = int(value.strip())
    else:
        raise ParseError(reason, detail=repr(value))
    if n < lo or (hi is not None and n > hi):
        raise ParseError(reason, detail=repr(value))
    return n


def _build_event(values: dict) -> RawEvent:
    for name in RECORD_FIELDS:
        v = values.get(name)
        if v is None or (isinstance(v, str) and not v.strip()):
            raise ParseError(ParseErrorReason.MISSING_FIELD, detail=name)
    ts = parse_timestamp(values["ts"])
    try:
        src_ip = canonical_ip(values["src_ip"])
        dst_ip = canonical_ip(values["dst_ip"])
    except (ValueError, TypeError, AttributeError):
        raise ParseError(ParseErrorReason.BAD_ADDRESS) from None
    src_port = _int_field(values["src_port"], ParseErrorReason.BAD_PORT, 0, 65535)
    dst_port = _int_field(values["dst_port"], ParseErrorReason.BAD_PORT, 0, 65535)
    if not isinstance(values["proto"], str):
        raise ParseError(ParseErrorReason.MALFORMED_RECORD, detail="proto")
    try:
        proto = validate_proto(values["proto"])
    except ValueError:
        raise ParseError(ParseErrorReason.MALFORMED_RECORD, detail="proto") from None
    nbytes = _int_field(values["bytes"], ParseErrorReason.BAD_BYTES, 0, None)
    return RawEvent(ts, src_ip, dst_ip, src_port, dst_port, proto, nbytes)


def _csv_row(line: str) -> list[str]:
    try:
        return next(csv.reader([line]))
    except (csv.Error, StopIteration):
        raise ParseError(ParseErrorReason.MALFORMED_RECORD) from None


def parse_event_record(line: str, format: RecordFormat | str = "jsonl", line_number: int = 0) -> RawEvent:
    """Parse one JSONL object or CSV row into a validated RawEvent."""
    fmt = RecordFormat(format)
    try:
        if fmt is RecordFormat.JSONL:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError(ParseErrorReason.MALFORMED_RECORD) from None
            if not isinstance(obj, dict):
                raise ParseError(ParseErrorReason.MALFORMED_RECORD)
            return _build_event(obj)
        row = _csv_row(line.rstrip("\r\n"))
        if len(row) < len(RECORD_FIELDS):
            raise ParseError(ParseErrorReason.MISSING_FIELD)
        if len(row) > len(RECORD_FIELDS):
            raise ParseError(ParseErrorReason.MALFORMED_RECORD)
        return _build_event(dict(zip(RECORD_FIELDS, row)))
    except ParseError as exc:
        exc.line_number = line_number
        exc.args = (f"line {line_number}: {exc.reason.value}" + (f" ({exc.detail})" if exc.detail else ""),)
        raise


def is_csv_header(line: str) -> bool:
    """A first CSV row whose leading field is not a timestamp is a header."""
    row = _csv_row(line.rstrip("\r\n"))
    if not row:
        return False
    try:
        parse_timestamp(row[0])
    except ParseError:
        return True
    return False


_EOF = object()


class BatchStream:
    """Iterable of :class:`Batch` drawn from an :class:`EventSource`.

    Parse failures are logged, counted in ``skipped`` and kept (up to
    ``max_errors``) in ``errors``. For live sources (stdin, TCP) a partial
    batch is flushed once ``flush_timeout`` seconds pass without filling it.
    """

    max_errors = 1000

    def __init__(self, source: EventSource, batch_size: int = 10_000, flush_timeout: float = 10.0,
                 stdin: IO[str] | None = None):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.source = source
        self.batch_size = batch_size
        self.flush_timeout = flush_timeout
        self.yielded = 0
        self.skipped = 0
        self.batches = 0
        self.errors: list[ParseError] = []
        self.listening = threading.Event()
        self.bound_address: tuple[str, int] | None = None
        self._stdin = stdin

    # line sources

    def _file_lines(self) -> Iterator[str]:
        try:
            fh = open(self.source.location, encoding="utf-8", newline="")
        except OSError as exc:
            raise SourceError(f"cannot open {self.source.location}: {exc}") from exc
        with fh:
            yield from fh

    def _tcp_lines(self) -> Iterator[str]:
        host, _, port = self.source.location.rpartition(":")
        try:
            srv = socket.create_server((host or "127.0.0.1", int(port)))
        except (OSError, ValueError) as exc:
            raise SourceError(f"cannot listen on {self.source.location}: {exc}") from exc
        with srv:
            self.bound_address = srv.getsockname()[:2]
            self.listening.set()
            conn, peer = srv.accept()
            log.info("accepted event stream from %s:%s", *peer[:2])
            with conn, conn.makefile("r", encoding="utf-8", newline="") as fh:
                yield from fh

    def _raw_lines(self) -> Iterator[str]:
        kind = self.source.kind
        if kind is SourceKind.FILE:
            return self._file_lines()
        if kind is SourceKind.STDIN:
            return iter(self._stdin if self._stdin is not None else sys.stdin)
        return self._tcp_lines()

    def _pumped(self) -> Iterator[object]:
        """Run the line reader on a thread so flush timeouts can fire."""
        q: queue.Queue = queue.Queue(maxsize=4 * self.batch_size)

        def pump():
            try:
                for line in self._raw_lines():
                    q.put(line)
            except BaseException as exc:  # noqa: BLE001 - forwarded to consumer
                q.put(exc)
            q.put(_EOF)

        threading.Thread(target=pump, name="evcorr-ingest", daemon=True).start()
        return q

    # batching

    def _record(self, line: str, lineno: int, first: bool) -> RawEvent | None:
        text = line.rstrip("\r\n")
        if not text.strip():
            return None
        if first and self.source.format is RecordFormat.CSV:
            try:
                if is_csv_header(text):
                    return None
            except ParseError:
                pass
        try:
            return parse_event_record(text, self.source.format, lineno)
        except ParseError as exc:
            self.skipped += 1
            if len(self.errors) < self.max_errors:
                self.errors.append(exc)
            log.debug("skipping record: %s", exc)
            return None

    def _emit(self, events: list[RawEvent]) -> Batch:
        batch = Batch.of(events, self.batches)
        self.batches += 1
        self.yielded += len(events)
        return batch

    def __iter__(self) -> Iterator[Batch]:
        if self.source.kind is SourceKind.FILE:
            yield from self._iter_direct()
        else:
            yield from self._iter_live()

    def _iter_direct(self) -> Iterator[Batch]:
        pending: list[RawEvent] = []
        lines = self._raw_lines()
        lineno = 0
        try:
            for lineno, line in enumerate(lines, start=1):
                ev = self._record(line, lineno, lineno == 1)
                if ev is None:
                    continue
                pending.append(ev)
                if len(pending) == self.batch_size:
                    yield self._emit(pending)
                    pending = []
        except SourceError as exc:
            exc.yielded, exc.skipped = self.yielded, self.skipped
            raise
        except (OSError, UnicodeDecodeError) as exc:
            if pending:
                yield self._emit(pending)
            raise SourceError(f"read failed after line {lineno}: {exc}", self.yielded, self.skipped) from exc
        if pending:
            yield self._emit(pending)

    def _iter_live(self) -> Iterator[Batch]:
        q = self._pumped()
        pending: list[RawEvent] = []
        lineno = 0
        deadline = None
        while True:
            try:
                if pending and self.flush_timeout is not None:
                    item = q.get(timeout=max(0.0, deadline - time.monotonic()))
                else:
                    item = q.get()
            except queue.Empty:
                yield self._emit(pending)
                pending = []
                continue
            if item is _EOF:
                break
            if isinstance(item, BaseException):
                if pending:
                    yield self._emit(pending)
                if isinstance(item, SourceError):
                    item.yielded, item.skipped = self.yielded, self.skipped
                    raise item
                raise SourceError(f"read failed after line {lineno}: {item}", self.yielded, self.skipped) from item
            lineno += 1
            ev = self._record(item, lineno, lineno == 1)
            if ev is None:
                continue
            if not pending:
                deadline = time.monotonic() + (self.flush_timeout or 0)
            pending.append(ev)
            if len(pending) == self.batch_size:
                yield self._emit(pending)
                pending = []
        if pending:
            yield self._emit(pending)


def batch_stream(source: EventSource, batch_size: int = 10_000, flush_timeout: float = 10.0,
                 **kwargs) -> BatchStream:
    return BatchStream(source, batch_size, flush_timeout, **kwargs)


def batches_from_events(events: Iterable[RawEvent], batch_size: int) -> Iterator[Batch]:
    """Cut an in-memory event sequence into batches (no parsing)."""
    pending: list[RawEvent] = []
    index = 0
    for ev in events:
        pending.append(ev)
        if len(pending) == batch_size:
            yield Batch.of(pending, index)
            index += 1
            pending = []
    if pending:
        yield Batch.of(pending, index)
