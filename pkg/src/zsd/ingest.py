"""Telemetry stream parsing: JSON Lines in, schema-checked Events out.

One record per line. Lines are delivered in file order; ingestion never
reorders, so an entity's events arrive in the order the producer wrote
them. Out-of-order timestamps are the producer's bug and are surfaced via
a monotonicity warning counter rather than rejection.
"""

from __future__ import annotations

import io
import json
import sys
from dataclasses import dataclass, field
from typing import IO, Iterator

from .types import Event, EventKind, Truth, ZsdError

STDIN_MARKER = "-"

_REQUIRED_KEYS = ("ts", "entity", "kind")
_KNOWN_KEYS = frozenset(
    {"ts", "entity", "kind", "path", "ext_before", "ext_after", "bytes", "entropy", "dst", "truth"}
)
_KIND_VALUES = {k.value: k for k in EventKind}
_TRUTH_VALUES = {t.value: t for t in Truth}


class ParseError(ZsdError):
    """Line is not a well-formed event record."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class SchemaError(ZsdError):
    """Record parsed but violates an Event invariant."""


def _opt_str(obj: dict, key: str) -> str | None:
    v = obj.get(key)
    if v is None:
        return None
    if not isinstance(v, str):
        raise SchemaError(f"{key} must be a string")
    return v


def parse_event_line(line: str, line_no: int = 0, strict: bool = False) -> Event:
    """Parse one JSON-Lines record into an Event.

    Unknown fields are ignored unless strict, in which case they are a
    SchemaError. Raises ParseError for malformed JSON and SchemaError for
    invariant violations.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(line_no, f"bad JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError(line_no, "record must be a JSON object")

    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise SchemaError(f"missing required field {key}")
    if strict:
        unknown = set(obj) - _KNOWN_KEYS
        if unknown:
            raise SchemaError(f"unknown field {sorted(unknown)[0]}")

    ts = obj["ts"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise SchemaError("ts must be an integer")
    if ts < 0:
        raise SchemaError("ts must be >= 0")

    entity = obj["entity"]
    if not isinstance(entity, str) or not entity:
        raise SchemaError("entity must be a non-empty string")

    kind_raw = obj["kind"]
    kind = _KIND_VALUES.get(kind_raw)
    if kind is None:
        raise SchemaError(f"unknown kind {kind_raw!r}")

    nbytes = obj.get("bytes")
    if nbytes is not None:
        if isinstance(nbytes, bool) or not isinstance(nbytes, int):
            raise SchemaError("bytes must be an integer")
        if nbytes < 0:
            raise SchemaError("bytes must be >= 0")

    entropy = obj.get("entropy")
    if entropy is not None:
        if isinstance(entropy, bool) or not isinstance(entropy, (int, float)):
            raise SchemaError("entropy must be a number")
        entropy = float(entropy)
        if not (0.0 <= entropy <= 8.0):
            raise SchemaError("entropy out of [0,8]")

    ext_before = _opt_str(obj, "ext_before")
    ext_after = _opt_str(obj, "ext_after")
    if kind is EventKind.FILE_RENAME:
        if ext_before is None or ext_after is None:
            raise SchemaError("file_rename requires ext_before and ext_after")
    elif ext_before is not None or ext_after is not None:
        raise SchemaError("ext_before/ext_after only valid on file_rename")

    truth_raw = obj.get("truth")
    truth = None
    if truth_raw is not None:
        truth = _TRUTH_VALUES.get(truth_raw)
        if truth is None:
            raise SchemaError(f"unknown truth {truth_raw!r}")

    return Event(
        ts=ts,
        entity=entity,
        kind=kind,
        path=_opt_str(obj, "path"),
        ext_before=ext_before,
        ext_after=ext_after,
        bytes=nbytes,
        entropy=entropy,
        dst=_opt_str(obj, "dst"),
        truth=truth,
    )


@dataclass
class EventStream:
    """A single-consumer event source: a file path or '-' for stdin."""

    source: str
    strict: bool = False
    cursor: int = 0
    skipped_count: int = 0
    monotonicity_warnings: int = 0
    _last_ts: int = field(default=-1, repr=False)

    def _open(self) -> IO[str]:
        if self.source == STDIN_MARKER:
            return io.TextIOWrapper(sys.stdin.buffer, encoding="utf-8")
        return open(self.source, "r", encoding="utf-8")

    def __iter__(self) -> Iterator[Event]:
        return read_stream(self)


def read_stream(stream: EventStream) -> Iterator[Event]:
    """Yield events from the stream in input order.

    Non-strict mode skips malformed or schema-violating lines, counting them
    in stream.skipped_count; strict mode aborts on the first bad line.
    """
    fh = stream._open()
    try:
        for raw in fh:
            stream.cursor += 1
            line = raw.strip()
            if not line:
                continue
            try:
                event = parse_event_line(line, stream.cursor, strict=stream.strict)
            except (ParseError, SchemaError):
                if stream.strict:
                    raise
                stream.skipped_count += 1
                continue
            if event.ts < stream._last_ts:
                stream.monotonicity_warnings += 1
            stream._last_ts = event.ts
            yield event
    finally:
        if stream.source != STDIN_MARKER:
            fh.close()


def read_events(path: str, strict: bool = False) -> list[Event]:
    """Eagerly read every event from a file (convenience for tests/tools)."""
    return list(read_stream(EventStream(source=path, strict=strict)))
