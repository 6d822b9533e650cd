"""Sliding-window feature extraction: an entity's recent events -> [0,1]^12.

The window is event-count bounded (last W events per entity); elapsed span
normalizes rates. Aggregates are maintained incrementally but exactly
(counts and timestamps as ints, entropy sums as fixed-point integers), so
extraction is O(1) per event and a window's vector depends only on the
window contents, never on the append/evict history that produced them.

Component layout (raw value -> squash):
   1 write_rate          file_write count / span             r/(r+20)
   2 mean_write_entropy  mean entropy of writes carrying it  /8
   3 entropy_lift        max(0, write mean - read mean)      /8
   4 rename_rate         renames / span                      r/(r+5)
   5 ext_change_ratio    ext-changing renames / renames      identity
   6 distinct_paths      unique path count                   log2(1+u)/16, cap 1
   7 read_then_write     written paths read earlier          identity
   8 delete_rate         deletes / span                      r/(r+5)
   9 egress_rate         net_send bytes / span               log2(1+b)/30, cap 1
  10 conn_rate           net_connect count / span            r/(r+10)
  11 priv_flag           any priv_change present             0 or 1
  12 burstiness          var/mean of inter-event gaps (us)   v/(v+1e6), 0 if <3 events
"""

from __future__ import annotations

import math
from collections import deque
from typing import Iterable, Mapping

from .types import Event, EventKind, FeatureVector, ZsdError

# Fixed-point scale covering every positive double exactly (subnormals
# have denominator up to 2^1074), so entropy sums are order-independent.
_FP_BITS = 1074

_K_WRITE = EventKind.FILE_WRITE
_K_READ = EventKind.FILE_READ
_K_RENAME = EventKind.FILE_RENAME
_K_DELETE = EventKind.FILE_DELETE
_K_CONNECT = EventKind.NET_CONNECT
_K_SEND = EventKind.NET_SEND
_K_PRIV = EventKind.PRIV_CHANGE
_LOG2 = math.log2


class EmptyInputError(ZsdError):
    """Histogram has no observations."""


def _fp(x: float) -> int:
    p, q = x.as_integer_ratio()
    return p << (_FP_BITS - (q.bit_length() - 1))


def _fp_mean(total: int, count: int) -> float:
    # int/int division is correctly rounded, one rounding for the true mean
    return total / (count << _FP_BITS)


def shannon_entropy(counts: Iterable[int] | Mapping[int, int]) -> float:
    """Shannon entropy in bits/byte of a 256-value byte histogram.

    Accepts a mapping byte->count or an iterable of counts. Raises
    EmptyInputError when the histogram sums to zero.
    """
    values = counts.values() if isinstance(counts, Mapping) else counts
    values = [c for c in values if c]
    total = sum(values)
    if total <= 0:
        raise EmptyInputError("entropy of empty histogram")
    h = 0.0
    for c in values:
        p = c / total
        h -= p * math.log2(p)
    return min(max(h, 0.0), 8.0)


class _PathTrack:
    """Per-path read/write positions inside one window (FIFO by event seq)."""

    __slots__ = ("refs", "reads", "writes", "has_write", "qualified")

    def __init__(self) -> None:
        self.refs = 0
        self.reads: deque[int] = deque()
        self.writes: deque[int] = deque()
        self.has_write = False
        self.qualified = False  # some read precedes some write


class EntityWindow:
    """Ring buffer of the last W events for one entity, with exact aggregates."""

    __slots__ = (
        "entity", "capacity", "events", "seq",
        "n_writes", "n_reads", "n_renames", "n_renames_ext", "n_deletes",
        "n_connects", "n_priv",
        "went_sum", "went_count", "rent_sum", "rent_count",
        "send_bytes", "gap_sum", "gap_sumsq", "n_gaps",
        "paths", "written_paths", "read_then_written",
        "_went_mean", "_rent_mean",
    )

    def __init__(self, entity: str, capacity: int):
        self.entity = entity
        self.capacity = capacity
        self.events: deque[Event] = deque()
        self.seq = 0
        self.n_writes = 0
        self.n_reads = 0
        self.n_renames = 0
        self.n_renames_ext = 0
        self.n_deletes = 0
        self.n_connects = 0
        self.n_priv = 0
        self.went_sum = 0
        self.went_count = 0
        self.rent_sum = 0
        self.rent_count = 0
        self.send_bytes = 0
        self.gap_sum = 0
        self.gap_sumsq = 0
        self.n_gaps = 0
        self.paths: dict[str, _PathTrack] = {}
        self.written_paths = 0
        self.read_then_written = 0
        # memoized means; None marks them stale (pure in the aggregates)
        self._went_mean: float | None = 0.0
        self._rent_mean: float | None = 0.0

    def __len__(self) -> int:
        return len(self.events)

    @property
    def span_seconds(self) -> float:
        if not self.events:
            return 0.001
        span = (self.events[-1].ts - self.events[0].ts) / 1e6
        return span if span > 0.001 else 0.001

    def append(self, event: Event) -> int:
        """Add one event (evicting the oldest when full); returns its seq id."""
        self.seq += 1
        seq = self.seq
        events = self.events
        if events:
            gap = event.ts - events[-1].ts
            if len(events) == self.capacity:
                old = events.popleft()
                if events:
                    old_gap = events[0].ts - old.ts
                    self.gap_sum += gap - old_gap
                    self.gap_sumsq += gap * gap - old_gap * old_gap
                self._tally(old, 0, -1)
            else:
                self.gap_sum += gap
                self.gap_sumsq += gap * gap
                self.n_gaps += 1
        events.append(event)
        self._tally(event, seq, +1)
        return seq

    def _tally(self, event: Event, seq: int, sign: int) -> None:
        kind = event.kind
        if kind is _K_READ:
            self.n_reads += sign
            entropy = event.entropy
            if entropy is not None:
                self.rent_sum += sign * _fp(entropy)
                self.rent_count += sign
                self._rent_mean = None
        elif kind is _K_WRITE:
            self.n_writes += sign
            entropy = event.entropy
            if entropy is not None:
                self.went_sum += sign * _fp(entropy)
                self.went_count += sign
                self._went_mean = None
        elif kind is _K_RENAME:
            self.n_renames += sign
            if event.ext_after != event.ext_before:
                self.n_renames_ext += sign
        elif kind is _K_SEND:
            if event.bytes is not None:
                self.send_bytes += sign * event.bytes
        elif kind is _K_CONNECT:
            self.n_connects += sign
        elif kind is _K_DELETE:
            self.n_deletes += sign
        elif kind is _K_PRIV:
            self.n_priv += sign

        path = event.path
        if path is None:
            return
        if sign > 0:
            track = self.paths.get(path)
            if track is None:
                track = self.paths[path] = _PathTrack()
            track.refs += 1
            if kind is _K_READ:
                track.reads.append(seq)
            elif kind is _K_WRITE:
                track.writes.append(seq)
            else:
                return
        else:
            track = self.paths[path]
            track.refs -= 1
            if kind is _K_READ:
                track.reads.popleft()
            elif kind is _K_WRITE:
                track.writes.popleft()
            elif track.refs == 0:
                del self.paths[path]
                return
            else:
                return
        # refresh the written/read-then-written counters for this path
        has_write = bool(track.writes)
        if has_write != track.has_write:
            self.written_paths += 1 if has_write else -1
            track.has_write = has_write
        qualified = bool(track.reads) and has_write and track.reads[0] < track.writes[-1]
        if qualified != track.qualified:
            self.read_then_written += 1 if qualified else -1
            track.qualified = qualified
        if sign < 0 and track.refs == 0:
            del self.paths[path]


def extract_values(window: EntityWindow) -> list[float]:
    """Compute the 12 squashed components for the window's current contents."""
    events = window.events
    span = (events[-1].ts - events[0].ts) / 1e6
    if span < 0.001:
        span = 0.001

    r = window.n_writes / span
    f1 = r / (r + 20.0)

    went_mean = window._went_mean
    if went_mean is None:
        count = window.went_count
        went_mean = _fp_mean(window.went_sum, count) if count else 0.0
        window._went_mean = went_mean
    f2 = went_mean / 8.0

    rent_mean = window._rent_mean
    if rent_mean is None:
        count = window.rent_count
        rent_mean = _fp_mean(window.rent_sum, count) if count else 0.0
        window._rent_mean = rent_mean
    lift = went_mean - rent_mean
    f3 = lift / 8.0 if lift > 0.0 else 0.0

    n_renames = window.n_renames
    r = n_renames / span
    f4 = r / (r + 5.0)

    f5 = window.n_renames_ext / n_renames if n_renames else 0.0

    f6 = _LOG2(1.0 + len(window.paths)) / 16.0
    if f6 > 1.0:
        f6 = 1.0

    written = window.written_paths
    f7 = window.read_then_written / written if written else 0.0

    r = window.n_deletes / span
    f8 = r / (r + 5.0)

    b = window.send_bytes
    if b:
        f9 = _LOG2(1.0 + b / span) / 30.0
        if f9 > 1.0:
            f9 = 1.0
    else:
        f9 = 0.0

    r = window.n_connects / span
    f10 = r / (r + 10.0)

    f11 = 1.0 if window.n_priv else 0.0

    n_gaps = window.n_gaps
    gap_sum = window.gap_sum
    if n_gaps >= 2 and gap_sum > 0:
        var_num = n_gaps * window.gap_sumsq - gap_sum * gap_sum
        v = var_num / (n_gaps * gap_sum)
        f12 = v / (v + 1e6)
    else:
        f12 = 0.0

    return [f1, f2, f3, f4, f5, f6, f7, f8, f9, f10, f11, f12]


def extract(window: EntityWindow) -> FeatureVector:
    """Feature vector for the window's current contents (pure in the contents)."""
    if not window.events:
        raise ValueError("extract requires a non-empty window")
    values = extract_values(window)
    if __debug__:
        for i, val in enumerate(values):
            assert 0.0 <= val <= 1.0 and math.isfinite(val), f"component {i+1}={val}"
    return FeatureVector(values=tuple(values), window_id=window.seq, entity=window.entity)
