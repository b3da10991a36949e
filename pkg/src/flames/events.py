"""Spike-event streams: ingestion, validation, batching, and synthetic generators.

The event file format is line-oriented UTF-8 text, one event per line as
``t,x,y,p`` with ``t`` in decimal seconds, LF line endings, ``#`` comment
lines, and the sensor geometry declared in a ``#geometry w h`` header line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

Geometry = tuple[int, int]  # (width, height)
ChannelMap = Callable[[int, int, float], int]


class EventFormatError(ValueError):
    """Malformed event input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class SpikeEvent:
    """One sensor event: pixel column x, pixel row y, time t (s), polarity/magnitude p."""

    x: int
    y: int
    t: float
    p: float

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative pixel coordinate ({self.x}, {self.y})")
        if not math.isfinite(self.t) or self.t < 0:
            raise ValueError(f"timestamp must be finite and >= 0, got {self.t}")
        if not math.isfinite(self.p):
            raise ValueError(f"polarity must be finite, got {self.p}")


@dataclass(frozen=True)
class EventStream:
    """Time-sorted sequence of events on a fixed sensor geometry.

    Immutable after construction and safe to share across threads.
    ``channels`` is the number of logical input channels M; the default
    flattening channel map covers ``width * height`` channels.
    """

    events: tuple[SpikeEvent, ...]
    geometry: Geometry
    channels: int = 0

    def __post_init__(self):
        w, h = self.geometry
        if w < 1 or h < 1:
            raise ValueError(f"geometry must be positive, got {self.geometry}")
        if self.channels == 0:
            object.__setattr__(self, "channels", w * h)
        prev = -math.inf
        for i, ev in enumerate(self.events):
            if ev.x >= w or ev.y >= h:
                raise ValueError(
                    f"event {i} at ({ev.x}, {ev.y}) outside geometry {w}x{h}"
                )
            if ev.t < prev:
                raise ValueError(f"event {i} breaks timestamp order")
            prev = ev.t

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class SpikeBatch:
    """All event magnitudes sharing one timestamp, summed per channel."""

    t: float
    values: np.ndarray  # shape (M,)


def flat_channel_map(geometry: Geometry) -> ChannelMap:
    """Default map: channel = y * width + x, polarity ignored for routing."""
    width = geometry[0]

    def cmap(x: int, y: int, p: float) -> int:
        return y * width + x

    return cmap


def polarity_split_channel_map(geometry: Geometry) -> ChannelMap:
    """Alternative map keeping ON/OFF polarities on separate channels."""
    width = geometry[0]

    def cmap(x: int, y: int, p: float) -> int:
        return 2 * (y * width + x) + (1 if p > 0 else 0)

    return cmap


def _format_float(v: float) -> str:
    # repr() is the shortest string that round-trips the float64 exactly
    return repr(float(v))


def serialize_events(stream: EventStream) -> str:
    """Canonical text form; ``ingest_events`` of the result reproduces the stream."""
    w, h = stream.geometry
    lines = [f"#geometry {w} {h}"]
    for ev in stream.events:
        lines.append(
            f"{_format_float(ev.t)},{ev.x},{ev.y},{_format_float(ev.p)}"
        )
    return "\n".join(lines) + "\n"


def ingest_events(
    source: str | Iterable[str],
    geometry: Geometry | None = None,
    resort: bool = False,
) -> EventStream:
    """Parse an event text source into a validated, time-sorted stream.

    ``geometry`` overrides any ``#geometry`` header; one of the two must be
    present.  Decreasing timestamps are rejected unless ``resort`` is set, in
    which case a stable sort preserves input order among equal timestamps.
    """
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = source

    header_geometry: Geometry | None = None
    events: list[SpikeEvent] = []
    prev_t = -math.inf
    monotonic = True
    bad_line = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("geometry"):
                parts = body.split()
                if len(parts) != 3:
                    raise EventFormatError(
                        f"bad geometry header {line!r}", line=lineno
                    )
                try:
                    header_geometry = (int(parts[1]), int(parts[2]))
                except ValueError:
                    raise EventFormatError(
                        f"bad geometry header {line!r}", line=lineno
                    ) from None
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise EventFormatError(
                f"expected 4 comma-separated fields, got {len(fields)}",
                line=lineno,
            )
        try:
            t = float(fields[0])
            x = int(fields[1])
            y = int(fields[2])
            p = float(fields[3])
            ev = SpikeEvent(x=x, y=y, t=t, p=p)
        except ValueError as exc:
            raise EventFormatError(str(exc), line=lineno) from None
        if ev.t < prev_t and monotonic:
            monotonic = False
            bad_line = lineno
        prev_t = ev.t
        events.append(ev)

    if not monotonic:
        if not resort:
            raise EventFormatError("non-monotonic timestamp", line=bad_line)
        events.sort(key=lambda e: e.t)  # stable: file order kept among ties

    geom = geometry if geometry is not None else header_geometry
    if geom is None:
        raise EventFormatError(
            "no geometry: pass one explicitly or declare a '#geometry w h' header"
        )
    return EventStream(events=tuple(events), geometry=geom)


def batch_by_timestamp(
    stream: EventStream, channel_map: ChannelMap | None = None
) -> list[SpikeBatch]:
    """Group the stream into one batch per distinct timestamp.

    ``values[c]`` sums the (signed) magnitudes p of all events mapping to
    channel c at that timestamp, so the total over all batches conserves the
    total event magnitude.
    """
    if channel_map is None:
        channel_map = flat_channel_map(stream.geometry)
    m = stream.channels
    batches: list[SpikeBatch] = []
    values: np.ndarray | None = None
    current_t = None
    for ev in stream.events:
        c = channel_map(ev.x, ev.y, ev.p)
        if not 0 <= c < m:
            raise ValueError(
                f"channel_map produced index {c} outside [0, {m})"
            )
        if current_t is None or ev.t != current_t:
            if values is not None:
                batches.append(SpikeBatch(t=current_t, values=values))
            current_t = ev.t
            values = np.zeros(m)
        values[c] += ev.p
    if values is not None:
        batches.append(SpikeBatch(t=current_t, values=values))
    return batches


def _channel_coords(channel: int, geometry: Geometry) -> tuple[int, int]:
    w = geometry[0]
    return channel % w, channel // w


def generate_poisson(
    rate: float,
    duration: float,
    channels: int = 1,
    seed: int = 0,
    geometry: Geometry | None = None,
) -> EventStream:
    """Homogeneous Poisson spike times per channel, p = +1, seeded.

    A pure function of its arguments: the same seed yields the same stream.
    """
    if rate <= 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if geometry is None:
        geometry = (channels, 1)
    rng = np.random.default_rng(seed)
    events: list[SpikeEvent] = []
    for c in range(channels):
        x, y = _channel_coords(c, geometry)
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t > duration:
                break
            events.append(SpikeEvent(x=x, y=y, t=t, p=1.0))
    events.sort(key=lambda e: e.t)
    return EventStream(tuple(events), geometry, channels)


def generate_periodic(
    period: float,
    duration: float,
    channels: int = 1,
    geometry: Geometry | None = None,
) -> EventStream:
    """Regular spikes at t = period, 2*period, ... <= duration on every channel."""
    if period <= 0:
        raise ValueError(f"period must be > 0, got {period}")
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if geometry is None:
        geometry = (channels, 1)
    # +1e-9 relative guard so k*period == duration is kept despite rounding
    count = int(math.floor(duration / period + 1e-9))
    events: list[SpikeEvent] = []
    for k in range(1, count + 1):
        t = k * period
        for c in range(channels):
            x, y = _channel_coords(c, geometry)
            events.append(SpikeEvent(x=x, y=y, t=t, p=1.0))
    return EventStream(tuple(events), geometry, channels)
