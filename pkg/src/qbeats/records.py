"""Time-stamped photon detection records: model, file I/O, synthesis.

A record is a time-ordered list of events, each carrying an integer
nanosecond timestamp, the observed channel and the true originating
channel (identical unless a detector-imperfection post-process relabels
or injects events).  Timestamps are quantized to 1 ns at record creation,
like a hardware time tagger, which keeps the files bit-exact and
diff-able; simultaneous stamps are therefore possible and event order is
non-decreasing with ties broken by channel ordinal.

Text format: '# key=value' header lines, then one 't_ns,channel,truth'
line per event.  Binary format: the same header, then a '#binary events=N'
marker followed by N packed little-endian (u64 t_ns, u8 channel, u8 truth)
triples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np


class Channel(IntEnum):
    """Detection / emission channels; the ordinal is the tie-break order."""

    H_DET_A = 0
    H_DET_B = 1
    V_OUT = 2
    SIDE_PI = 3
    SIDE_SIGMA_PLUS = 4
    SIDE_SIGMA_MINUS = 5
    DARK = 6


CHANNEL_NAMES = {c: c.name for c in Channel}
_NAME_TO_CHANNEL = {c.name: c for c in Channel}

H_DETECTORS = (Channel.H_DET_A, Channel.H_DET_B)
SIDE_CHANNELS = (Channel.SIDE_PI, Channel.SIDE_SIGMA_PLUS, Channel.SIDE_SIGMA_MINUS)

_BINARY_MAGIC = "# qbeats-record binary v1"
_TEXT_MAGIC = "# qbeats-record v1"
_EVENT_STRUCT = struct.Struct("<QBB")


class RecordParseError(ValueError):
    """Malformed record file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class RecordValidationError(ValueError):
    """Record violates an invariant (ordering, range, channel codes)."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class DetectionRecord:
    """Immutable time-ordered detection record.

    times_ns, channels and truth are parallel arrays; `starts` optionally
    holds conditioning-event times (ns) selected by a post-selection filter
    and is derived data, never serialized.
    """

    times_ns: np.ndarray
    channels: np.ndarray
    truth: np.ndarray
    duration_ns: int
    metadata: dict = field(default_factory=dict)
    starts: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "times_ns", np.asarray(self.times_ns, dtype=np.int64))
        object.__setattr__(self, "channels", np.asarray(self.channels, dtype=np.uint8))
        object.__setattr__(self, "truth", np.asarray(self.truth, dtype=np.uint8))

    @property
    def n_events(self) -> int:
        return len(self.times_ns)

    @property
    def duration(self) -> float:
        return self.duration_ns * 1e-9

    def times(self) -> np.ndarray:
        """Timestamps in seconds."""
        return self.times_ns * 1e-9

    def channel_times_ns(self, channels) -> np.ndarray:
        """Timestamps (ns) of events on the given channel(s)."""
        channels = np.atleast_1d(np.asarray(channels, dtype=np.uint8))
        mask = np.isin(self.channels, channels)
        return self.times_ns[mask]

    def counts(self) -> dict:
        return {Channel(c).name: int(n)
                for c, n in zip(*np.unique(self.channels, return_counts=True))}

    def with_starts(self, starts_ns) -> "DetectionRecord":
        return replace(self, starts=np.asarray(starts_ns, dtype=np.int64))

    def subset(self, mask) -> "DetectionRecord":
        return replace(self, times_ns=self.times_ns[mask],
                       channels=self.channels[mask], truth=self.truth[mask],
                       starts=None)


def make_record(times_ns, channels, truth=None, duration_ns=None,
                metadata=None) -> DetectionRecord:
    """Assemble, sort (time, channel) and validate a record."""
    times_ns = np.asarray(times_ns, dtype=np.int64)
    channels = np.asarray(channels, dtype=np.uint8)
    truth = channels.copy() if truth is None else np.asarray(truth, dtype=np.uint8)
    order = np.lexsort((channels, times_ns))
    if duration_ns is None:
        duration_ns = int(times_ns[order[-1]]) if len(times_ns) else 0
    rec = DetectionRecord(times_ns=times_ns[order], channels=channels[order],
                          truth=truth[order], duration_ns=int(duration_ns),
                          metadata=dict(metadata or {}))
    validate_record(rec)
    return rec


def validate_record(record: DetectionRecord) -> None:
    """Check ordering, timestamp range and channel codes.

    The failure message carries the 1-based data-line number of the first
    offending event so file problems are locatable.
    """
    t = record.times_ns
    if len(t) == 0:
        return
    bad = np.nonzero(np.diff(t) < 0)[0]
    if len(bad):
        raise RecordValidationError(
            f"timestamps decrease at event {bad[0] + 2}", line=int(bad[0]) + 2)
    if t[0] < 0:
        raise RecordValidationError("negative timestamp", line=1)
    if t[-1] > record.duration_ns:
        idx = int(np.searchsorted(t, record.duration_ns, side="right"))
        raise RecordValidationError(
            f"timestamp beyond duration at event {idx + 1}", line=idx + 1)
    for arr, what in ((record.channels, "channel"), (record.truth, "truth")):
        bad = np.nonzero(arr > max(Channel))[0]
        if len(bad):
            raise RecordValidationError(f"invalid {what} code", line=int(bad[0]) + 1)


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def _header_lines(record: DetectionRecord, magic: str) -> list[str]:
    lines = [magic, f"# duration_ns={record.duration_ns}"]
    for key in sorted(record.metadata):
        value = str(record.metadata[key])
        if "\n" in value or "=" in key:
            raise ValueError(f"metadata entry {key!r} is not representable")
        lines.append(f"# {key}={value}")
    return lines


def write_record(record: DetectionRecord, path, binary: bool | None = None) -> None:
    """Write a record; binary defaults to the '.qbr' extension convention."""
    if binary is None:
        binary = str(path).endswith(".qbr")
    if binary:
        with open(path, "wb") as fh:
            for line in _header_lines(record, _BINARY_MAGIC):
                fh.write(line.encode() + b"\n")
            fh.write(f"#binary events={record.n_events}\n".encode())
            for t, c, tr in zip(record.times_ns, record.channels, record.truth):
                fh.write(_EVENT_STRUCT.pack(t, c, tr))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for line in _header_lines(record, _TEXT_MAGIC):
                fh.write(line + "\n")
            for t, c, tr in zip(record.times_ns, record.channels, record.truth):
                fh.write(f"{t},{Channel(c).name},{Channel(tr).name}\n")


def _parse_headers(lines) -> tuple[dict, int]:
    meta = {}
    consumed = 0
    for raw in lines:
        text = raw.strip()
        if not text.startswith("#"):
            break
        consumed += 1
        body = text.lstrip("#").strip()
        if "=" in body and not body.startswith("binary"):
            key, _, value = body.partition("=")
            meta[key.strip()] = value.strip()
    return meta, consumed


def _channel_from_token(token: str, line: int) -> int:
    token = token.strip()
    if token in _NAME_TO_CHANNEL:
        return int(_NAME_TO_CHANNEL[token])
    try:
        return int(Channel(int(token)))
    except (ValueError, KeyError) as exc:
        raise RecordParseError(f"unknown channel {token!r}", line=line) from exc


def read_record(path) -> DetectionRecord:
    """Read either record format back; the result round-trips bit-exactly."""
    with open(path, "rb") as fh:
        first = fh.readline().decode("utf-8", errors="replace").rstrip("\n")
        if first == _BINARY_MAGIC:
            return _read_binary(fh)
    if first not in (_TEXT_MAGIC,) and not first.startswith("#"):
        raise RecordParseError("missing record header", line=1)
    return _read_text(path)


def _read_binary(fh) -> DetectionRecord:
    meta = {}
    n_events = None
    line_no = 1
    while True:
        line_no += 1
        raw = fh.readline()
        if not raw:
            raise RecordParseError("missing binary marker", line=line_no)
        text = raw.decode("utf-8", errors="replace").strip()
        if text.startswith("#binary"):
            try:
                n_events = int(text.split("events=")[1])
            except (IndexError, ValueError) as exc:
                raise RecordParseError("bad binary marker", line=line_no) from exc
            break
        body = text.lstrip("#").strip()
        if "=" in body:
            key, _, value = body.partition("=")
            meta[key.strip()] = value.strip()
    blob = fh.read(n_events * _EVENT_STRUCT.size)
    if len(blob) != n_events * _EVENT_STRUCT.size:
        raise RecordParseError("truncated binary payload", line=line_no + 1)
    times = np.empty(n_events, dtype=np.int64)
    chans = np.empty(n_events, dtype=np.uint8)
    truth = np.empty(n_events, dtype=np.uint8)
    for i, (t, c, tr) in enumerate(_EVENT_STRUCT.iter_unpack(blob)):
        times[i], chans[i], truth[i] = t, c, tr
    return _finalize_read(times, chans, truth, meta)


def _read_text(path) -> DetectionRecord:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, consumed = _parse_headers(lines)
    times, chans, truth = [], [], []
    for offset, raw in enumerate(lines[consumed:]):
        line_no = consumed + offset + 1
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split(",")
        if len(parts) != 3:
            raise RecordParseError("expected 't_ns,channel,truth'", line=line_no)
        try:
            t = int(parts[0])
        except ValueError as exc:
            raise RecordParseError(f"bad timestamp {parts[0]!r}", line=line_no) from exc
        times.append(t)
        chans.append(_channel_from_token(parts[1], line_no))
        truth.append(_channel_from_token(parts[2], line_no))
    return _finalize_read(np.asarray(times, dtype=np.int64),
                          np.asarray(chans, dtype=np.uint8),
                          np.asarray(truth, dtype=np.uint8), meta)


def _finalize_read(times, chans, truth, meta) -> DetectionRecord:
    try:
        duration_ns = int(meta.pop("duration_ns"))
    except KeyError:
        duration_ns = int(times[-1]) if len(times) else 0
    rec = DetectionRecord(times_ns=times, channels=chans, truth=truth,
                          duration_ns=duration_ns, metadata=meta)
    try:
        validate_record(rec)
    except RecordValidationError as exc:
        # Data lines start after the header block; keep the event index.
        raise RecordValidationError(str(exc), line=exc.line) from None
    return rec


# --------------------------------------------------------------------------
# Merging and synthesis
# --------------------------------------------------------------------------


def merge_records(records, offsets_ns=None) -> DetectionRecord:
    """Time-sorted union of records, each shifted by its offset (ns).

    Overlaying independent single-atom records this way synthesizes
    multi-atom data in the weak-drive incoherent-ensemble regime.  Ties
    are ordered by channel ordinal, making the merge associative and
    commutative up to simultaneous identical stamps.
    """
    records = list(records)
    if offsets_ns is None:
        offsets_ns = [0] * len(records)
    if len(offsets_ns) != len(records):
        raise ValueError("need one offset per record")
    if not records:
        return make_record([], [], duration_ns=0)
    times = np.concatenate([r.times_ns + int(off)
                            for r, off in zip(records, offsets_ns)])
    chans = np.concatenate([r.channels for r in records])
    truth = np.concatenate([r.truth for r in records])
    duration = max(int(off) + r.duration_ns for r, off in zip(records, offsets_ns))
    meta = {"merged_from": str(len(records))}
    for i, r in enumerate(records):
        if "seed" in r.metadata:
            meta[f"source_{i}_seed"] = r.metadata["seed"]
    return make_record(times, chans, truth, duration_ns=duration, metadata=meta)


def poisson_record(rate: float, duration: float, rng: np.random.Generator,
                   channel: Channel = Channel.V_OUT) -> DetectionRecord:
    """Homogeneous Poisson click stream (rate in 1/s, duration in s)."""
    n = rng.poisson(rate * duration)
    times = np.sort(rng.integers(0, max(int(round(duration * 1e9)), 1), size=n))
    chans = np.full(n, int(channel), dtype=np.uint8)
    return make_record(times, chans, duration_ns=int(round(duration * 1e9)),
                       metadata={"generator": "poisson", "rate_hz": repr(rate)})


def apply_detector_model(record: DetectionRecord, rng: np.random.Generator,
                         efficiency: float = 1.0, dead_time: float = 0.0,
                         dark_rate: float = 0.0,
                         channels=H_DETECTORS) -> DetectionRecord:
    """Optional detector imperfections: thinning, dead time, dark counts.

    Applies per detector channel; all other channels pass through.  Dark
    counts are labeled truth=DARK.  Default arguments leave the record
    unchanged.
    """
    affected = [int(c) for c in np.atleast_1d(np.asarray(channels, dtype=np.uint8))]
    times, chans, truth = [record.times_ns], [record.channels], [record.truth]
    keep = np.ones(record.n_events, dtype=bool)
    for c in affected:
        mask = record.channels == c
        idx = np.nonzero(mask)[0]
        if efficiency < 1.0 and len(idx):
            keep[idx] &= rng.random(len(idx)) < efficiency
        if dead_time > 0.0 and len(idx):
            dead_ns = int(round(dead_time * 1e9))
            last = -np.inf
            for i in idx:
                if not keep[i]:
                    continue
                if record.times_ns[i] - last < dead_ns:
                    keep[i] = False
                else:
                    last = record.times_ns[i]
        if dark_rate > 0.0:
            n_dark = rng.poisson(dark_rate * record.duration)
            dark_t = rng.integers(0, max(record.duration_ns, 1), size=n_dark)
            times.append(dark_t.astype(np.int64))
            chans.append(np.full(n_dark, c, dtype=np.uint8))
            truth.append(np.full(n_dark, int(Channel.DARK), dtype=np.uint8))
    times[0], chans[0], truth[0] = times[0][keep], chans[0][keep], truth[0][keep]
    return make_record(np.concatenate(times), np.concatenate(chans),
                       np.concatenate(truth), duration_ns=record.duration_ns,
                       metadata=dict(record.metadata))
