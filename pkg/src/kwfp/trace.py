"""Trace data model and the line-delimited JSON trace format.

A :class:`TraceSample` is one search session: metadata plus an ordered tuple
of :class:`Connection` objects.  Per-connection packets are held as three
parallel numpy arrays (timestamps in integer microseconds, directions as
+1/-1, sizes in bytes) so feature extraction can stay vectorized;
:attr:`Connection.packets` gives the record view.

On disk, a dataset is UTF-8 text with one JSON object per line::

    {"meta":{"label":...,"engine":...,"browser":...,"mode":...,
             "capture_start_us":...,"first_keystroke_us":...,"visit_index":...},
     "connections":[{"server_name":...,"port":443,"pre_typing":false,
                     "packets":[[ts_us,"-",size],...]}, ...]}

Key order is fixed, unknown keys are rejected and optional keys
(``first_keystroke_us``, ``server_name``) are omitted when absent.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import TraceFormatError, TraceValidationError

NON_TARGETED = "-1"
MODES = ("homepage", "addressbar")


class Direction(enum.IntEnum):
    OUTGOING = -1  # client -> server
    INCOMING = 1  # server -> client

    @property
    def symbol(self) -> str:
        return "+" if self is Direction.INCOMING else "-"

    @classmethod
    def from_symbol(cls, symbol: str) -> "Direction":
        if symbol == "+":
            return cls.INCOMING
        if symbol == "-":
            return cls.OUTGOING
        raise ValueError(f"direction must be '+' or '-', got {symbol!r}")


class PacketRecord(NamedTuple):
    timestamp: int
    direction: Direction
    size: int


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Connection:
    """One TCP flow. Direction is relative to the client endpoint."""

    timestamps: np.ndarray
    directions: np.ndarray
    sizes: np.ndarray
    server_name: str | None = None
    server_port: int = 443
    established_before_typing: bool = False
    conn_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "timestamps", _frozen(self.timestamps, np.int64))
        object.__setattr__(self, "directions", _frozen(self.directions, np.int8))
        object.__setattr__(self, "sizes", _frozen(self.sizes, np.int64))
        if not (len(self.timestamps) == len(self.directions) == len(self.sizes)):
            raise ValueError("timestamps, directions and sizes must have equal length")

    @classmethod
    def from_packets(cls, packets: Iterable[Sequence], **kwargs) -> "Connection":
        rows = [(int(t), int(d), int(s)) for t, d, s in packets]
        ts = [r[0] for r in rows]
        ds = [r[1] for r in rows]
        ss = [r[2] for r in rows]
        return cls(ts, ds, ss, **kwargs)

    @property
    def packets(self) -> list[PacketRecord]:
        return [
            PacketRecord(int(t), Direction(int(d)), int(s))
            for t, d, s in zip(self.timestamps, self.directions, self.sizes)
        ]

    def __len__(self) -> int:
        return len(self.sizes)

    @property
    def first_timestamp(self) -> float:
        return float(self.timestamps[0]) if len(self.timestamps) else float("inf")

    def bytes_by_direction(self) -> tuple[int, int]:
        """Return ``(incoming_bytes, outgoing_bytes)``."""
        incoming = int(self.sizes[self.directions > 0].sum())
        outgoing = int(self.sizes[self.directions < 0].sum())
        return incoming, outgoing

    def select(self, mask: np.ndarray) -> "Connection":
        return replace(
            self,
            timestamps=self.timestamps[mask],
            directions=self.directions[mask],
            sizes=self.sizes[mask],
        )

    def __eq__(self, other):
        if not isinstance(other, Connection):
            return NotImplemented
        return (
            self.server_name == other.server_name
            and self.server_port == other.server_port
            and self.established_before_typing == other.established_before_typing
            and self.conn_id == other.conn_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.directions, other.directions)
            and np.array_equal(self.sizes, other.sizes)
        )

    __hash__ = None


@dataclass(frozen=True)
class SampleMeta:
    label: str
    engine: str = ""
    browser: str = ""
    mode: str = "homepage"
    capture_start_us: int = 0
    first_keystroke_us: int | None = None
    visit_index: int = 0

    @property
    def is_targeted(self) -> bool:
        return self.label != NON_TARGETED


class Timeline(NamedTuple):
    """All packets of a sample merged by time (stable across connections)."""

    timestamps: np.ndarray
    directions: np.ndarray
    sizes: np.ndarray
    conn_index: np.ndarray


@dataclass(frozen=True)
class TraceSample:
    """One search session.

    Connections are kept sorted by first-packet timestamp and ``conn_id`` is
    rewritten to the rank in that order.
    """

    meta: SampleMeta
    connections: tuple[Connection, ...] = ()

    def __post_init__(self):
        conns = sorted(self.connections, key=lambda c: c.first_timestamp)
        conns = tuple(c if c.conn_id == i else replace(c, conn_id=i) for i, c in enumerate(conns))
        object.__setattr__(self, "connections", conns)

    @property
    def label(self) -> str:
        return self.meta.label

    @property
    def packet_count(self) -> int:
        return sum(len(c) for c in self.connections)

    @cached_property
    def timeline(self) -> Timeline:
        if not self.connections:
            empty = np.zeros(0, dtype=np.int64)
            return Timeline(empty, empty.astype(np.int8), empty, empty)
        ts = np.concatenate([c.timestamps for c in self.connections])
        ds = np.concatenate([c.directions for c in self.connections])
        ss = np.concatenate([c.sizes for c in self.connections])
        ci = np.concatenate([np.full(len(c), i) for i, c in enumerate(self.connections)])
        order = np.argsort(ts, kind="stable")
        return Timeline(ts[order], ds[order], ss[order], ci[order])

    def with_connections(self, connections: Iterable[Connection], **meta_changes) -> "TraceSample":
        meta = replace(self.meta, **meta_changes) if meta_changes else self.meta
        return TraceSample(meta, tuple(connections))


@dataclass(frozen=True)
class Dataset:
    samples: tuple[TraceSample, ...] = ()
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[TraceSample]:
        return iter(self.samples)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.samples[i], self.provenance)
        return self.samples[i]

    @property
    def labels(self) -> list[str]:
        return [s.meta.label for s in self.samples]

    def __add__(self, other: "Dataset") -> "Dataset":
        prov = " + ".join(p for p in (self.provenance, other.provenance) if p)
        return Dataset(self.samples + other.samples, prov)

    def map(self, fn) -> "Dataset":
        return Dataset(tuple(fn(s) for s in self.samples), self.provenance)

    def filter(self, pred) -> "Dataset":
        return Dataset(tuple(s for s in self.samples if pred(s)), self.provenance)


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    type_name: str
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.type_name}.{self.field}: {self.rule}"


def validate_sample(sample: TraceSample) -> list[Violation]:
    """Check every invariant of ``sample``; an empty list means valid."""
    out: list[Violation] = []
    meta = sample.meta
    if meta.visit_index < 0:
        out.append(Violation("SampleMeta", "visit_index", "visit_index ≥ 0"))
    if meta.mode not in MODES:
        out.append(Violation("SampleMeta", "mode", f"mode in {set(MODES)}"))
    if meta.first_keystroke_us is not None and meta.first_keystroke_us < 0:
        out.append(Violation("SampleMeta", "first_keystroke_us", "first_keystroke_us ≥ 0"))
    if not sample.connections:
        out.append(Violation("TraceSample", "connections", "at least one connection"))

    ids = [c.conn_id for c in sample.connections]
    if len(set(ids)) != len(ids):
        out.append(Violation("Connection", "conn_id", "conn_id unique"))
    firsts = [c.first_timestamp for c in sample.connections]
    ranked = sorted(range(len(ids)), key=lambda i: ids[i])
    if any(firsts[a] > firsts[b] for a, b in zip(ranked, ranked[1:])):
        out.append(Violation("Connection", "conn_id", "conn_id order matches first-packet order"))

    for c in sample.connections:
        if len(c) == 0:
            out.append(Violation("Connection", "packets", "packets non-empty"))
            continue
        if not 0 <= c.server_port <= 65535:
            out.append(Violation("Connection", "server_port", "port in [0, 65535]"))
        if (c.sizes < 1).any():
            out.append(Violation("PacketRecord", "size", "size ≥ 1"))
        if (c.timestamps < 0).any():
            out.append(Violation("PacketRecord", "timestamp", "timestamp ≥ 0"))
        if (np.diff(c.timestamps) < 0).any():
            out.append(Violation("Connection", "packets", "timestamps non-decreasing"))
        if not np.isin(c.directions, (-1, 1)).all():
            out.append(Violation("PacketRecord", "direction", "direction in {+, -}"))
    return out


def check_sample(sample: TraceSample, lineno: int | None = None) -> TraceSample:
    violations = validate_sample(sample)
    if violations:
        raise TraceValidationError(violations, lineno)
    return sample


# --------------------------------------------------------------------------
# serialization

_META_KEYS = ("label", "engine", "browser", "mode", "capture_start_us", "first_keystroke_us", "visit_index")
_META_REQUIRED = frozenset(_META_KEYS) - {"first_keystroke_us"}
_CONN_KEYS = ("server_name", "port", "pre_typing", "packets")
_CONN_REQUIRED = frozenset(_CONN_KEYS) - {"server_name"}


def sample_to_obj(sample: TraceSample) -> dict:
    m = sample.meta
    meta = {
        "label": m.label,
        "engine": m.engine,
        "browser": m.browser,
        "mode": m.mode,
        "capture_start_us": int(m.capture_start_us),
    }
    if m.first_keystroke_us is not None:
        meta["first_keystroke_us"] = int(m.first_keystroke_us)
    meta["visit_index"] = int(m.visit_index)
    conns = []
    for c in sample.connections:
        obj = {}
        if c.server_name is not None:
            obj["server_name"] = c.server_name
        obj["port"] = int(c.server_port)
        obj["pre_typing"] = bool(c.established_before_typing)
        obj["packets"] = [
            [int(t), "+" if d > 0 else "-", int(s)]
            for t, d, s in zip(c.timestamps.tolist(), c.directions.tolist(), c.sizes.tolist())
        ]
        conns.append(obj)
    return {"meta": meta, "connections": conns}


def dumps_sample(sample: TraceSample) -> str:
    return json.dumps(sample_to_obj(sample), ensure_ascii=False, separators=(",", ":"))


def _check_keys(obj, order, required, where, lineno):
    if not isinstance(obj, dict):
        raise TraceFormatError(f"{where} must be an object", lineno)
    keys = list(obj)
    unknown = [k for k in keys if k not in order]
    if unknown:
        raise TraceFormatError(f"unknown field(s) in {where}: {', '.join(unknown)}", lineno)
    missing = required - set(keys)
    if missing:
        raise TraceFormatError(f"missing field(s) in {where}: {', '.join(sorted(missing))}", lineno)
    expected = [k for k in order if k in obj]
    if keys != expected:
        raise TraceFormatError(f"fields of {where} out of order: {keys}", lineno)


def _int(value, what, lineno) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TraceFormatError(f"{what} must be an integer", lineno)
    return value


def _str(value, what, lineno) -> str:
    if not isinstance(value, str):
        raise TraceFormatError(f"{what} must be a string", lineno)
    return value


def sample_from_obj(obj, lineno: int | None = None) -> TraceSample:
    _check_keys(obj, ("meta", "connections"), {"meta", "connections"}, "sample", lineno)
    m = obj["meta"]
    _check_keys(m, _META_KEYS, _META_REQUIRED, "meta", lineno)
    fk = m.get("first_keystroke_us")
    meta = SampleMeta(
        label=_str(m["label"], "meta.label", lineno),
        engine=_str(m["engine"], "meta.engine", lineno),
        browser=_str(m["browser"], "meta.browser", lineno),
        mode=_str(m["mode"], "meta.mode", lineno),
        capture_start_us=_int(m["capture_start_us"], "meta.capture_start_us", lineno),
        first_keystroke_us=None if fk is None else _int(fk, "meta.first_keystroke_us", lineno),
        visit_index=_int(m["visit_index"], "meta.visit_index", lineno),
    )
    if not isinstance(obj["connections"], list):
        raise TraceFormatError("connections must be a list", lineno)
    conns = []
    for j, c in enumerate(obj["connections"]):
        where = f"connections[{j}]"
        _check_keys(c, _CONN_KEYS, _CONN_REQUIRED, where, lineno)
        pre = c["pre_typing"]
        if not isinstance(pre, bool):
            raise TraceFormatError(f"{where}.pre_typing must be a boolean", lineno)
        name = c.get("server_name")
        if name is not None:
            _str(name, f"{where}.server_name", lineno)
        packets = c["packets"]
        if not isinstance(packets, list):
            raise TraceFormatError(f"{where}.packets must be a list", lineno)
        ts, ds, ss = [], [], []
        for k, p in enumerate(packets):
            if not isinstance(p, list) or len(p) != 3:
                raise TraceFormatError(f"{where}.packets[{k}] must be [ts, dir, size]", lineno)
            ts.append(_int(p[0], f"{where}.packets[{k}] timestamp", lineno))
            try:
                ds.append(int(Direction.from_symbol(p[1])))
            except ValueError as exc:
                raise TraceFormatError(f"{where}.packets[{k}]: {exc}", lineno) from None
            ss.append(_int(p[2], f"{where}.packets[{k}] size", lineno))
        conns.append(
            Connection(
                ts, ds, ss,
                server_name=name,
                server_port=_int(c["port"], f"{where}.port", lineno),
                established_before_typing=pre,
            )
        )
    return TraceSample(meta, tuple(conns))


def loads_sample(line: str, lineno: int | None = None) -> TraceSample:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid JSON ({exc.msg})", lineno) from None
    return sample_from_obj(obj, lineno)


def iter_samples(path: str | Path, validate: bool = True) -> Iterator[TraceSample]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            sample = loads_sample(line, lineno)
            yield check_sample(sample, lineno) if validate else sample


def load_dataset(path: str | Path, validate: bool = True) -> Dataset:
    """Read a trace file; failures carry the offending line number."""
    return Dataset(tuple(iter_samples(path, validate)), provenance=str(path))


def save_dataset(dataset: Dataset | Iterable[TraceSample], path: str | Path) -> None:
    samples = dataset.samples if isinstance(dataset, Dataset) else tuple(dataset)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for s in samples:
                fh.write(dumps_sample(s))
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc.strerror or exc}") from exc
