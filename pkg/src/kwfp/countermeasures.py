"""Offline padding defenses applied to recorded traces, with bandwidth accounting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import PreconditionError
from .trace import Connection, Dataset, TraceSample


@dataclass(frozen=True)
class CmConfig:
    mtu: int = 1500
    mss: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.mtu < 1 or self.mss < 1 or self.mss > self.mtu:
            raise PreconditionError("need 1 ≤ mss ≤ mtu")


@dataclass(frozen=True)
class OverheadReport:
    original_bytes: int
    transformed_bytes: int

    @property
    def overhead(self) -> float:
        if self.original_bytes <= 0:
            raise PreconditionError("overhead is undefined for zero original bytes")
        return (self.transformed_bytes - self.original_bytes) / self.original_bytes

    def __add__(self, other: "OverheadReport") -> "OverheadReport":
        return OverheadReport(self.original_bytes + other.original_bytes, self.transformed_bytes + other.transformed_bytes)


@dataclass
class HttposDiagnostics:
    # incoming packets larger than 3*mss, whose pad interval collapses to [s, s]
    clamped_packets: int = 0


def total_bytes(sample: TraceSample) -> int:
    return int(sum(int(c.sizes.sum()) for c in sample.connections))


def pad_to_mtu(sample: TraceSample, config: CmConfig = CmConfig()) -> tuple[TraceSample, OverheadReport]:
    """Set every packet size to the MTU; nothing else changes."""
    conns = []
    for c in sample.connections:
        big = np.flatnonzero(c.sizes > config.mtu)
        if len(big):
            j = int(big[0])
            raise PreconditionError(
                f"packet {j} of connection {c.conn_id} has size {int(c.sizes[j])} > mtu {config.mtu}"
            )
        conns.append(replace(c, sizes=np.full(len(c), config.mtu)))
    out = sample.with_connections(conns)
    return out, OverheadReport(total_bytes(sample), total_bytes(out))


def _segment(conn: Connection, new_sizes: np.ndarray, mss: int) -> Connection:
    """Split each incoming packet of padded size ``p`` into ``ceil(p/mss)`` segments."""
    incoming = conn.directions > 0
    reps = np.where(incoming, -(-new_sizes // mss), 1)
    ts = np.repeat(conn.timestamps, reps)
    ds = np.repeat(conn.directions, reps)
    sizes = np.repeat(new_sizes, reps)
    # position of each output packet within its segment group
    starts = np.repeat(np.cumsum(reps) - reps, reps)
    k = np.arange(len(sizes)) - starts
    last = k == np.repeat(reps, reps) - 1
    seg = np.repeat(incoming, reps)
    sizes = np.where(seg & ~last, mss, np.where(seg, sizes - mss * k, sizes))
    return replace(conn, timestamps=ts, directions=ds, sizes=sizes)


def httpos_transform(
    sample: TraceSample,
    config: CmConfig = CmConfig(),
    rng: np.random.Generator | None = None,
    diagnostics: HttposDiagnostics | None = None,
) -> tuple[TraceSample, OverheadReport]:
    """Randomised padding with MSS segmentation of incoming data.

    Outgoing size ``s`` becomes a uniform integer in ``[s, mtu]``.  Incoming
    size ``s`` is padded to a uniform integer ``p`` in ``[s, max(s, 3*mss)]``
    and replaced by ``ceil(p/mss)`` packets carrying ``p`` bytes in total,
    all at the original timestamp.  One draw per packet, in connection then
    packet order.
    """
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    diag = diagnostics if diagnostics is not None else HttposDiagnostics()
    if not sample.connections:
        return sample, OverheadReport(0, 0)
    sizes = np.concatenate([c.sizes for c in sample.connections])
    dirs = np.concatenate([c.directions for c in sample.connections])
    outgoing = dirs < 0
    big = np.flatnonzero(outgoing & (sizes > config.mtu))
    if len(big):
        raise PreconditionError(f"outgoing packet of size {int(sizes[big[0]])} exceeds mtu {config.mtu}")
    cap = 3 * config.mss
    diag.clamped_packets += int((~outgoing & (sizes > cap)).sum())
    high = np.where(outgoing, config.mtu, np.maximum(sizes, cap))
    drawn = rng.integers(sizes, high, endpoint=True)
    conns, pos = [], 0
    for c in sample.connections:
        conns.append(_segment(c, drawn[pos: pos + len(c)], config.mss))
        pos += len(c)
    out = sample.with_connections(conns)
    return out, OverheadReport(total_bytes(sample), total_bytes(out))


DEFENSES = {"pad-to-mtu": "pad_to_mtu", "httpos": "httpos"}


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def apply_countermeasure(
    dataset: Dataset | Iterable[TraceSample],
    defense: str,
    config: CmConfig = CmConfig(),
) -> tuple[Dataset, list[OverheadReport], HttposDiagnostics]:
    """Transform every sample; sample ``i`` draws from stream ``(rng_seed, i)``."""
    diag = HttposDiagnostics()
    out, reports = [], []
    for i, s in enumerate(dataset):
        if defense == "pad-to-mtu":
            t, rep = pad_to_mtu(s, config)
        elif defense == "httpos":
            t, rep = httpos_transform(s, config, sample_rng(config.rng_seed, i), diag)
        else:
            raise PreconditionError(f"unknown defense {defense!r}; choose from {sorted(DEFENSES)}")
        out.append(t)
        reports.append(rep)
    prov = getattr(dataset, "provenance", "")
    return Dataset(tuple(out), f"{prov} [{defense}]".strip()), reports, diag


def bandwidth_overhead(original: Dataset | Sequence[TraceSample], transformed: Dataset | Sequence[TraceSample]) -> OverheadReport:
    a, b = list(original), list(transformed)
    if len(a) != len(b):
        raise PreconditionError(f"datasets are not aligned: {len(a)} vs {len(b)} samples")
    return OverheadReport(sum(total_bytes(s) for s in a), sum(total_bytes(s) for s in b))


def export_overhead_csv(samples: Sequence[TraceSample], reports: Sequence[OverheadReport], path: str | Path) -> None:
    from .preprocess import sample_id

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "orig_bytes", "new_bytes", "overhead"])
        for s, r in zip(samples, reports):
            w.writerow([sample_id(s), r.original_bytes, r.transformed_bytes, repr(r.overhead)])
