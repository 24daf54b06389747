"""Packet-size-count, k-FP and EtResp style feature sets."""

from __future__ import annotations

import numpy as np

from ..trace import TraceSample
from .base import FeatureBuilder, FeatureVector, interpolate, pad, runs, summary

PPS_BINS = 20
CONCENTRATION_WINDOW = 20
CONCENTRATION_SLOTS = 30


def size_key(direction: int, size: int) -> str:
    return f"{'in' if direction > 0 else 'out'}:{int(size):05d}"


def psc(sample: TraceSample, category: str = "packet_size_count") -> FeatureVector:
    """Count of each (direction, size) pair over all packets.

    Only observed pairs appear; a :class:`~kwfp.features.space.VectorSpace`
    supplies the zeros.
    """
    tl = sample.timeline
    signed = tl.sizes * tl.directions
    keys, counts = np.unique(signed, return_counts=True)
    fb = FeatureBuilder()
    for k, n in zip(keys.tolist(), counts.tolist()):
        fb.add(category, size_key(1 if k > 0 else -1, abs(k)), n)
    return fb.build()


def _iat_stats(times_us: np.ndarray) -> list[float]:
    if len(times_us) < 2:
        return [0.0, 0.0, 0.0, 0.0]
    d = np.diff(times_us) / 1e6
    return [float(d.max()), float(d.mean()), float(d.std()), float(np.percentile(d, 75))]


def kfp_features(sample: TraceSample) -> FeatureVector:
    """Fixed-length k-fingerprinting style summary of the merged packet sequence."""
    tl = sample.timeline
    n = len(tl.sizes)
    incoming = tl.directions > 0
    outgoing = ~incoming
    n_in, n_out = int(incoming.sum()), int(outgoing.sum())
    fb = FeatureBuilder()

    fb.add("kfp_counts", "total", n)
    fb.add("kfp_counts", "incoming", n_in)
    fb.add("kfp_counts", "outgoing", n_out)
    fb.add("kfp_counts", "ratio_incoming", n_in / n if n else 0.0)
    fb.add("kfp_counts", "ratio_outgoing", n_out / n if n else 0.0)

    idx = np.arange(n)
    for name, mask in (("incoming", incoming), ("outgoing", outgoing)):
        pos = idx[mask]
        fb.add("kfp_ordering", f"{name}_mean", pos.mean() if len(pos) else 0.0)
        fb.add("kfp_ordering", f"{name}_std", pos.std() if len(pos) else 0.0)

    if n:
        secs = (tl.timestamps - tl.timestamps[0]) // 1_000_000
        per_sec = np.bincount(secs)
    else:
        per_sec = np.zeros(0, dtype=np.int64)
    head = pad(per_sec[:PPS_BINS], PPS_BINS)
    fb.add_seq("kfp_pps", head, prefix="bin")
    fb.add("kfp_pps", "rest", per_sec[PPS_BINS:].sum())
    for stat, v in zip(("mean", "std", "min", "max"), summary(per_sec)):
        fb.add("kfp_pps", stat, v)

    conc = np.add.reduceat(outgoing.astype(np.int64), np.arange(0, n, CONCENTRATION_WINDOW)) if n else np.zeros(0)
    fb.add_seq("kfp_concentration", pad(conc[:CONCENTRATION_SLOTS], CONCENTRATION_SLOTS), prefix="win")
    for stat, v in zip(("mean", "std", "min", "max"), summary(conc)):
        fb.add("kfp_concentration", stat, v)

    for name, times in (
        ("incoming", tl.timestamps[incoming]),
        ("outgoing", tl.timestamps[outgoing]),
        ("total", tl.timestamps),
    ):
        for stat, v in zip(("max", "mean", "std", "p75"), _iat_stats(times)):
            fb.add("kfp_iat", f"{name}_{stat}", v)

    fb.add("kfp_time", "transmission", (tl.timestamps[-1] - tl.timestamps[0]) / 1e6 if n else 0.0)
    return fb.build()


def etresp_features(sample: TraceSample, m: int = 100, signed: bool = True) -> FeatureVector:
    """Packet counts, incoming burst count and an interpolated cumulative-size curve.

    The curve uses ``-size`` for outgoing and ``+size`` for incoming packets
    over the time-merged sequence; ``signed=False`` uses plain sizes.
    """
    if m < 2:
        raise ValueError("m must be ≥ 2")
    tl = sample.timeline
    n = len(tl.sizes)
    fb = FeatureBuilder()
    fb.add("etresp_counts", "total", n)
    fb.add("etresp_counts", "incoming", int((tl.directions > 0).sum()))
    fb.add("etresp_counts", "outgoing", int((tl.directions < 0).sum()))
    bdir, _, _ = runs(tl.directions, tl.sizes)
    fb.add("etresp_bursts", "incoming", int((bdir > 0).sum()))
    step = tl.sizes * tl.directions if signed else tl.sizes
    fb.add_seq("etresp_cumul", interpolate(np.cumsum(step), m), prefix="pt")
    return fb.build()
