"""Connection-aware feature catalog (Wfin) and the Wfin++ additions.

Each feature carries the id of the category it belongs to, so category-level
importance ranking and top-N selection can work on the catalog.  Window
widths are collected in :class:`WfinConfig` so they can be swept.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..trace import TraceSample
from .base import FeatureBuilder, FeatureVector, burst_arrays, interpolate, pad
from .sequence import size_key


@dataclass(frozen=True)
class WfinConfig:
    initial_packets: int = 30
    position_packets: int = 300
    initial_bursts: int = 10
    per_conn: int = 20
    burst_bin: int = 100
    curve_points: int = 100
    web_ports: tuple[int, ...] = (443, 80)


DEFAULT_WFIN = WfinConfig()

WFIN_CATEGORIES = (
    "unique_packet_size",
    "initial_30_outgoing_packets",
    "packet_size_count",
    "first_300_incoming_packets_preposition",
    "first_300_outgoing_packets_position",
    "first_300_outgoing_packets_preposition",
    "first_300_incoming_packets_position",
    "initial_outgoing_bursts",
    "average_outgoing_inter_arrival_time",
    "initial_30_packets",
    "initial_30_incoming_packets",
    "unique_burst_size",
    "first_20_largest_outgoing_bytes_per_tcp_conn",
    "initial_incoming_bursts",
    "ratio_of_incoming_bytes_per_tcp_conn",
    "initial_30_outgoing_in_first_tcp_conn",
    "burst_size_count",
    "first_20_largest_outgoing_bytes_per_hostname",
    "outgoing_bytes_per_tcp_conn",
    "outgoing_bytes_per_tcp_conn_port_443_80",
    "hostname_count",
)

WFINPP_EXTRA_CATEGORIES = (
    "reversed_cumulative_packet_size",
    "reversed_cumulative_burst_size",
    "total_packets",
    "maximum_packet_size",
    "average_size_in_largest_incoming_burst",
)


def _dir_name(d: int) -> str:
    return "in" if d > 0 else "out"


def wfin_features(sample: TraceSample, cfg: WfinConfig = DEFAULT_WFIN) -> FeatureVector:
    tl = sample.timeline
    dirs, sizes, times = tl.directions, tl.sizes, tl.timestamps
    incoming = dirs > 0
    outgoing = ~incoming
    fb = FeatureBuilder()

    cat = "unique_packet_size"
    for d, mask in ((1, incoming), (-1, outgoing)):
        uniq = np.unique(sizes[mask])
        fb.add(cat, f"{_dir_name(d)}_count", len(uniq))
        for s in uniq.tolist():
            fb.add(cat, "seen_" + size_key(d, s), 1)

    fb.add_seq("initial_30_outgoing_packets", pad(sizes[outgoing][: cfg.initial_packets], cfg.initial_packets))

    keys, counts = np.unique(sizes * dirs, return_counts=True)
    for k, n in zip(keys.tolist(), counts.tolist()):
        fb.add("packet_size_count", size_key(1 if k > 0 else -1, abs(k)), n)

    # position: packets of any direction before it; preposition: opposite-direction packets before it
    idx = np.arange(len(dirs))
    for name, mask in (("incoming", incoming), ("outgoing", outgoing)):
        pos = idx[mask][: cfg.position_packets]
        prepos = pos - np.arange(len(pos))
        fb.add_seq(f"first_300_{name}_packets_preposition", pad(prepos, cfg.position_packets))
        fb.add_seq(f"first_300_{name}_packets_position", pad(pos, cfg.position_packets))

    bdir, _, bsum = burst_arrays(sample, "per-connection")
    fb.add_seq("initial_outgoing_bursts", pad(bsum[bdir < 0][: cfg.initial_bursts], cfg.initial_bursts))
    fb.add_seq("initial_incoming_bursts", pad(bsum[bdir > 0][: cfg.initial_bursts], cfg.initial_bursts))

    out_t = times[outgoing]
    fb.add("average_outgoing_inter_arrival_time", "mean", np.diff(out_t).mean() / 1e6 if len(out_t) > 1 else 0.0)

    fb.add_seq("initial_30_packets", pad((sizes * dirs)[: cfg.initial_packets], cfg.initial_packets))
    fb.add_seq("initial_30_incoming_packets", pad(sizes[incoming][: cfg.initial_packets], cfg.initial_packets))

    for d in (1, -1):
        fb.add("unique_burst_size", f"{_dir_name(d)}_count", len(np.unique(bsum[bdir == d])))

    per_conn = [c.bytes_by_direction() for c in sample.connections]
    out_bytes = np.array([o for _, o in per_conn], dtype=float)
    in_bytes = np.array([i for i, _ in per_conn], dtype=float)
    k = cfg.per_conn
    fb.add_seq("first_20_largest_outgoing_bytes_per_tcp_conn", pad(np.sort(out_bytes)[::-1][:k], k))
    total = in_bytes + out_bytes
    ratio = np.divide(in_bytes, total, out=np.zeros_like(total), where=total > 0)
    fb.add_seq("ratio_of_incoming_bytes_per_tcp_conn", pad(ratio[:k], k))

    first = sample.connections[0] if sample.connections else None
    first_out = first.sizes[first.directions < 0] if first is not None else np.zeros(0)
    fb.add_seq("initial_30_outgoing_in_first_tcp_conn", pad(first_out[: cfg.initial_packets], cfg.initial_packets))

    binned = Counter(zip(bdir.tolist(), (bsum // cfg.burst_bin).tolist()))
    for (d, b), n in sorted(binned.items()):
        fb.add("burst_size_count", f"{_dir_name(d)}:{b * cfg.burst_bin:06d}", n)

    by_host: Counter = Counter()
    for c, (_, o) in zip(sample.connections, per_conn):
        by_host[c.server_name or "(none)"] += o
    host_bytes = sorted(by_host.values(), reverse=True)
    fb.add_seq("first_20_largest_outgoing_bytes_per_hostname", pad(host_bytes[:k], k))

    fb.add_seq("outgoing_bytes_per_tcp_conn", pad(out_bytes[:k], k))
    web = [o for c, (_, o) in zip(sample.connections, per_conn) if c.server_port in cfg.web_ports]
    fb.add_seq("outgoing_bytes_per_tcp_conn_port_443_80", pad(web[:k], k))

    fb.add("hostname_count", "distinct", len({c.server_name for c in sample.connections if c.server_name}))
    return fb.build()


def wfinpp_extras(sample: TraceSample, cfg: WfinConfig = DEFAULT_WFIN) -> FeatureVector:
    """Reversed cumulative curves and simple size extremes added on top of Wfin."""
    tl = sample.timeline
    fb = FeatureBuilder()
    fb.add_seq("reversed_cumulative_packet_size", interpolate(np.cumsum(tl.sizes[::-1]), cfg.curve_points), prefix="pt")
    bdir, bcount, bsum = burst_arrays(sample, "global")
    fb.add_seq("reversed_cumulative_burst_size", interpolate(np.cumsum(bsum[::-1]), cfg.curve_points), prefix="pt")
    fb.add("total_packets", "count", len(tl.sizes))
    for d in (1, -1):
        sel = tl.sizes[tl.directions == d]
        fb.add("maximum_packet_size", _dir_name(d), sel.max() if len(sel) else 0)
    avg = 0.0
    inc = np.flatnonzero(bdir > 0)
    if len(inc):
        # largest by byte sum; first one wins ties
        j = inc[np.argmax(bsum[inc])]
        avg = bsum[j] / bcount[j]
    fb.add("average_size_in_largest_incoming_burst", "mean", avg)
    return fb.build()


def wfinpp_features(sample: TraceSample, cfg: WfinConfig = DEFAULT_WFIN) -> FeatureVector:
    return wfin_features(sample, cfg) + wfinpp_extras(sample, cfg)
