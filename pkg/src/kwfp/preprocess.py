"""Trace filters, domain census and per-trace statistics."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptyAfterFilterError, PreconditionError
from .trace import Dataset, TraceSample, check_sample

NO_SNI = "(none)"
DEFAULT_PUBLIC_SUFFIXES = frozenset({"co.uk", "com.au", "ac.uk"})

# primary domains per search engine
DEFAULT_ALLOWLISTS: dict[str, frozenset[str]] = {
    "google": frozenset({"google.com", "gstatic.com"}),
    "duckduckgo": frozenset({"duckduckgo.com"}),
    "bing": frozenset({"bing.com"}),
    "yahoo": frozenset({"yahoo.com"}),
}


def normalize_hostname(name: str) -> str:
    return name.strip().lower().rstrip(".")


def load_name_list(path: str | Path) -> frozenset[str]:
    """Read names from a JSON list or a text file with one name per line (# comments allowed)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        items = json.loads(text)
    except json.JSONDecodeError:
        items = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return frozenset(normalize_hostname(s) for s in items)


def second_level_domain(hostname: str, public_suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES) -> str:
    """Registrable domain: the last two labels, or three under a listed public suffix."""
    host = normalize_hostname(hostname)
    if not host:
        raise PreconditionError("hostname must be non-empty")
    labels = host.split(".")
    if len(labels) < 2:
        return host
    n = 3 if ".".join(labels[-2:]) in public_suffixes and len(labels) >= 3 else 2
    return ".".join(labels[-n:])


# --------------------------------------------------------------------------
# filters


def addressbar_filter(sample: TraceSample) -> TraceSample:
    """Model an address-bar search by dropping everything before the first keystroke.

    Connections opened at or after the keystroke are kept whole.  Connections
    opened earlier keep only their packets from the keystroke on and are
    flagged as established before typing; those left empty disappear.
    """
    offset = sample.meta.first_keystroke_us
    if offset is None:
        raise PreconditionError("addressbar_filter needs meta.first_keystroke_us")
    conns = []
    for c in sample.connections:
        if c.first_timestamp >= offset:
            conns.append(c)
            continue
        kept = c.select(c.timestamps >= offset)
        if len(kept):
            conns.append(replace(kept, established_before_typing=True))
    return check_sample(sample.with_connections(conns, mode="addressbar"))


def domain_filter(
    sample: TraceSample,
    allowlist: Iterable[str],
    public_suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES,
) -> TraceSample:
    """Keep connections whose second-level domain is allow-listed; SNI-less ones are dropped."""
    allow = frozenset(normalize_hostname(a) for a in allowlist)
    if not allow:
        raise PreconditionError("allowlist must be non-empty")
    suffixes = frozenset(public_suffixes)
    conns = [
        c for c in sample.connections
        if c.server_name and second_level_domain(c.server_name, suffixes) in allow
    ]
    if not conns:
        raise EmptyAfterFilterError(f"no connection matches allowlist {sorted(allow)}")
    return sample.with_connections(conns)


# --------------------------------------------------------------------------
# census and statistics


@dataclass(frozen=True)
class DomainCensus:
    counts: dict  # second-level domain -> connection count
    total_connections: int

    def most_common(self, n: int | None = None) -> list[tuple[str, int]]:
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]

    def __add__(self, other: "DomainCensus") -> "DomainCensus":
        merged = Counter(self.counts)
        merged.update(other.counts)
        return DomainCensus(dict(merged), self.total_connections + other.total_connections)


def domain_census(sample: TraceSample, public_suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES) -> DomainCensus:
    suffixes = frozenset(public_suffixes)
    counts = Counter(
        second_level_domain(c.server_name, suffixes) if c.server_name else NO_SNI
        for c in sample.connections
    )
    return DomainCensus(dict(counts), len(sample.connections))


def dataset_census(dataset: Iterable[TraceSample], public_suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES) -> DomainCensus:
    total = DomainCensus({}, 0)
    for s in dataset:
        total = total + domain_census(s, public_suffixes)
    return total


@dataclass(frozen=True)
class TraceStats:
    packet_count: int
    connection_count: int
    bytes_in: int
    bytes_out: int
    load_time: float  # seconds between first and last packet


def trace_stats(sample: TraceSample) -> TraceStats:
    tl = sample.timeline
    incoming = tl.directions > 0
    load = (int(tl.timestamps.max()) - int(tl.timestamps.min())) / 1e6 if len(tl.timestamps) else 0.0
    return TraceStats(
        packet_count=len(tl.sizes),
        connection_count=len(sample.connections),
        bytes_in=int(tl.sizes[incoming].sum()),
        bytes_out=int(tl.sizes[~incoming].sum()),
        load_time=load,
    )


STAT_FIELDS = ("packet_count", "connection_count", "bytes_in", "bytes_out", "load_time")


def median_stats(dataset: Iterable[TraceSample]) -> dict[str, float]:
    """Median of every :class:`TraceStats` field over a corpus."""
    rows = [trace_stats(s) for s in dataset]
    if not rows:
        raise PreconditionError("median_stats needs at least one sample")
    return {f: float(np.median([getattr(r, f) for r in rows])) for f in STAT_FIELDS}


def platform_specific_domains(
    dataset_a: Dataset | Iterable[TraceSample],
    dataset_b: Dataset | Iterable[TraceSample],
    public_suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES,
) -> list[tuple[str, float]]:
    """Domains seen in ``a`` but never in ``b``, by share of ``a``'s connections."""
    a, b = list(dataset_a), list(dataset_b)
    if not a or not b:
        raise PreconditionError("both datasets must be non-empty")
    ca, cb = dataset_census(a, public_suffixes), dataset_census(b, public_suffixes)
    only = [
        (dom, n / ca.total_connections)
        for dom, n in ca.counts.items()
        if dom != NO_SNI and dom not in cb.counts
    ]
    return sorted(only, key=lambda kv: (-kv[1], kv[0]))


def sample_id(sample: TraceSample) -> str:
    m = sample.meta
    return f"{m.label}#{m.visit_index}"


def export_census_csv(census: DomainCensus, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "count"])
        w.writerows(census.most_common())


def export_stats_csv(dataset: Iterable[TraceSample], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "packets", "conns", "bytes_in", "bytes_out", "load_time_s"])
        for s in dataset:
            st = trace_stats(s)
            w.writerow([sample_id(s), st.packet_count, st.connection_count, st.bytes_in, st.bytes_out, repr(st.load_time)])


def allowlist_for(engine: str, overrides: Mapping[str, Iterable[str]] | None = None) -> frozenset[str]:
    table = {**DEFAULT_ALLOWLISTS, **({k: frozenset(v) for k, v in overrides.items()} if overrides else {})}
    try:
        return table[engine.lower()]
    except KeyError:
        raise PreconditionError(f"no allowlist for engine {engine!r}; known: {sorted(table)}") from None
