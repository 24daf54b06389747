"""Feature containers and helpers shared by every extractor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple

import numpy as np

from ..trace import Direction, TraceSample

BurstScope = Literal["global", "per-connection"]


class Burst(NamedTuple):
    direction: Direction
    packet_count: int
    byte_sum: int


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Values with parallel feature names and category ids."""

    values: np.ndarray
    names: tuple[str, ...]
    categories: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.values) == len(self.names) == len(self.categories)):
            raise ValueError("values, names and categories must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def category(self, category: str) -> np.ndarray:
        mask = np.array([c == category for c in self.categories], dtype=bool)
        return self.values[mask] if len(mask) else np.zeros(0)

    def __add__(self, other: "FeatureVector") -> "FeatureVector":
        return FeatureVector(
            np.concatenate([self.values, other.values]),
            self.names + other.names,
            self.categories + other.categories,
        )


class FeatureBuilder:
    """Accumulates named values category by category."""

    def __init__(self):
        self._values: list[float] = []
        self._names: list[str] = []
        self._cats: list[str] = []

    def add(self, category: str, suffix: str, value) -> None:
        self._values.append(float(value))
        self._names.append(f"{category}/{suffix}")
        self._cats.append(category)

    def add_seq(self, category: str, values: Iterable, width: int | None = None, prefix: str = "") -> None:
        values = list(values)
        if width is None:
            width = max(3, len(str(len(values))))
        for i, v in enumerate(values):
            self.add(category, f"{prefix}{i:0{width}d}", v)

    def build(self) -> FeatureVector:
        return FeatureVector(np.asarray(self._values, dtype=float), tuple(self._names), tuple(self._cats))


def runs(directions: np.ndarray, sizes: np.ndarray):
    """Maximal same-direction runs as ``(direction, count, byte_sum)`` arrays."""
    if len(directions) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z.astype(np.int8), z, z
    starts = np.concatenate([[0], np.flatnonzero(np.diff(directions)) + 1])
    counts = np.diff(np.concatenate([starts, [len(directions)]]))
    sums = np.add.reduceat(np.asarray(sizes, dtype=np.int64), starts)
    return directions[starts], counts, sums


def burst_arrays(sample: TraceSample, scope: BurstScope = "global"):
    if scope == "global":
        tl = sample.timeline
        return runs(tl.directions, tl.sizes)
    if scope == "per-connection":
        parts = [runs(c.directions, c.sizes) for c in sample.connections]
        if not parts:
            return runs(np.zeros(0, dtype=np.int8), np.zeros(0))
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))
    raise ValueError(f"unknown burst scope {scope!r}")


def extract_bursts(sample: TraceSample, scope: BurstScope = "global") -> list[Burst]:
    """Maximal runs of same-direction packets.

    ``global`` walks the time-merged packet sequence; ``per-connection``
    walks each connection separately and concatenates in connection order.
    """
    d, n, s = burst_arrays(sample, scope)
    return [Burst(Direction(int(a)), int(b), int(c)) for a, b, c in zip(d, n, s)]


def interpolate(curve: np.ndarray, m: int) -> np.ndarray:
    """Resample ``curve`` at ``m`` evenly spaced points over its index range."""
    if m < 2:
        raise ValueError("m must be ≥ 2")
    curve = np.asarray(curve, dtype=float)
    if len(curve) == 0:
        return np.zeros(m)
    if len(curve) == 1:
        return np.full(m, curve[0])
    return np.interp(np.linspace(0, len(curve) - 1, m), np.arange(len(curve)), curve)


def pad(values, width: int, fill: float = 0.0) -> np.ndarray:
    out = np.full(width, fill, dtype=float)
    values = np.asarray(values, dtype=float)[:width]
    out[: len(values)] = values
    return out


def summary(values) -> tuple[float, float, float, float]:
    """``(mean, std, min, max)``, all zero for empty input."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return 0.0, 0.0, 0.0, 0.0
    return float(values.mean()), float(values.std()), float(values.min()), float(values.max())
