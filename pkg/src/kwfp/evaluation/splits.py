"""Interleaved train/validation/test splits by visit index."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from ..errors import PreconditionError
from ..trace import Dataset


@dataclass(frozen=True)
class SplitSpec:
    train: int = 4
    val: int = 1
    test: int = 1

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0 or self.block < 1:
            raise PreconditionError("split ratio parts must be ≥ 0 with a positive sum")

    @property
    def block(self) -> int:
        return self.train + self.val + self.test

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """``"4:1:1"`` -> ``SplitSpec(4, 1, 1)``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise PreconditionError(f"split ratio must look like a:b:c, got {text!r}")
        return cls(*(int(p) for p in parts))

    def role(self, position: int) -> str | None:
        """``"train"``, ``"val"`` or ``"test"`` for the ``position``-th visit of a block."""
        r = position % self.block
        if r < self.train:
            return "train"
        if r < self.train + self.val:
            return "val"
        return "test"

    def assign(self, n: int) -> tuple[list[int], list[int], list[int]]:
        """Positions of ``n`` ordered visits per role; visits past the last full block are dropped."""
        out = {"train": [], "val": [], "test": []}
        for i in range(n - n % self.block):
            out[self.role(i)].append(i)
        return out["train"], out["val"], out["test"]


def interleaved_split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    """Per keyword, visits ordered by visit index are cut into blocks of ``a+b+c``.

    Within each block the first ``a`` go to train, the next ``b`` to
    validation and the last ``c`` to test.
    """
    by_label: dict[str, list] = defaultdict(list)
    for s in dataset:
        by_label[s.meta.label].append(s)
    short = sorted(lbl for lbl, ss in by_label.items() if len(ss) < spec.block)
    if short:
        raise PreconditionError(
            f"keywords with fewer than {spec.block} samples: {', '.join(short)}"
        )
    parts: dict[str, list] = {"train": [], "val": [], "test": []}
    for lbl in by_label:
        visits = sorted(by_label[lbl], key=lambda s: s.meta.visit_index)
        for role, positions in zip(("train", "val", "test"), spec.assign(len(visits))):
            parts[role].extend(visits[i] for i in positions)
    tag = f"{spec.train}:{spec.val}:{spec.test}"
    base = f"{dataset.provenance} " if dataset.provenance else ""
    return tuple(Dataset(tuple(parts[r]), f"{base}[{r} {tag}]") for r in ("train", "val", "test"))
