"""Fisher linear discriminant projection for visual inspection of class structure."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from ..errors import PreconditionError

RIDGE = 1e-6
TOL = 1e-10
MAX_ITER = 10_000


@dataclass(frozen=True)
class LdaResult:
    coords: np.ndarray  # (n_samples, out_dims)
    directions: np.ndarray  # (n_features, out_dims) discriminant vectors
    eigenvalues: np.ndarray  # descending
    iterations: int
    converged: bool


def scatter_matrices(X: np.ndarray, y) -> tuple[np.ndarray, np.ndarray]:
    """Within-class and between-class scatter of the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    mu = X.mean(axis=0)
    d = X.shape[1]
    sw = np.zeros((d, d))
    sb = np.zeros((d, d))
    for c in np.unique(y):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        D = Xc - mc
        sw += D.T @ D
        diff = (mc - mu)[:, None]
        sb += len(Xc) * (diff @ diff.T)
    return sw, sb


def _orthogonal_iteration(M: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Top-``k`` eigenpairs of symmetric PSD ``M`` by subspace iteration with Rayleigh-Ritz."""
    d = M.shape[0]
    scale = max(np.linalg.norm(M, 2), np.finfo(float).tiny)
    start = np.random.default_rng(0).standard_normal((d, k))
    Q, _ = np.linalg.qr(M @ start + start)
    converged, it = False, 0
    for it in range(1, MAX_ITER + 1):
        Z = M @ Q
        H = Q.T @ Z
        if np.linalg.norm(Z - Q @ H) <= TOL * scale:
            converged = True
            break
        Q, _ = np.linalg.qr(Z)
    vals, vecs = np.linalg.eigh(Q.T @ M @ Q)
    order = np.argsort(vals)[::-1]
    return vals[order], Q @ vecs[:, order], it, converged


def lda_project(X, y, out_dims: int = 3) -> LdaResult:
    """Project onto the leading generalized eigenvectors of ``(S_b, S_w + eps*I)``.

    ``eps = 1e-6 * trace(S_w) / d`` keeps the within-class scatter
    invertible.  Data are centred first, so adding a constant to every
    sample leaves the coordinates unchanged.  Each axis is signed so that
    its first non-negligible loading is positive.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise PreconditionError("X must be 2-D with one label per row")
    n_classes = len(np.unique(y))
    if n_classes < 2:
        raise PreconditionError("LDA needs at least 2 classes")
    if not 1 <= out_dims <= min(n_classes - 1, X.shape[1], 3):
        raise PreconditionError(
            f"out_dims must lie in [1, {min(n_classes - 1, X.shape[1], 3)}] for "
            f"{n_classes} classes and {X.shape[1]} features, got {out_dims}"
        )
    Xc = X - X.mean(axis=0)
    sw, sb = scatter_matrices(Xc, y)
    d = X.shape[1]
    tr = np.trace(sw)
    eps = RIDGE * tr / d if tr > 0 else RIDGE
    L, _ = cho_factor(sw + eps * np.eye(d), lower=True)
    L = np.tril(L)
    # whitened between-class scatter  L^-1 S_b L^-T
    A = solve_triangular(L, sb, lower=True)
    M = solve_triangular(L, A.T, lower=True)
    M = (M + M.T) / 2
    vals, V, it, ok = _orthogonal_iteration(M, out_dims)
    W = solve_triangular(L.T, V, lower=False)
    for j in range(out_dims):
        col = W[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), np.finfo(float).tiny))
        if len(big) and col[big[0]] < 0:
            W[:, j] = -col
    return LdaResult(Xc @ W, W, vals, it, ok)


def export_lda_csv(result: LdaResult, labels: Sequence[str], sample_ids: Sequence[str], path: str | Path) -> None:
    """Columns sample_id, label, x, y, z (unused axes left empty)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label", "x", "y", "z"])
        for sid, lbl, row in zip(sample_ids, labels, result.coords):
            vals = [repr(float(v)) for v in row] + [""] * (3 - len(row))
            w.writerow([sid, lbl, *vals])
