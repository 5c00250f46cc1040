"""Kernel functions and Gram matrices, one per predicate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class KernelError(Exception):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Configuration of a kernel function.

    kind "linear": k(x, y) = x . y + offset   (offset defaults to 1)
    kind "polynomial": k(x, y) = (x . y + offset) ** degree
    kind "rbf": k(x, y) = exp(-|x - y|^2 / (2 sigma^2))
    """

    kind: str = "linear"
    offset: float = 1.0
    degree: int = 2
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "rbf"):
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and (self.degree < 1 or int(self.degree) != self.degree):
            raise KernelError("polynomial degree must be a positive integer")
        if self.kind == "rbf" and not self.sigma > 0:
            raise KernelError("rbf width sigma must be positive")


def kernel_value(spec: KernelSpec, x: Sequence[float], y: Sequence[float]) -> float:
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.shape != yv.shape:
        raise KernelError(f"dimension mismatch: {xv.shape} vs {yv.shape}")
    if spec.kind == "linear":
        return float(xv @ yv + spec.offset)
    if spec.kind == "polynomial":
        return float((xv @ yv + spec.offset) ** spec.degree)
    return float(np.exp(-np.sum((xv - yv) ** 2) / (2.0 * spec.sigma**2)))


@dataclass(eq=False)
class GramMatrix:
    matrix: np.ndarray
    symmetric: bool
    min_eigenvalue: float


def gram(spec: KernelSpec, points: Sequence[Sequence[float]]) -> GramMatrix:
    """Gram matrix of ``spec`` on ``points``.

    Tuple samples of n-ary predicates are expected to be concatenated
    into flat vectors before this call.
    """
    if len(points) == 0:
        raise KernelError("empty sample list")
    try:
        X = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise KernelError("samples must share a common dimension") from exc
    if X.ndim != 2:
        raise KernelError("samples must share a common dimension")
    if spec.kind == "rbf":
        sq = np.sum(X**2, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
        np.maximum(d2, 0.0, out=d2)
        K = np.exp(-d2 / (2.0 * spec.sigma**2))
        np.fill_diagonal(K, 1.0)
    else:
        K = X @ X.T + spec.offset
        if spec.kind == "polynomial":
            K = K**spec.degree
    K = np.asarray(K, dtype=float)
    symmetric = bool(np.max(np.abs(K - K.T)) <= 1e-12) if K.size else True
    if symmetric:
        eigs = np.linalg.eigvalsh((K + K.T) / 2.0)
        min_eig = float(eigs[0])
    else:
        min_eig = float("nan")
    return GramMatrix(K, symmetric, min_eig)


def psd_check(g: GramMatrix) -> str:
    """Classify a Gram matrix as positive_definite, positive_semidefinite
    or invalid by its smallest eigenvalue (tolerance 1e-9)."""
    if not g.symmetric:
        raise KernelError("Gram matrix is not symmetric")
    if g.min_eigenvalue > 1e-9:
        return "positive_definite"
    if g.min_eigenvalue >= -1e-9:
        return "positive_semidefinite"
    return "invalid"
