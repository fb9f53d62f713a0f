"""Orthogonal discrete wavelet transform via the two-channel filter bank.

Convention: with low-pass ``h`` and high-pass ``g`` of length L, one analysis
step computes

    approx[n] = sum_j h[j] * x[(2n + j) mod N]
    detail[n] = sum_j g[j] * x[(2n + j) mod N]

i.e. periodic extension and down-sampling by two.  ``g[k] = (-1)**k * h[L-1-k]``.
Odd-length inputs are right-padded with a single zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SQRT2 = np.sqrt(2.0)

_LOW_PASS = {
    "haar": [1 / _SQRT2, 1 / _SQRT2],
    "db2": [
        0.48296291314469025,
        0.83651630373746899,
        0.22414386804185735,
        -0.12940952255092145,
    ],
    "db4": [
        0.23037781330885523,
        0.71484657055254153,
        0.63088076792959036,
        -0.02798376941698385,
        -0.18703481171888114,
        0.03084138183598697,
        0.03288301166698295,
        -0.01059740178499728,
    ],
}


@dataclass(frozen=True)
class WaveletSpec:
    name: str
    h: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    @property
    def length(self) -> int:
        return len(self.h)


def wavelet(name: str = "haar") -> WaveletSpec:
    try:
        h = np.array(_LOW_PASS[name], dtype=np.float64)
    except KeyError:
        raise ValueError(f"unknown wavelet {name!r}; choose from {sorted(_LOW_PASS)}") from None
    L = len(h)
    g = np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])
    return WaveletSpec(name, h, g)


@dataclass
class DwtResult:
    approximations: list[np.ndarray]
    details: list[np.ndarray]
    original_length: int
    mode: str = "periodic"

    @property
    def levels(self) -> int:
        return len(self.approximations)

    def approx(self, level: int | None = None) -> np.ndarray:
        return self.approximations[(level or self.levels) - 1]


def _analysis_index(n_out: int, length: int, N: int) -> np.ndarray:
    return (2 * np.arange(n_out)[:, None] + np.arange(length)[None, :]) % N


def dwt_level(x, w: WaveletSpec) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("dwt_level expects a 1-D signal")
    if len(x) < w.length:
        raise ValueError(f"signal of length {len(x)} is shorter than the {w.name} filter ({w.length})")
    if len(x) % 2:
        x = np.append(x, 0.0)
    N = len(x)
    windows = x[_analysis_index(N // 2, w.length, N)]
    return windows @ w.h, windows @ w.g


def dwt_rows(X: np.ndarray, w: WaveletSpec) -> tuple[np.ndarray, np.ndarray]:
    """``dwt_level`` applied to every row of a 2-D array."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] < w.length:
        raise ValueError(f"signal of length {X.shape[1]} is shorter than the {w.name} filter ({w.length})")
    if X.shape[1] % 2:
        X = np.hstack([X, np.zeros((X.shape[0], 1))])
    N = X.shape[1]
    idx = _analysis_index(N // 2, w.length, N)
    approx = np.zeros((X.shape[0], N // 2))
    detail = np.zeros((X.shape[0], N // 2))
    for j in range(w.length):
        cols = X[:, idx[:, j]]
        approx += w.h[j] * cols
        detail += w.g[j] * cols
    return approx, detail


def idwt_level(approx, detail, w: WaveletSpec) -> np.ndarray:
    """Synthesis bank: the transpose of the (orthogonal) analysis operator."""
    approx = np.asarray(approx, dtype=np.float64)
    detail = np.asarray(detail, dtype=np.float64)
    if approx.shape != detail.shape:
        raise ValueError(f"length mismatch: approx {approx.shape} vs detail {detail.shape}")
    N = 2 * len(approx)
    x = np.zeros(N)
    idx = _analysis_index(len(approx), w.length, N)
    for j in range(w.length):
        np.add.at(x, idx[:, j], w.h[j] * approx + w.g[j] * detail)
    return x


def dwt_multilevel(x, w: WaveletSpec, levels: int = 1) -> DwtResult:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    approximations, details = [], []
    current = x
    for k in range(levels):
        if len(current) < w.length:
            raise ValueError(f"{levels} levels is too deep for a signal of length {len(x)} ({w.name})")
        current, d = dwt_level(current, w)
        approximations.append(current)
        details.append(d)
    return DwtResult(approximations, details, len(x))


def approximation_rows(X: np.ndarray, w: WaveletSpec, levels: int = 1) -> np.ndarray:
    """Level-``levels`` approximation of every row of ``X``."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    current = np.asarray(X, dtype=np.float64)
    for _ in range(levels):
        if current.shape[1] < w.length:
            raise ValueError(f"{levels} levels is too deep for a signal of length {X.shape[1]} ({w.name})")
        current, _ = dwt_rows(current, w)
    return current
