"""Unsupervised attacker detection with two-component Gaussian mixtures.

Each of the three feature spaces is clustered independently; the smaller
cluster of each is the suspect set, and users suspected in all three spaces
are flagged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .features import UserFeatureSet
from .series import KINDS

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EmConfig:
    components: int = 2
    max_iterations: int = 300
    tolerance: float = 1e-8  # on the per-point log-likelihood gain
    covariance: str = "diagonal"
    variance_floor: float = 1e-2
    restarts: int = 5
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.components != 2:
            raise ValueError("only two-component mixtures are supported")
        if self.covariance != "diagonal":
            raise ValueError("only diagonal covariances are supported")
        if not self.tolerance > 0 or not self.variance_floor > 0:
            raise ValueError("tolerance and variance_floor must be positive")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ValueError("restarts and max_iterations must be >= 1")


@dataclass
class EmResult:
    users: tuple[str, ...]
    labels: np.ndarray
    log_likelihood: float
    trace: list[float]
    iterations: int
    restart: int
    dims_used: int
    means: np.ndarray
    variances: np.ndarray
    priors: np.ndarray
    z: np.ndarray = field(repr=False)

    def cluster(self, k: int) -> frozenset[str]:
        return frozenset(u for u, lab in zip(self.users, self.labels) if lab == k)

    @property
    def clusters(self) -> tuple[frozenset[str], frozenset[str]]:
        return self.cluster(0), self.cluster(1)


def _prepare(X: np.ndarray, standardize: bool) -> np.ndarray:
    keep = np.ptp(X, axis=0) > 0
    X = X[:, keep]
    if standardize and X.shape[1]:
        X = (X - X.mean(axis=0)) / X.std(axis=0)
    return X


def _log_joint(Z, means, variances, priors):
    with np.errstate(divide="ignore"):
        log_priors = np.log(priors)
    out = np.empty((Z.shape[0], len(priors)))
    for k in range(len(priors)):
        quad = ((Z - means[k]) ** 2 / variances[k]).sum(axis=1)
        out[:, k] = log_priors[k] - 0.5 * (quad + np.log(variances[k]).sum() + Z.shape[1] * _LOG_2PI)
    return out


def _logsumexp(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _kmeanspp(Z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(len(Z)))
    d2 = ((Z - Z[first]) ** 2).sum(axis=1)
    total = d2.sum()
    second = int(rng.choice(len(Z), p=d2 / total)) if total > 0 else int(rng.integers(len(Z)))
    return Z[[first, second]].copy()


def _run_em(Z: np.ndarray, cfg: EmConfig, rng: np.random.Generator):
    n, d = Z.shape
    floor = cfg.variance_floor
    means = _kmeanspp(Z, rng)
    variances = np.tile(np.maximum(Z.var(axis=0), floor), (2, 1))
    priors = np.full(2, 0.5)
    trace: list[float] = []
    for it in range(cfg.max_iterations):
        logp = _log_joint(Z, means, variances, priors)
        norm = _logsumexp(logp)
        ll = float(norm.sum())
        trace.append(ll)
        if len(trace) > 1 and ll - trace[-2] < cfg.tolerance * n:
            break
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        priors = nk / n
        for k in range(2):
            if nk[k] <= 0:
                continue
            means[k] = resp[:, k] @ Z / nk[k]
            variances[k] = np.maximum(resp[:, k] @ (Z - means[k]) ** 2 / nk[k], floor)
    labels = np.argmax(logp, axis=1)
    return labels, trace, means, variances, priors


def em_fit_array(users: Sequence[str], X: np.ndarray, cfg: EmConfig = EmConfig()) -> EmResult:
    users = tuple(users)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(users) != X.shape[0]:
        raise ValueError("points must be an (n_users, n_features) array aligned with users")
    if len(users) < 2:
        raise ValueError("EM clustering needs at least 2 users")
    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite feature value for user {users[int(np.argmax(bad))]!r}")

    Z = _prepare(X, cfg.standardize)
    if Z.shape[1] == 0:
        # every feature constant: nothing to separate
        return EmResult(users, np.zeros(len(users), dtype=int), 0.0, [0.0], 0, 0, 0,
                        np.zeros((2, 0)), np.zeros((2, 0)), np.array([1.0, 0.0]), Z)

    best = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        labels, trace, means, variances, priors = _run_em(Z, cfg, rng)
        if best is None or trace[-1] > best[1][-1]:
            best = (labels, trace, means, variances, priors, r)
    labels, trace, means, variances, priors, r = best
    return EmResult(users, labels, trace[-1], trace, len(trace), r, Z.shape[1],
                    means, variances, priors, Z)


def em_fit(points: Mapping[str, Sequence[float]], cfg: EmConfig = EmConfig()) -> EmResult:
    users = sorted(points)
    X = np.array([list(points[u]) for u in users], dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return em_fit_array(users, X, cfg)


@dataclass
class SpaceDiagnostics:
    cluster_sizes: tuple[int, int]
    suspect_size: int
    iterations: int
    log_likelihood: float
    restart: int
    dims_used: int
    tie_broken: bool


@dataclass
class DetectionReport:
    flagged: frozenset[str]
    suspects: dict[str, frozenset[str]]
    diagnostics: dict[str, SpaceDiagnostics]
    standardized: bool = True

    def to_dict(self) -> dict:
        return {
            "flagged": sorted(self.flagged),
            "suspects": {k: sorted(v) for k, v in self.suspects.items()},
            "diagnostics": {k: asdict(v) for k, v in self.diagnostics.items()},
            "standardized": self.standardized,
        }


def smaller_cluster(result: EmResult) -> tuple[frozenset[str], bool]:
    """The suspect cluster; equal sizes go to the more outlying cluster."""
    a, b = result.clusters
    if len(a) != len(b):
        return (a, False) if len(a) < len(b) else (b, False)
    # Z is centred, so distance from the global centroid is the row norm
    dist = np.sqrt((result.z**2).sum(axis=1)) if result.z.shape[1] else np.zeros(len(result.users))
    spread = [dist[result.labels == k].mean() if (result.labels == k).any() else -np.inf for k in (0, 1)]
    return (a if spread[0] >= spread[1] else b), True


def detect_tables(users: Sequence[str], tables: Mapping[str, np.ndarray], cfg: EmConfig = EmConfig()) -> DetectionReport:
    suspects, diagnostics = {}, {}
    for kind in KINDS:
        res = em_fit_array(users, tables[kind], cfg)
        chosen, tie = smaller_cluster(res)
        suspects[kind] = chosen
        sizes = tuple(len(c) for c in res.clusters)
        diagnostics[kind] = SpaceDiagnostics(
            sizes, len(chosen), res.iterations, res.log_likelihood, res.restart, res.dims_used, tie
        )
    flagged = suspects["rd"] & suspects["p"] & suspects["n"]
    return DetectionReport(frozenset(flagged), suspects, diagnostics, cfg.standardize)


def detect(features: Sequence[UserFeatureSet], cfg: EmConfig = EmConfig()) -> DetectionReport:
    features = sorted(features, key=lambda f: f.user)
    users = [f.user for f in features]
    tables = {kind: np.array([f.by_kind(kind).as_array() for f in features]) for kind in KINDS}
    return detect_tables(users, tables, cfg)
