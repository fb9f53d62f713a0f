"""Amplitude-domain statistics of wavelet approximation coefficients."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass

import numpy as np

from .data import RatingMatrix
from .series import KINDS, ItemOrdering, build_series, series_matrix
from .wavelet import WaveletSpec, approximation_rows, dwt_multilevel

FEATURE_NAMES = (
    "min",
    "max",
    "mean",
    "peak",
    "rms",
    "rms_amplitude",
    "abs_mean",
    "variance",
    "skewness",
    "kurtosis",
    "shape_factor",
    "crest_factor",
    "impulse_factor",
    "clearance_factor",
    "kurtosis_value",
)


@dataclass(frozen=True)
class FeatureVector:
    min: float
    max: float
    mean: float
    peak: float
    rms: float
    rms_amplitude: float
    abs_mean: float
    variance: float
    skewness: float
    kurtosis: float
    shape_factor: float
    crest_factor: float
    impulse_factor: float
    clearance_factor: float
    kurtosis_value: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class UserFeatureSet:
    user: str
    f_rd: FeatureVector
    f_p: FeatureVector
    f_n: FeatureVector

    def by_kind(self, kind: str) -> FeatureVector:
        return {"rd": self.f_rd, "p": self.f_p, "n": self.f_n}[kind]


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # zero denominators yield 0 instead of inf/nan
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def feature_matrix(X: np.ndarray) -> np.ndarray:
    """The 15 features for each row of ``X``; shape (n_rows, 15)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] == 0:
        raise ValueError("cannot compute features of an empty signal")
    x_min = X.min(axis=1)
    x_max = X.max(axis=1)
    mean = X.mean(axis=1)
    A = np.abs(X)
    peak = A.max(axis=1)
    X2 = X * X
    ms = X2.mean(axis=1)
    rms = np.sqrt(ms)
    x_r = np.sqrt(A).mean(axis=1) ** 2
    abs_mean = A.mean(axis=1)
    variance = ms - mean * mean
    skew = (X2 * X).mean(axis=1)
    kurt = (X2 * X2).mean(axis=1)
    return np.column_stack(
        [
            x_min,
            x_max,
            mean,
            peak,
            rms,
            x_r,
            abs_mean,
            variance,
            skew,
            kurt,
            _ratio(rms, abs_mean),
            _ratio(peak, rms),
            _ratio(peak, abs_mean),
            _ratio(peak, x_r),
            _ratio(kurt, ms * ms),
        ]
    )


def amplitude_features(x) -> FeatureVector:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot compute features of an empty signal")
    return FeatureVector(*feature_matrix(x[None, :])[0].tolist())


def extract_user_features(
    m: RatingMatrix,
    user: str,
    orderings: dict[str, ItemOrdering],
    w: WaveletSpec,
    levels: int = 1,
) -> UserFeatureSet:
    vectors = {}
    for kind in KINDS:
        series = build_series(m, user, orderings[kind])
        result = dwt_multilevel(series.values, w, levels)
        vectors[kind] = amplitude_features(result.approx())
    return UserFeatureSet(user, vectors["rd"], vectors["p"], vectors["n"])


def feature_tables(
    m: RatingMatrix,
    orderings: dict[str, ItemOrdering],
    w: WaveletSpec,
    levels: int = 1,
) -> dict[str, np.ndarray]:
    """Per-kind (n_users, 15) feature arrays, rows aligned with ``m.users``."""
    return {
        kind: feature_matrix(approximation_rows(series_matrix(m, orderings[kind]), w, levels))
        for kind in KINDS
    }


def tables_to_feature_sets(users, tables: dict[str, np.ndarray]) -> list[UserFeatureSet]:
    return [
        UserFeatureSet(
            u,
            FeatureVector(*tables["rd"][k].tolist()),
            FeatureVector(*tables["p"][k].tolist()),
            FeatureVector(*tables["n"][k].tolist()),
        )
        for k, u in enumerate(users)
    ]


def write_feature_csv(feature_sets: list[UserFeatureSet], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "kind", *(f"f{k}" for k in range(1, 16))])
        for fs in sorted(feature_sets, key=lambda s: s.user):
            for kind in KINDS:
                writer.writerow([fs.user, kind, *(repr(v) for v in astuple(fs.by_kind(kind)))])


def read_feature_csv(path) -> list[UserFeatureSet]:
    rows: dict[str, dict[str, FeatureVector]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            rows.setdefault(rec[0], {})[rec[1]] = FeatureVector(*map(float, rec[2:17]))
    return [UserFeatureSet(u, v["rd"], v["p"], v["n"]) for u, v in sorted(rows.items())]

