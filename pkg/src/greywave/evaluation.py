"""Detection metrics, prediction-shift experiments and parameter sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attacks import DEFAULT_AOP_FRACTION, AttackSpec, attacker_count, inject_attacks
from .data import DataError, RatingMatrix, load_ratings, sample_genuine
from .detector import EmConfig
from .pipeline import PipelineConfig, run_detection
from .synthetic import SyntheticConfig, synthetic_genuine

log = logging.getLogger(__name__)

GRID_ATTACK_SIZES = (0.03, 0.07, 0.12, 0.17, 0.22, 0.27, 0.32, 0.37, 0.42, 0.47)
GRID_FILLER_SIZES = (0.01, 0.017, 0.025, 0.05, 0.067, 0.08, 0.10)
SWEEP_COLUMNS = (
    "model", "intent", "grey_rating", "attack_size", "filler_size",
    "detection_rate", "false_alarm_rate", "mae", "rmse", "reps", "error",
)


def detection_rate(detected: Iterable[str], attackers: Iterable[str]) -> float:
    attackers = set(attackers)
    if not attackers:
        raise ValueError("detection rate is undefined without attackers")
    return len(set(detected) & attackers) / len(attackers)


def false_alarm_rate(detected: Iterable[str], genuine: Iterable[str]) -> float:
    genuine = set(genuine)
    if not genuine:
        raise ValueError("false alarm rate is undefined without genuine users")
    return len(set(detected) & genuine) / len(genuine)


def _residuals(pairs) -> np.ndarray:
    pairs = np.asarray(list(pairs), dtype=np.float64)
    if pairs.size == 0:
        raise ValueError("no (actual, predicted) pairs")
    return pairs[:, 0] - pairs[:, 1]


def mae(pairs) -> float:
    return float(np.mean(np.abs(_residuals(pairs))))


def rmse(pairs) -> float:
    r = _residuals(pairs)
    return float(np.sqrt(np.mean(r * r)))


class KnnPredictor:
    """User-based kNN with Pearson correlation over co-rated items.

    Neighbours need at least ``min_overlap`` co-rated items and a positive
    correlation.  Predictions are mean-centred and clamped to the scale; when
    no neighbour rated the item the item mean, user mean and system mean are
    tried in that order.
    """

    def __init__(self, m: RatingMatrix, k: int = 20, min_overlap: int = 2):
        self.m = m
        self.k = k
        V, M = m.values, m.mask.astype(np.float64)
        n = M @ M.T
        sx = V @ M.T
        sxx = (V * V) @ M.T
        sxy = V @ V.T
        num = n * sxy - sx * sx.T
        var_u = n * sxx - sx * sx
        den = np.sqrt(np.clip(var_u, 0, None) * np.clip(var_u.T, 0, None))
        ok = (n >= min_overlap) & (den > 0)
        corr = np.full(n.shape, np.nan)
        np.divide(num, den, out=corr, where=ok)
        np.fill_diagonal(corr, np.nan)
        self.corr = corr
        counts = m.mask.sum(axis=1)
        self.user_mean = np.divide(V.sum(axis=1), counts, out=np.full(m.n_users, np.nan), where=counts > 0)
        item_counts = m.mask.sum(axis=0)
        self.item_mean = np.divide(V.sum(axis=0), item_counts, out=np.full(m.n_items, np.nan), where=item_counts > 0)
        self.system_mean = float(V[m.mask].mean()) if len(m) else float(np.mean(m.scale))

    def predict(self, user: str, item: str) -> float:
        m = self.m
        if user not in m.user_index:
            raise KeyError(f"unknown user {user!r}")
        lo, hi = m.scale
        u = m.user_index[user]
        j = m.item_index.get(item)
        if j is not None:
            w = self.corr[u]
            cand = np.flatnonzero(m.mask[:, j] & (w > 0))
            if len(cand):
                # stable sort: highest correlation first, ties by user order
                top = cand[np.argsort(-w[cand], kind="stable")[: self.k]]
                weights = w[top]
                dev = m.values[top, j] - self.user_mean[top]
                base = self.user_mean[u] if np.isfinite(self.user_mean[u]) else self.system_mean
                pred = base + weights @ dev / np.abs(weights).sum()
                return float(np.clip(pred, lo, hi))
            if np.isfinite(self.item_mean[j]):
                return float(np.clip(self.item_mean[j], lo, hi))
        if np.isfinite(self.user_mean[u]):
            return float(np.clip(self.user_mean[u], lo, hi))
        return float(np.clip(self.system_mean, lo, hi))


def predict_knn(m: RatingMatrix, user: str, item: str, k: int = 20) -> float:
    return KnnPredictor(m, k).predict(user, item)


def split_holdout(m: RatingMatrix, fraction: float, seed: int) -> tuple[RatingMatrix, list[tuple[str, str, int]]]:
    """Hold out ``fraction`` of the ratings; every user keeps at least one."""
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    keys = sorted(m.ratings)
    target = int(round(fraction * len(keys)))
    rng = np.random.default_rng([seed, 0x401D])
    remaining = {u: 0 for u in m.users}
    for u, _ in keys:
        remaining[u] += 1
    test = []
    for k in rng.permutation(len(keys)):
        if len(test) >= target:
            break
        u, i = keys[k]
        if remaining[u] > 1:
            remaining[u] -= 1
            test.append((u, i, m.ratings[(u, i)]))
    if not test:
        raise DataError("holdout is empty")
    held = {(u, i) for u, i, _ in test}
    train = {key: r for key, r in m.ratings.items() if key not in held}
    return RatingMatrix(train, m.scale, users=m.users, items=m.items), sorted(test)


@dataclass(frozen=True)
class ShiftResult:
    mae: float
    rmse: float
    baseline_mae: float
    baseline_rmse: float
    n_test: int


def _score(train: RatingMatrix, test, k: int) -> tuple[float, float]:
    knn = KnnPredictor(train, k)
    pairs = [(r, knn.predict(u, i)) for u, i, r in test]
    return mae(pairs), rmse(pairs)


def prediction_shift_experiment(
    genuine: RatingMatrix,
    spec: AttackSpec | None,
    holdout_fraction: float = 0.1,
    k: int = 20,
    seed: int = 0,
) -> ShiftResult:
    """MAE/RMSE of kNN on held-out genuine ratings, with and without attack.

    ``spec=None``, or a spec that yields no attackers, runs the no-attack
    pipeline and so reproduces the baseline.
    """
    train, test = split_holdout(genuine, holdout_fraction, seed)
    base = _score(train, test, k)
    if spec is None or attacker_count(spec, train.n_users) == 0:
        return ShiftResult(*base, *base, len(test))
    attacked, _ = inject_attacks(train, spec)
    return ShiftResult(*_score(attacked, test, k), *base, len(test))


# -- sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRef:
    """A ratings file (+format) or, when ``path`` is unset, the synthetic generator.

    ``sample_users`` draws that many users with ``sample_genuine``; ``None``
    keeps everyone.
    """

    path: str | None = None
    format: str = "generic_csv"
    sample_users: int | None = None
    sample_seed: int = 1
    synthetic_seed: int = 1
    synthetic: dict = field(default_factory=dict)

    def load(self) -> RatingMatrix:
        if self.path:
            m = load_ratings(self.path, self.format)
        else:
            m = synthetic_genuine(self.synthetic_seed, SyntheticConfig(**self.synthetic))
        if self.sample_users:
            m = sample_genuine(m, self.sample_users, self.sample_seed)
        return m


@dataclass(frozen=True)
class SweepConfig:
    dataset: DatasetRef = field(default_factory=DatasetRef)
    models: tuple[str, ...] = ("average",)
    intents: tuple[tuple[str, int | None], ...] = (("nuke", None),)
    attack_sizes: tuple[float, ...] = (0.17,)
    filler_sizes: tuple[float, ...] = (0.05,)
    repetitions: int = 1
    base_seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    aop_top_fraction: float = DEFAULT_AOP_FRACTION
    popularity_threshold: int = 200
    grey_pattern: str = "grey"
    prediction_shift: bool = True
    holdout_fraction: float = 0.1
    knn_k: int = 20

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for name in ("models", "intents", "attack_sizes", "filler_sizes"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")

    def cells(self) -> list["CellKey"]:
        return [
            CellKey(model, intent, grey, a, f)
            for model, (intent, grey), a, f in product(
                self.models, self.intents, self.attack_sizes, self.filler_sizes
            )
        ]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        doc = dict(doc)
        if "dataset" in doc:
            doc["dataset"] = DatasetRef(**doc["dataset"])
        if "pipeline" in doc:
            pipe = dict(doc["pipeline"])
            if "em" in pipe:
                pipe["em"] = EmConfig(**pipe["em"])
            doc["pipeline"] = PipelineConfig(**pipe)
        if "intents" in doc:
            doc["intents"] = tuple(_parse_intent(x) for x in doc["intents"])
        for name in ("models", "attack_sizes", "filler_sizes"):
            if name in doc:
                doc[name] = tuple(doc[name])
        return cls(**doc)


def _parse_intent(x) -> tuple[str, int | None]:
    if isinstance(x, str):
        return (x, None)
    if isinstance(x, dict):
        return (x["intent"], x.get("grey_rating"))
    intent, grey = x
    return (intent, None if grey is None else int(grey))


@dataclass(frozen=True, order=True)
class CellKey:
    model: str
    intent: str
    grey_rating: int | None
    attack_size: float
    filler_size: float


@dataclass
class MetricRow:
    key: CellKey
    detection_rate: float = math.nan
    false_alarm_rate: float = math.nan
    mae: float = math.nan
    rmse: float = math.nan
    reps: int = 0
    error: str = ""

    def as_record(self) -> dict:
        k = self.key
        return {
            "model": k.model,
            "intent": k.intent,
            "grey_rating": "" if k.grey_rating is None else k.grey_rating,
            "attack_size": k.attack_size,
            "filler_size": k.filler_size,
            "detection_rate": self.detection_rate,
            "false_alarm_rate": self.false_alarm_rate,
            "mae": self.mae,
            "rmse": self.rmse,
            "reps": self.reps,
            "error": self.error,
        }


def derive_seed(base_seed: int, key: CellKey, rep: int) -> int:
    text = json.dumps([base_seed, key.model, key.intent, key.grey_rating, key.attack_size, key.filler_size, rep])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


def cell_spec(cfg: SweepConfig, key: CellKey, seed: int) -> AttackSpec:
    return AttackSpec(
        model=key.model,
        intent=key.intent,
        grey_rating=key.grey_rating,
        attack_size=key.attack_size,
        filler_size=key.filler_size,
        aop_top_fraction=cfg.aop_top_fraction if key.model == "aop" else None,
        seed=seed,
        popularity_threshold=cfg.popularity_threshold,
        grey_pattern=cfg.grey_pattern,
    )


def run_cell(cfg: SweepConfig, genuine: RatingMatrix, key: CellKey) -> MetricRow:
    drs, fars, maes, rmses = [], [], [], []
    try:
        for rep in range(cfg.repetitions):
            seed = derive_seed(cfg.base_seed, key, rep)
            spec = cell_spec(cfg, key, seed)
            attacked, labels = inject_attacks(genuine, spec)
            report = run_detection(attacked, replace(cfg.pipeline, em=replace(cfg.pipeline.em, seed=seed % 2**32)))
            drs.append(detection_rate(report.flagged, labels.attackers))
            fars.append(false_alarm_rate(report.flagged, labels.genuine))
            if cfg.prediction_shift:
                shift = prediction_shift_experiment(genuine, spec, cfg.holdout_fraction, cfg.knn_k, seed)
                maes.append(shift.mae)
                rmses.append(shift.rmse)
    except (DataError, ValueError) as exc:
        return MetricRow(key, error=str(exc) or type(exc).__name__)
    return MetricRow(
        key,
        float(np.mean(drs)),
        float(np.mean(fars)),
        float(np.mean(maes)) if maes else math.nan,
        float(np.mean(rmses)) if rmses else math.nan,
        cfg.repetitions,
    )


def _record_to_row(rec: dict) -> MetricRow:
    grey = rec["grey_rating"]
    key = CellKey(rec["model"], rec["intent"], None if grey in ("", None) else int(grey),
                  float(rec["attack_size"]), float(rec["filler_size"]))
    return MetricRow(key, float(rec["detection_rate"]), float(rec["false_alarm_rate"]),
                     float(rec["mae"]), float(rec["rmse"]), int(rec["reps"]), rec.get("error", ""))


def _pool_cell(args):
    cfg, genuine, key = args
    return run_cell(cfg, genuine, key)


def run_sweep(
    cfg: SweepConfig,
    out_dir=None,
    parallelism: int = 1,
    cells: Sequence[CellKey] | None = None,
    genuine: RatingMatrix | None = None,
) -> list[MetricRow]:
    """Run every cell; rows come back in the config's cell order.

    With ``out_dir`` each finished cell is appended to ``cells.partial.jsonl``
    and cells already present there are skipped, so an interrupted sweep can
    be resumed by rerunning it.
    """
    genuine = genuine if genuine is not None else cfg.dataset.load()
    order = cfg.cells()
    todo = list(cells) if cells is not None else list(order)
    done: dict[CellKey, MetricRow] = {}
    partial = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        partial = out_dir / "cells.partial.jsonl"
        if partial.exists():
            for line in partial.read_text().splitlines():
                if line.strip():
                    row = _record_to_row(json.loads(line))
                    done[row.key] = row
    pending = [k for k in todo if k not in done]

    def flush(row: MetricRow):
        done[row.key] = row
        if partial is not None:
            with open(partial, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row.as_record()) + "\n")
        log.info("cell %s: DR=%.3f FAR=%.3f %s", row.key, row.detection_rate, row.false_alarm_rate, row.error)

    if parallelism > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for row in pool.map(_pool_cell, [(cfg, genuine, k) for k in pending]):
                flush(row)
    else:
        for k in pending:
            flush(run_cell(cfg, genuine, k))

    rank = {k: n for n, k in enumerate(order)}
    keys = sorted({*todo}, key=lambda k: rank.get(k, len(rank)))
    rows = [done[k] for k in keys]
    if out_dir is not None:
        write_rows(rows, out_dir / "results.csv")
    return rows


def write_rows(rows: Sequence[MetricRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_record())


def read_rows(path) -> list[MetricRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [_record_to_row(rec) for rec in csv.DictReader(fh)]


def full_grid(**overrides) -> SweepConfig:
    """The 8 models x 10 attack sizes x 7 filler sizes grid (nuke intent)."""
    from .attacks import MODELS

    doc = dict(models=MODELS, attack_sizes=GRID_ATTACK_SIZES, filler_sizes=GRID_FILLER_SIZES)
    doc.update(overrides)
    return SweepConfig(**doc)
