"""Ratings in, detection report out."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RatingMatrix, compute_item_stats
from .detector import DetectionReport, EmConfig, detect_tables
from .features import feature_tables
from .series import ItemOrdering, compute_orderings
from .wavelet import wavelet


@dataclass(frozen=True)
class PipelineConfig:
    wavelet: str = "haar"
    levels: int = 1
    em: EmConfig = field(default_factory=EmConfig)


def extract_features(m: RatingMatrix, cfg: PipelineConfig = PipelineConfig()):
    """Return (orderings, per-kind feature tables) for every user of ``m``."""
    orderings: dict[str, ItemOrdering] = compute_orderings(m, compute_item_stats(m))
    tables: dict[str, np.ndarray] = feature_tables(m, orderings, wavelet(cfg.wavelet), cfg.levels)
    return orderings, tables


def run_detection(m: RatingMatrix, cfg: PipelineConfig = PipelineConfig()) -> DetectionReport:
    _, tables = extract_features(m, cfg)
    return detect_tables(m.users, tables, cfg.em)
