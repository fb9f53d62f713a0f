"""Shilling attack profile generation and injection.

Eight attack models are supported, each with push, nuke and grey intents.
A profile rates one target item, an optional block of *selected* items with
fixed strategic ratings, and a block of *filler* items used as camouflage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, ItemStats, RatingMatrix, UserLabelSet, compute_item_stats

MODELS = (
    "aop",
    "random",
    "average",
    "bandwagon_average",
    "bandwagon_random",
    "segment",
    "reverse_bandwagon",
    "love_hate",
)
INTENTS = ("push", "nuke", "grey")
ATTACKER_PREFIX = "~atk"
DEFAULT_AOP_FRACTION = 0.1


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True)
class AttackSpec:
    model: str
    intent: str
    attack_size: float
    filler_size: float
    grey_rating: int | None = None
    aop_top_fraction: float | None = None
    seed: int = 0
    popularity_threshold: int = 200
    n_bandwagon: int = 10
    n_segment: int = 5
    n_reverse: int = 10
    # "grey": grey profiles use the grey rating for every fixed-rating slot;
    # "nuke": they copy the nuke profile and only the target rating changes.
    grey_pattern: str = "grey"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown attack model {self.model!r}")
        if self.intent not in INTENTS:
            raise ValueError(f"unknown intent {self.intent!r}")
        if not self.attack_size >= 0:
            raise ValueError("attack_size must be non-negative")
        if not 0 < self.filler_size <= 1:
            raise ValueError("filler_size must lie in (0, 1]")
        if self.intent == "grey" and self.grey_rating is None:
            raise ValueError("grey intent requires grey_rating")
        if self.model == "aop":
            if self.aop_top_fraction is None:
                raise ValueError("aop model requires aop_top_fraction")
            if not 0 < self.aop_top_fraction <= 1:
                raise ValueError("aop_top_fraction must lie in (0, 1]")
        elif self.aop_top_fraction is not None:
            raise ValueError("aop_top_fraction only applies to the aop model")
        if self.grey_pattern not in ("grey", "nuke"):
            raise ValueError(f"unknown grey_pattern {self.grey_pattern!r}")


@dataclass
class AttackProfile:
    target: str
    target_rating: int
    selected: dict[str, int] = field(default_factory=dict)
    filler: dict[str, int] = field(default_factory=dict)

    def ratings(self) -> dict[str, int]:
        out = dict(self.filler)
        out.update(self.selected)
        out[self.target] = self.target_rating
        return out

    def check(self, scale: tuple[int, int], n_filler: int | None = None) -> None:
        """Raise AssertionError if the profile violates its structural invariants."""
        assert self.target not in self.selected and self.target not in self.filler
        assert not set(self.selected) & set(self.filler)
        lo, hi = scale
        for r in [self.target_rating, *self.selected.values(), *self.filler.values()]:
            assert isinstance(r, int) and lo <= r <= hi, r
        if n_filler is not None:
            assert len(self.filler) == n_filler


def _ranked_by_popularity(stats: ItemStats) -> list[int]:
    # PoI descending, item id ascending
    return sorted(range(len(stats.items)), key=lambda k: (-stats.count[k], stats.items[k]))


def select_special_items(
    m: RatingMatrix,
    stats: ItemStats,
    kind: str,
    count: int,
    seed,
    popularity_threshold: int = 200,
    exclude=(),
) -> list[str]:
    """Pick popular, segment or unpopular items.

    ``seed`` may be an int or a numpy Generator.  Segment selection is
    deterministic; the other kinds draw uniformly from their qualifying pool.
    """
    excluded = set(exclude)
    if kind == "segment":
        pool = [stats.items[k] for k in _ranked_by_popularity(stats) if stats.items[k] not in excluded]
        if len(pool) < count:
            raise DataError(f"segment pool has {len(pool)} items, need {count}")
        return pool[:count]
    if kind == "popular":
        pool = [i for i, c in zip(stats.items, stats.count) if c > popularity_threshold]
    elif kind == "unpopular":
        pool = [i for i, c in zip(stats.items, stats.count) if c == 1]
    else:
        raise ValueError(f"unknown selection kind {kind!r}")
    pool = [i for i in pool if i not in excluded]
    if len(pool) < count:
        raise DataError(f"{kind} pool has {len(pool)} items, need {count}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=count, replace=False)
    return [pool[k] for k in sorted(picked)]


def _fixed_ratings(spec: AttackSpec, scale: tuple[int, int]) -> tuple[int, int, int]:
    """Return (target, selected, fixed-filler) ratings for the spec's intent.

    ``selected`` is the bandwagon/segment rating; reverse bandwagon and the
    fixed-value fillers (segment, love/hate) use the opposite extreme.
    """
    lo, hi = scale
    if spec.intent == "push":
        return hi, hi, lo
    if spec.intent == "nuke":
        return lo, lo, hi
    grey = int(spec.grey_rating)
    if not lo <= grey <= hi:
        raise DataError(f"grey rating {grey} outside scale {scale}")
    if spec.grey_pattern == "grey":
        return grey, grey, grey
    return grey, lo, hi


def _selection_kind(model: str) -> tuple[str, str] | None:
    return {
        "bandwagon_average": ("popular", "n_bandwagon"),
        "bandwagon_random": ("popular", "n_bandwagon"),
        "segment": ("segment", "n_segment"),
        "reverse_bandwagon": ("unpopular", "n_reverse"),
    }.get(model)


def choose_selected_items(spec: AttackSpec, m: RatingMatrix, stats: ItemStats, target: str, rng) -> list[str]:
    kind = _selection_kind(spec.model)
    if kind is None:
        return []
    name, count_attr = kind
    return select_special_items(
        m, stats, name, getattr(spec, count_attr), rng,
        popularity_threshold=spec.popularity_threshold, exclude=(target,),
    )


def filler_count(spec: AttackSpec, n_items: int) -> int:
    return round_half_up(spec.filler_size * n_items)


def build_attack_profile(
    spec: AttackSpec,
    m: RatingMatrix,
    stats: ItemStats,
    target: str,
    rng: np.random.Generator,
    selected: list[str] | None = None,
) -> AttackProfile:
    if target not in m.item_index:
        raise DataError(f"target {target!r} is not in the item universe")
    lo, hi = m.scale
    if selected is None:
        selected = choose_selected_items(spec, m, stats, target, rng)
    target_r, sel_r, fixed_r = _fixed_ratings(spec, m.scale)
    if spec.model == "reverse_bandwagon":
        sel_r = fixed_r

    blocked = {target, *selected}
    n_fill = filler_count(spec, m.n_items)
    if spec.model == "aop":
        top = math.ceil(spec.aop_top_fraction * m.n_items)
        candidates = _ranked_by_popularity(stats)[:top]
    else:
        candidates = range(m.n_items)
    pool = np.array([k for k in candidates if m.items[k] not in blocked], dtype=np.intp)
    if len(pool) < n_fill:
        raise DataError(f"filler pool exhausted: {len(pool)} candidates for {n_fill} filler items")
    chosen = np.sort(rng.choice(pool, size=n_fill, replace=False)) if n_fill else pool[:0]

    if spec.model in ("aop", "average", "bandwagon_average"):
        draws = rng.normal(stats.mean[chosen], stats.std[chosen])
    elif spec.model in ("random", "bandwagon_random", "reverse_bandwagon"):
        draws = rng.normal(stats.system_mean, stats.system_std, n_fill)
    else:  # segment, love_hate
        draws = np.full(n_fill, fixed_r, dtype=float)
    filler_r = np.clip(np.rint(draws), lo, hi).astype(int)

    return AttackProfile(
        target=target,
        target_rating=int(target_r),
        selected={i: int(sel_r) for i in selected},
        filler={m.items[k]: int(r) for k, r in zip(chosen, filler_r)},
    )


def attacker_count(spec: AttackSpec, n_genuine: int) -> int:
    return round_half_up(spec.attack_size * n_genuine)


def inject_attacks(genuine: RatingMatrix, spec: AttackSpec) -> tuple[RatingMatrix, UserLabelSet]:
    """Add attack profiles sharing one random target item.

    Profile ``k`` draws from its own stream seeded by ``(spec.seed, k)``, so
    profiles are independent of construction order.
    """
    if len(genuine) == 0:
        raise DataError("cannot attack an empty matrix")
    if any(u.startswith(ATTACKER_PREFIX) for u in genuine.users):
        raise DataError(f"genuine user ids may not start with {ATTACKER_PREFIX!r}")
    n_att = attacker_count(spec, genuine.n_users)
    if n_att == 0:
        raise DataError("attack size yields zero attackers")

    stats = compute_item_stats(genuine)
    rng = np.random.default_rng([spec.seed, 0x7A27])
    target = genuine.items[int(rng.integers(genuine.n_items))]
    selected = choose_selected_items(spec, genuine, stats, target, rng)

    ratings = dict(genuine.ratings)
    width = max(4, len(str(n_att - 1)))
    attackers = []
    for k in range(n_att):
        sub = np.random.default_rng([spec.seed, k])
        profile = build_attack_profile(spec, genuine, stats, target, sub, selected=selected)
        uid = f"{ATTACKER_PREFIX}{k:0{width}d}"
        attackers.append(uid)
        for item, r in profile.ratings().items():
            ratings[(uid, item)] = r
    attacked = RatingMatrix(ratings, genuine.scale, users=genuine.users, items=genuine.items)
    labels = UserLabelSet(frozenset(genuine.users), frozenset(attackers))
    return attacked, labels

