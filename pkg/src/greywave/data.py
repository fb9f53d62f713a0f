"""Rating matrices: loading, sampling, persistence and per-item statistics.

Ids are opaque strings.  A missing (user, item) pair means "unrated"; it is
never encoded as a rating of 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

FORMATS = ("bookcrossing", "hetrec", "generic_csv")
DEFAULT_SCALE = (1, 10)


class DataError(ValueError):
    """Raised for malformed or out-of-contract rating data."""


class RatingMatrix:
    """Immutable sparse user x item store of integer ratings.

    ``users`` and ``items`` are kept sorted so that every derived array has a
    reproducible layout.  Dense views are built lazily and cached.
    """

    def __init__(
        self,
        ratings: Mapping[tuple[str, str], int],
        scale: tuple[int, int] = DEFAULT_SCALE,
        users: Iterable[str] | None = None,
        items: Iterable[str] | None = None,
    ):
        r_min, r_max = scale
        if r_min >= r_max:
            raise DataError(f"invalid rating scale {scale}")
        self.scale = (int(r_min), int(r_max))
        store: dict[tuple[str, str], int] = {}
        for (u, i), r in ratings.items():
            r = int(r)
            if not r_min <= r <= r_max:
                raise DataError(f"rating out of scale: {r} for ({u}, {i})")
            store[(str(u), str(i))] = r
        self._ratings = store
        user_set = {u for u, _ in store}
        item_set = {i for _, i in store}
        if users is not None:
            user_set.update(str(u) for u in users)
        if items is not None:
            item_set.update(str(i) for i in items)
        self.users: tuple[str, ...] = tuple(sorted(user_set))
        self.items: tuple[str, ...] = tuple(sorted(item_set))

    @classmethod
    def from_dense(cls, users, items, values, mask, scale=DEFAULT_SCALE) -> "RatingMatrix":
        rows, cols = np.nonzero(mask)
        ratings = {(users[r], items[c]): int(values[r, c]) for r, c in zip(rows, cols)}
        return cls(ratings, scale, users=users, items=items)

    @property
    def ratings(self) -> Mapping[tuple[str, str], int]:
        return self._ratings

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def __len__(self) -> int:
        return len(self._ratings)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (
            self.scale == other.scale
            and self.users == other.users
            and self.items == other.items
            and self._ratings == other._ratings
        )

    def __repr__(self) -> str:
        return f"RatingMatrix(users={self.n_users}, items={self.n_items}, ratings={len(self)})"

    def get(self, user: str, item: str) -> int | None:
        return self._ratings.get((user, item))

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: k for k, u in enumerate(self.users)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.items)}

    @cached_property
    def _dense(self) -> tuple[np.ndarray, np.ndarray]:
        values = np.zeros((self.n_users, self.n_items), dtype=np.float64)
        mask = np.zeros((self.n_users, self.n_items), dtype=bool)
        if self._ratings:
            uidx, iidx = self.user_index, self.item_index
            keys = list(self._ratings)
            rows = np.fromiter((uidx[u] for u, _ in keys), dtype=np.intp, count=len(keys))
            cols = np.fromiter((iidx[i] for _, i in keys), dtype=np.intp, count=len(keys))
            values[rows, cols] = np.fromiter(self._ratings.values(), dtype=np.float64, count=len(keys))
            mask[rows, cols] = True
        values.flags.writeable = False
        mask.flags.writeable = False
        return values, mask

    @property
    def values(self) -> np.ndarray:
        """Dense float ratings, 0 where unrated (read-only)."""
        return self._dense[0]

    @property
    def mask(self) -> np.ndarray:
        """Dense boolean rated/unrated indicator (read-only)."""
        return self._dense[1]

    def user_profile(self, user: str) -> dict[str, int]:
        if user not in self.user_index:
            raise KeyError(f"unknown user {user!r}")
        row = self.user_index[user]
        cols = np.flatnonzero(self.mask[row])
        return {self.items[c]: int(self.values[row, c]) for c in cols}

    def restrict_users(self, users: Iterable[str]) -> "RatingMatrix":
        """Sub-matrix over ``users``; the item universe shrinks to rated items."""
        keep = set(users)
        missing = keep.difference(self.users)
        if missing:
            raise KeyError(f"unknown users: {sorted(missing)[:5]}")
        sub = {(u, i): r for (u, i), r in self._ratings.items() if u in keep}
        return RatingMatrix(sub, self.scale, users=keep)


@dataclass(frozen=True)
class ItemStats:
    """Per-item and system-wide rating statistics aligned with ``items``."""

    items: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    system_mean: float
    system_std: float

    def index(self, item: str) -> int:
        return self._index[item]

    @cached_property
    def _index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.items)}

    def item_mean(self, item: str) -> float:
        return float(self.mean[self._index[item]])

    def item_std(self, item: str) -> float:
        return float(self.std[self._index[item]])

    def popularity(self, item: str) -> int:
        return int(self.count[self._index[item]])


@dataclass(frozen=True)
class UserLabelSet:
    genuine: frozenset[str]
    attackers: frozenset[str]

    def __post_init__(self):
        if self.genuine & self.attackers:
            raise DataError("a user cannot be both genuine and attacker")

    @property
    def users(self) -> frozenset[str]:
        return self.genuine | self.attackers

    def label(self, user: str) -> str:
        if user in self.attackers:
            return "attacker"
        if user in self.genuine:
            return "genuine"
        raise KeyError(user)


def compute_item_stats(m: RatingMatrix) -> ItemStats:
    if len(m) == 0:
        raise DataError("cannot compute statistics of an empty matrix")
    values, mask = m.values, m.mask
    count = mask.sum(axis=0)
    all_ratings = values[mask]
    system_mean = float(all_ratings.mean())
    system_std = float(all_ratings.std())
    safe = np.maximum(count, 1)
    mean = values.sum(axis=0) / safe
    sq_dev = np.where(mask, (values - mean) ** 2, 0.0).sum(axis=0)
    std = np.sqrt(sq_dev / safe)
    # items nobody rated fall back to system statistics
    empty = count == 0
    mean[empty] = system_mean
    std[empty] = system_std
    return ItemStats(m.items, mean, std, count.astype(np.int64), system_mean, system_std)


def sample_genuine(m: RatingMatrix, n: int, seed: int) -> RatingMatrix:
    """Uniformly sample ``n`` users without replacement (deterministic per seed)."""
    if n > m.n_users:
        raise DataError(f"cannot sample {n} users from {m.n_users}")
    if n < 1:
        raise DataError("sample size must be positive")
    rng = np.random.default_rng(seed)
    picked = rng.choice(m.n_users, size=n, replace=False)
    return m.restrict_users(m.users[k] for k in picked)


# -- loaders ------------------------------------------------------------------


def _finish(rows: dict[tuple[str, str], int], path: Path) -> RatingMatrix:
    if not rows:
        raise DataError(f"{path}: no ratings found")
    return RatingMatrix(rows, DEFAULT_SCALE)


def _check_scale(r: int, lineno: int, path: Path) -> int:
    lo, hi = DEFAULT_SCALE
    if not lo <= r <= hi:
        raise DataError(f"{path}:{lineno}: rating out of scale: {r}")
    return r


def _parse_int(text: str, lineno: int, path: Path) -> int:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: malformed rating {text!r}") from None
    if value != int(value):
        raise DataError(f"{path}:{lineno}: non-integer rating {text!r}")
    return int(value)


def _load_bookcrossing(path: Path) -> RatingMatrix:
    rows: dict[tuple[str, str], int] = {}
    with open(path, encoding="latin-1", newline="") as fh:
        reader = csv.reader(fh, delimiter=";", quotechar='"')
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            user, item, raw = (f.strip() for f in rec)
            r = _parse_int(raw, lineno, path)
            if r == 0:
                continue  # implicit feedback
            rows[(user, item)] = _check_scale(r, lineno, path)
    return _finish(rows, path)


def _load_hetrec(path: Path) -> RatingMatrix:
    rows: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        cols = {name.strip(): k for k, name in enumerate(header)}
        try:
            ku, ki, kr = cols["userID"], cols["movieID"], cols["rating"]
        except KeyError:
            raise DataError(f"{path}:1: header must contain userID, movieID, rating") from None
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) <= max(ku, ki, kr):
                raise DataError(f"{path}:{lineno}: too few fields")
            try:
                half = float(rec[kr])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed rating {rec[kr]!r}") from None
            # 0.5..5 half-stars -> 1..10; round half up to avoid banker's rounding
            r = int(np.floor(2.0 * half + 0.5))
            rows[(rec[ku].strip(), rec[ki].strip())] = _check_scale(r, lineno, path)
    return _finish(rows, path)


def _looks_like_header(rec: list[str]) -> bool:
    if len(rec) != 3:
        return False
    try:
        float(rec[2])
    except ValueError:
        return True
    return False


def _load_generic(path: Path) -> RatingMatrix:
    rows: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        records = list(csv.reader(fh))
        if not records:
            raise DataError(f"{path}: empty file")
        start = 1
        if _looks_like_header(records[0]):
            records, start = records[1:], 2
        for lineno, rec in enumerate(records, start=start):
            if not rec:
                continue
            if len(rec) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            r = _parse_int(rec[2], lineno, path)
            rows[(rec[0], rec[1])] = _check_scale(r, lineno, path)
    return _finish(rows, path)


def load_ratings(path, format: str = "generic_csv") -> RatingMatrix:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    loaders = {
        "bookcrossing": _load_bookcrossing,
        "hetrec": _load_hetrec,
        "generic_csv": _load_generic,
    }
    if format not in loaders:
        raise DataError(f"unknown format {format!r}; expected one of {FORMATS}")
    return loaders[format](path)


def save_ratings(m: RatingMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "item_id", "rating"])
        for (u, i) in sorted(m.ratings):
            writer.writerow([u, i, m.ratings[(u, i)]])


def save_labels(labels: UserLabelSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label"])
        for u in sorted(labels.users):
            writer.writerow([u, labels.label(u)])


def load_labels(path) -> UserLabelSet:
    genuine, attackers = set(), set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) is None:
            raise DataError(f"{path}: empty file")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2 or rec[1] not in ("genuine", "attacker"):
                raise DataError(f"{path}:{lineno}: expected user_id,genuine|attacker")
            (attackers if rec[1] == "attacker" else genuine).add(rec[0])
    return UserLabelSet(frozenset(genuine), frozenset(attackers))
