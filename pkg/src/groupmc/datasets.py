"""Data sources: the synthetic group-structured generator, MovieLens 100k
ingestion and binarization, observed-set splitting, and implicit-feedback
grouping.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, UsageError
from .model import BinaryRatings, FactorSet, GroupAssignment, expand_group_factors, sigmoid
from .seeding import STREAM_SPLIT, STREAM_SYNTH, stream_rng

N_GENRES = 19


class RatingRecord(NamedTuple):
    user: int  # 1-based, as in the raw files
    item: int
    rating: int
    timestamp: int


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for the group-structured benchmark.

    User-group bias rows are drawn around means -2 + 0.4 v and item-group
    rows around -3 + 0.6 j (v, j counted from 1), both with unit variance
    per coordinate; the assembled matrix is rescaled to max |M| = 1 before
    additive N(0, noise_sigma^2) noise and 0.5-thresholding produce labels.
    """

    k: int
    pi: float
    n_users: int = 200
    n_items: int = 800
    n_user_groups: int = 10
    n_item_groups: int = 10
    noise_sigma: float = 1.0
    binarize: str = "threshold"  # or "bernoulli": draw labels from f(M) directly
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise UsageError("k must be positive")
        if not 0.0 < self.pi <= 1.0:
            raise UsageError(f"observation rate pi must lie in (0, 1], got {self.pi}")
        if self.n_users % self.n_user_groups or self.n_items % self.n_item_groups:
            raise UsageError("group counts must divide the matrix dimensions evenly")
        if self.noise_sigma < 0:
            raise UsageError("noise_sigma must be nonnegative")
        if self.binarize not in ("threshold", "bernoulli"):
            raise UsageError(f"unknown binarize mode {self.binarize!r}")


@dataclass(frozen=True)
class SyntheticData:
    ratings: BinaryRatings
    assignment: GroupAssignment
    factors: FactorSet  # as drawn, before the global rescale
    m_true: np.ndarray  # assembled and rescaled to max |entry| = 1
    scale: float  # the max |entry| the raw assembly was divided by


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticData:
    """Draw one group-structured binary completion problem.

    Users and items are partitioned into equal-size contiguous groups.  The
    draw order (P, Q, S, T, noise, observation mask) is fixed, so a seed
    pins the dataset bit-for-bit.
    """
    rng = stream_rng(cfg.seed, STREAM_SYNTH)
    n1, n2, m1, m2 = cfg.n_users, cfg.n_items, cfg.n_user_groups, cfg.n_item_groups
    p = rng.standard_normal((n1, cfg.k))
    q = rng.standard_normal((n2, cfg.k))
    s = rng.standard_normal((m1, cfg.k)) + (-2.0 + 0.4 * np.arange(1, m1 + 1))[:, None]
    t = rng.standard_normal((m2, cfg.k)) + (-3.0 + 0.6 * np.arange(1, m2 + 1))[:, None]
    factors = FactorSet(P=p, Q=q, S=s, T=t)
    assignment = GroupAssignment(
        user_groups=np.repeat(np.arange(m1), n1 // m1),
        item_groups=np.repeat(np.arange(m2), n2 // m2),
        n_user_groups=m1,
        n_item_groups=m2,
    )
    raw = (p + expand_group_factors(s, assignment.user_groups)) @ (
        q + expand_group_factors(t, assignment.item_groups)
    ).T
    scale = float(np.max(np.abs(raw)))
    m_true = raw / scale

    probs = sigmoid(m_true)
    if cfg.binarize == "threshold":
        noisy = probs + cfg.noise_sigma * rng.standard_normal((n1, n2))
        labels = np.where(np.clip(noisy, 0.0, 1.0) > 0.5, 1, -1).astype(np.int8)
    else:
        labels = np.where(rng.random((n1, n2)) < probs, 1, -1).astype(np.int8)

    total = n1 * n2
    n_obs = int(round(cfg.pi * total))
    observed = rng.permutation(total)[:n_obs]
    users, items = np.divmod(observed, n2)
    ratings = BinaryRatings(
        n_users=n1, n_items=n2, users=users, items=items, values=labels[users, items]
    )
    return SyntheticData(
        ratings=ratings, assignment=assignment, factors=factors, m_true=m_true, scale=scale
    )


def _parse_int(field: str, path: str, line_no: int) -> int:
    try:
        return int(field)
    except ValueError:
        raise DataError(f"{path}:{line_no}: expected an integer, got {field!r}") from None


def load_movielens(directory: str) -> tuple[list[RatingRecord], np.ndarray]:
    """Read a MovieLens-100k-layout dataset.

    Expects `u.data` (tab-separated: user, item, rating, timestamp) and
    `u.item` (pipe-separated item metadata whose final 19 fields are 0/1
    genre flags).  Returns the rating records and the n_items x 19 genre
    matrix indexed by item id - 1.
    """
    ratings_path = os.path.join(directory, "u.data")
    items_path = os.path.join(directory, "u.item")
    for path in (ratings_path, items_path):
        if not os.path.exists(path):
            raise DataError(f"missing dataset file: {path}")
        if os.path.getsize(path) == 0:
            raise DataError(f"dataset file is empty: {path}")

    genre_rows: dict[int, np.ndarray] = {}
    with open(items_path, encoding="latin-1") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("|")
            if len(fields) < N_GENRES + 1:
                raise DataError(
                    f"{items_path}:{line_no}: expected at least {N_GENRES + 1} fields, got {len(fields)}"
                )
            item_id = _parse_int(fields[0], items_path, line_no)
            if item_id < 1:
                raise DataError(f"{items_path}:{line_no}: item id must be positive")
            flags = [_parse_int(f, items_path, line_no) for f in fields[-N_GENRES:]]
            if any(f not in (0, 1) for f in flags):
                raise DataError(f"{items_path}:{line_no}: genre flags must be 0/1")
            if item_id in genre_rows:
                raise DataError(f"{items_path}:{line_no}: duplicate item id {item_id}")
            genre_rows[item_id] = np.asarray(flags, dtype=np.int8)
    n_items = max(genre_rows)
    if set(genre_rows) != set(range(1, n_items + 1)):
        raise DataError(f"{items_path}: item ids are not contiguous from 1")
    genres = np.vstack([genre_rows[i] for i in range(1, n_items + 1)])

    records: list[RatingRecord] = []
    with open(ratings_path, encoding="latin-1") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise DataError(f"{ratings_path}:{line_no}: expected 4 tab-separated fields")
            user, item, rating, ts = (_parse_int(f, ratings_path, line_no) for f in fields)
            if user < 1:
                raise DataError(f"{ratings_path}:{line_no}: user id must be positive")
            if not 1 <= item <= n_items:
                raise DataError(f"{ratings_path}:{line_no}: item id {item} out of range")
            if not 1 <= rating <= 5:
                raise DataError(f"{ratings_path}:{line_no}: rating {rating} outside 1..5")
            records.append(RatingRecord(user, item, rating, ts))
    if not records:
        raise DataError(f"{ratings_path}: no rating records")
    return records, genres


def binarize_ratings(
    records: list[RatingRecord],
    n_users: int | None = None,
    n_items: int | None = None,
) -> BinaryRatings:
    """Quantize raw ratings against their global mean.

    Entries strictly above the mean become +1, strictly below become -1;
    entries exactly at the mean are dropped from the observed set (the
    dropped count is len(records) - result.n_observed).
    """
    if not records:
        raise UsageError("no rating records to binarize")
    users = np.asarray([r.user for r in records], dtype=np.intp)
    items = np.asarray([r.item for r in records], dtype=np.intp)
    values = np.asarray([r.rating for r in records], dtype=np.float64)
    mean = values.mean()
    keep = values != mean
    n_users = int(users.max()) if n_users is None else n_users
    n_items = int(items.max()) if n_items is None else n_items
    return BinaryRatings(
        n_users=n_users,
        n_items=n_items,
        users=users[keep] - 1,
        items=items[keep] - 1,
        values=np.where(values[keep] > mean, 1, -1).astype(np.int8),
    )


def split_observed(
    ratings: BinaryRatings, train_fraction: float, seed: int = 0
) -> tuple[BinaryRatings, BinaryRatings]:
    """Uniform random partition of the observed set into train and test."""
    if not 0.0 < train_fraction < 1.0:
        raise UsageError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = stream_rng(seed, STREAM_SPLIT)
    perm = rng.permutation(ratings.n_observed)
    n_train = int(round(train_fraction * ratings.n_observed))
    parts = []
    for idx in (perm[:n_train], perm[n_train:]):
        parts.append(
            BinaryRatings(
                n_users=ratings.n_users,
                n_items=ratings.n_items,
                users=ratings.users[idx],
                items=ratings.items[idx],
                values=ratings.values[idx],
            )
        )
    return parts[0], parts[1]


def group_by_implicit_feedback(ratings: BinaryRatings, m: int, side: str) -> np.ndarray:
    """Group entities by how many observed ratings they carry.

    Entities are sorted by ascending rating count (ties by ascending id) and
    cut into m near-equal bins; the bin index (0-based) is the group, so
    more active entities never land in a lower group.
    """
    if side not in ("user", "item"):
        raise UsageError(f"side must be 'user' or 'item', got {side!r}")
    n = ratings.n_users if side == "user" else ratings.n_items
    idx = ratings.users if side == "user" else ratings.items
    if m < 1:
        raise UsageError("group count must be positive")
    if m > n:
        raise UsageError(f"cannot form {m} groups from {n} entities")
    counts = np.bincount(idx, minlength=n)
    order = np.lexsort((np.arange(n), counts))
    groups = np.empty(n, dtype=np.intp)
    for g, chunk in enumerate(np.array_split(order, m)):
        groups[chunk] = g
    return groups
