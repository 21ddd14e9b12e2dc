"""Latent factor model with user/item group biases.

The rating propensity matrix is assembled from four factor blocks: per-user
rows P, per-item rows Q, and one shared bias row per user group (S) and per
item group (T).  Entry (u, i) is the inner product of (p_u + s_{g(u)}) and
(q_i + t_{g(i)}), and the probability of a positive rating is the sigmoid of
that entry.

Group indices are 0-based everywhere in memory; conversion to the 1-based
convention used in files happens at the I/O boundary only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError


def _as_float_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise UsageError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class FactorSet:
    """The four factor blocks of the model.

    P: (n_users, k) user factors
    Q: (n_items, k) item factors
    S: (n_user_groups, k) user-group bias factors
    T: (n_item_groups, k) item-group bias factors
    """

    P: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        for name in ("P", "Q", "S", "T"):
            m = _as_float_matrix(getattr(self, name), name)
            object.__setattr__(self, name, m)
            if not np.all(np.isfinite(m)):
                raise UsageError(f"factor matrix {name} contains non-finite entries")
        k = self.P.shape[1]
        for name in ("Q", "S", "T"):
            if getattr(self, name).shape[1] != k:
                raise UsageError(
                    f"factor matrices disagree on latent dimension: P has {k}, "
                    f"{name} has {getattr(self, name).shape[1]}"
                )

    @property
    def k(self) -> int:
        return self.P.shape[1]

    @property
    def n_users(self) -> int:
        return self.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.Q.shape[0]

    def frobenius_penalty(self) -> float:
        """Sum of squared Frobenius norms of all four blocks."""
        return float(
            np.sum(self.P**2) + np.sum(self.S**2) + np.sum(self.Q**2) + np.sum(self.T**2)
        )


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of users and items into groups (0-based labels)."""

    user_groups: np.ndarray
    item_groups: np.ndarray
    n_user_groups: int
    n_item_groups: int

    def __post_init__(self):
        for name, n_groups in (
            ("user_groups", self.n_user_groups),
            ("item_groups", self.n_item_groups),
        ):
            v = np.asarray(getattr(self, name), dtype=np.intp)
            object.__setattr__(self, name, v)
            if v.ndim != 1 or v.size == 0:
                raise UsageError(f"{name} must be a nonempty 1-d integer vector")
            if n_groups < 1:
                raise UsageError(f"group count for {name} must be positive")
            if v.min() < 0 or v.max() >= n_groups:
                raise UsageError(
                    f"{name} has labels outside [0, {n_groups - 1}]"
                )

    @property
    def n_users(self) -> int:
        return self.user_groups.size

    @property
    def n_items(self) -> int:
        return self.item_groups.size


@dataclass(frozen=True)
class BinaryRatings:
    """Sparse +/-1 rating observations on an n_users x n_items grid.

    users/items are parallel 0-based index arrays; values holds +1/-1.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.intp)
        items = np.asarray(self.items, dtype=np.intp)
        values = np.asarray(self.values, dtype=np.int8)
        for name, a in (("users", users), ("items", items), ("values", values)):
            if a.ndim != 1:
                raise UsageError(f"{name} must be 1-d")
        if not (users.size == items.size == values.size):
            raise UsageError("users, items, values must have equal length")
        if self.n_users < 1 or self.n_items < 1:
            raise UsageError("matrix dimensions must be positive")
        if users.size:
            if users.min() < 0 or users.max() >= self.n_users:
                raise UsageError("user index out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise UsageError("item index out of range")
            if not np.all(np.abs(values) == 1):
                raise UsageError("rating values must be +1 or -1")
            flat = users * self.n_items + items
            if np.unique(flat).size != flat.size:
                raise UsageError("duplicate (user, item) observation")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "values", values)

    @property
    def n_observed(self) -> int:
        return self.values.size

    def to_dense(self) -> np.ndarray:
        """Dense matrix with +1/-1 at observed entries and 0 elsewhere."""
        out = np.zeros((self.n_users, self.n_items))
        out[self.users, self.items] = self.values
        return out


def sigmoid(z):
    """Numerically stable logistic function 1 / (1 + exp(-z)).

    Accepts scalars or arrays; rejects non-finite input.  Stable over the
    full float64 range (evaluates exp only on non-positive arguments).
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise UsageError("sigmoid input must be finite")
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def expand_group_factors(group_factors: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Duplicate per-group rows out to per-entity rows.

    Row e of the result is row labels[e] of group_factors, so entities
    sharing a group share an identical bias row.
    """
    group_factors = _as_float_matrix(group_factors, "group_factors")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= group_factors.shape[0]):
        raise UsageError("group label out of range for the given factor rows")
    return group_factors[labels]


def assemble_m(factors: FactorSet, assignment: GroupAssignment) -> np.ndarray:
    """Dense propensity matrix (P + S_expanded) @ (Q + T_expanded)^T."""
    if assignment.n_users != factors.n_users or assignment.n_items != factors.n_items:
        raise UsageError(
            f"assignment covers {assignment.n_users}x{assignment.n_items} but factors "
            f"are {factors.n_users}x{factors.n_items}"
        )
    if assignment.n_user_groups != factors.S.shape[0]:
        raise UsageError("user group count does not match S rows")
    if assignment.n_item_groups != factors.T.shape[0]:
        raise UsageError("item group count does not match T rows")
    a = factors.P + expand_group_factors(factors.S, assignment.user_groups)
    b = factors.Q + expand_group_factors(factors.T, assignment.item_groups)
    return a @ b.T


def predict_probabilities(m: np.ndarray) -> np.ndarray:
    """Element-wise probability of a +1 rating for each entry of m."""
    return sigmoid(m)


def binarize_predictions(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Hard +/-1 decisions from probabilities.

    Ties at the threshold resolve to +1 so accuracy numbers are reproducible.
    """
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"threshold must lie in (0, 1), got {threshold}")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise UsageError("probabilities must lie in [0, 1]")
    return np.where(probs >= threshold, 1, -1).astype(np.int8)
