"""Block-coordinate training of the group-bias factor model.

The four blocks are visited in the order P, S, Q, T.  Each visit applies a
fixed number of gradient steps with backtracking (halve the step until the
objective does not increase), so the objective is non-increasing along the
whole trajectory.  Step sizes adapt per block: a step accepted without
halving doubles the block's next trial step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, UsageError
from .model import BinaryRatings, FactorSet, GroupAssignment, assemble_m, expand_group_factors, sigmoid
from .objective import ObservationMasks, _grad_margins, _group_rowsum, _scatter, _softplus, masks_from_observations
from .seeding import STREAM_FACTOR_INIT, stream_rng

_BLOCKS = ("P", "S", "Q", "T")
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one fit.

    lam defaults to 37, the value the synthetic tuning selects; everything
    else (budgets, step size, init scale) is an implementation choice and
    can be overridden freely.
    """

    k: int
    lam: float = 37.0
    step_size: float = 1.0
    max_outer_iters: int = 500
    inner_steps_per_block: int = 5
    tolerance: float = 1e-5
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise UsageError("latent dimension k must be positive")
        if self.lam < 0:
            raise UsageError("lam must be nonnegative")
        if self.step_size <= 0:
            raise UsageError("step_size must be positive")
        if self.max_outer_iters < 0:
            raise UsageError("max_outer_iters must be nonnegative")
        if self.inner_steps_per_block < 1:
            raise UsageError("inner_steps_per_block must be positive")
        if not 0 < self.tolerance < 1:
            raise UsageError("tolerance must lie in (0, 1)")
        if self.init_scale <= 0:
            raise UsageError("init_scale must be positive")


@dataclass(frozen=True)
class FitResult:
    factors: FactorSet
    loss_trace: np.ndarray
    iterations_run: int
    converged: bool


class BlockCoordinateTrainer:
    """Mutable training state over one (ratings, assignment) problem.

    Keeps the observed-entry margins machinery cached so block steps cost a
    few index gathers and one sparse product each.
    """

    def __init__(
        self,
        factors: FactorSet,
        assignment: GroupAssignment,
        masks: ObservationMasks,
        config: TrainConfig,
    ):
        if masks.shape != (assignment.n_users, assignment.n_items):
            raise UsageError("mask shape does not match assignment")
        self.assignment = assignment
        self.masks = masks
        self.config = config
        self.factors = factors
        # sparse scatter matrix with a fixed pattern; data is rewritten per step
        self._g = _scatter(masks, np.zeros(masks.n_observed))
        self._steps = {name: config.step_size for name in _BLOCKS}
        self._refresh_sides()
        self.loss = self._loss(self._a_obs, self._b_obs, factors)
        if not np.isfinite(self.loss):
            raise NumericalError(
                f"initial objective is {self.loss}; check init_scale and data"
            )

    def _refresh_sides(self):
        f, asg = self.factors, self.assignment
        self._a = f.P + expand_group_factors(f.S, asg.user_groups)
        self._b = f.Q + expand_group_factors(f.T, asg.item_groups)
        self._a_obs = self._a[self.masks.rows]
        self._b_obs = self._b[self.masks.cols]

    def _loss(self, a_obs, b_obs, factors) -> float:
        margins = np.einsum("ij,ij->i", a_obs, b_obs)
        data = float(np.sum(_softplus(-self.masks.signs * margins)))
        return data + self.config.lam * factors.frobenius_penalty()

    def _block_gradient(self, block: str) -> np.ndarray:
        lam, asg = self.config.lam, self.assignment
        margins = np.einsum("ij,ij->i", self._a_obs, self._b_obs)
        self._g.data[:] = _grad_margins(margins, self.masks.signs)
        if block in ("P", "S"):
            dfd_a = self._g @ self._b
            if block == "P":
                return dfd_a + 2.0 * lam * self.factors.P
            return _group_rowsum(dfd_a, asg.user_groups, asg.n_user_groups) + 2.0 * lam * self.factors.S
        dfd_b = self._g.T @ self._a
        if block == "Q":
            return dfd_b + 2.0 * lam * self.factors.Q
        return _group_rowsum(dfd_b, asg.item_groups, asg.n_item_groups) + 2.0 * lam * self.factors.T

    def _candidate(self, block: str, step: float, grad: np.ndarray):
        new_block = getattr(self.factors, block) - step * grad
        factors = replace(self.factors, **{block: new_block})
        asg = self.assignment
        if block in ("P", "S"):
            a = factors.P + expand_group_factors(factors.S, asg.user_groups)
            a_obs, b_obs = a[self.masks.rows], self._b_obs
            sides = (a, self._b, a_obs, b_obs)
        else:
            b = factors.Q + expand_group_factors(factors.T, asg.item_groups)
            a_obs, b_obs = self._a_obs, b[self.masks.cols]
            sides = (self._a, b, a_obs, b_obs)
        return factors, sides, self._loss(a_obs, b_obs, factors)

    def step_block(self, block: str) -> float:
        """One backtracking gradient step on a block; returns the new loss."""
        grad = self._block_gradient(block)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient in block {block}")
        step = self._steps[block]
        for halving in range(_MAX_HALVINGS + 1):
            factors, sides, loss = self._candidate(block, step, grad)
            if np.isfinite(loss) and loss <= self.loss:
                self.factors = factors
                self._a, self._b, self._a_obs, self._b_obs = sides
                self.loss = loss
                self._steps[block] = step * 2.0 if halving == 0 else step
                return self.loss
            step *= 0.5
        # no step length made progress; keep the block unchanged
        self._steps[block] = step
        return self.loss

    def cycle(self) -> float:
        """One full pass over all blocks; returns the loss afterwards."""
        for block in _BLOCKS:
            for _ in range(self.config.inner_steps_per_block):
                self.step_block(block)
        return self.loss


def initial_factors(
    n_users: int, n_items: int, assignment: GroupAssignment, config: TrainConfig
) -> FactorSet:
    """Seeded Gaussian initialization, drawn in the fixed order P, Q, S, T."""
    rng = stream_rng(config.seed, STREAM_FACTOR_INIT)
    s = config.init_scale
    return FactorSet(
        P=s * rng.standard_normal((n_users, config.k)),
        Q=s * rng.standard_normal((n_items, config.k)),
        S=s * rng.standard_normal((assignment.n_user_groups, config.k)),
        T=s * rng.standard_normal((assignment.n_item_groups, config.k)),
    )


def fit_gs1mc(
    ratings: BinaryRatings,
    assignment: GroupAssignment,
    config: TrainConfig,
) -> FitResult:
    """Fit the factor model to fixed group assignments.

    Stops when the relative objective change over a full cycle drops below
    config.tolerance or after max_outer_iters cycles.
    """
    if ratings.n_observed == 0:
        raise UsageError("cannot fit with an empty observed set")
    if (ratings.n_users, ratings.n_items) != (assignment.n_users, assignment.n_items):
        raise UsageError("assignment does not cover the rating matrix")
    masks = masks_from_observations(ratings)
    factors = initial_factors(ratings.n_users, ratings.n_items, assignment, config)
    trainer = BlockCoordinateTrainer(factors, assignment, masks, config)
    trace = [trainer.loss]
    converged = False
    iterations = 0
    for _ in range(config.max_outer_iters):
        prev = trainer.loss
        trace.append(trainer.cycle())
        iterations += 1
        if abs(prev - trace[-1]) < config.tolerance * max(abs(prev), 1e-12):
            converged = True
            break
    return FitResult(
        factors=trainer.factors,
        loss_trace=np.asarray(trace),
        iterations_run=iterations,
        converged=converged,
    )


def predict_missing(fit: FitResult, assignment: GroupAssignment) -> np.ndarray:
    """Probability of +1 for every (user, item) pair, observed or not."""
    return sigmoid(assemble_m(fit.factors, assignment))
