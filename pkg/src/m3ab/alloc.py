"""Per-stage sampling allocations for control and active treatments.

The relative-variance rule splits a stage budget B so that every active
treatment's z-estimator variance bound is equalized:

    N(0) = floor( lambda_sigma / (rho_sigma + lambda_sigma) * B )
    N(a) = floor( max_i rho2[a,i] / (rho_sigma * (rho_sigma + lambda_sigma)) * B )

with rho_sigma = sqrt(sum_a max_i rho2[a,i]) and lambda_sigma the largest
lambda over the active set.  The unrounded shares sum to exactly B and give

    max_i rho2[a,i]/N(a) + lambda_sigma^2/N(0) = (rho_sigma+lambda_sigma)^2/B

for every active a, which is the min-max-optimal continuous allocation.

Baseline rules (uniform / proportional to max_i sigma^2 / proportional to
max_i sigma) treat the control as one more arm.  All rules guarantee every
arm at least one pull whenever the stage budget covers the arm count: a
zero-pull active arm has no mean estimate, so a floored-to-zero count is
bumped to one pull funded from the floor-discarded remainder (extreme
variance ratios hit this, e.g. the control share when every surviving
treatment dwarfs the control's variance).  Only a budget below |active|+1 is
reported as insufficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from m3ab.core import Instance, relative_variance
from m3ab.errors import InsufficientBudgetError

FLOOR = "floor"
LARGEST_REMAINDER = "largest_remainder"


@dataclass(frozen=True)
class StageAllocation:
    """Pull counts for one stage; treatment_pulls is keyed by treatment index."""

    control_pulls: int
    treatment_pulls: dict[int, int]
    stage_budget: int

    def __post_init__(self):
        total = self.control_pulls + sum(self.treatment_pulls.values())
        if total > self.stage_budget:
            raise ValueError(
                f"allocation spends {total} pulls, stage budget is {self.stage_budget}"
            )
        if self.control_pulls < 0 or any(n < 0 for n in self.treatment_pulls.values()):
            raise ValueError("pull counts must be nonnegative")

    @property
    def total_pulls(self) -> int:
        return self.control_pulls + sum(self.treatment_pulls.values())


@dataclass(frozen=True)
class SetVariances:
    """Aggregate relative-variance scales of an active set."""

    rho_sigma: float
    lambda_sigma: float


def max_rho_sq(stddevs: np.ndarray, active: list[int]) -> np.ndarray:
    """max_i rho2[a,i] for each active treatment, from an (A+1) x M stddev matrix."""
    rho_sq, _ = relative_variance(stddevs[active], stddevs[0])
    return np.atleast_2d(rho_sq).max(axis=1)


def set_variances_from(stddevs: np.ndarray, active: list[int]) -> SetVariances:
    if len(active) == 0:
        raise ValueError("active set must be nonempty")
    rho_sq, lambda_sq = relative_variance(stddevs[active], stddevs[0])
    rho_sq = np.atleast_2d(rho_sq)
    lambda_sq = np.atleast_2d(lambda_sq)
    return SetVariances(
        rho_sigma=float(np.sqrt(rho_sq.max(axis=1).sum())),
        lambda_sigma=float(np.sqrt(lambda_sq.max())),
    )


def set_variances(instance: Instance, active) -> SetVariances:
    """rho_sigma = sqrt(sum of per-treatment max rho2); lambda_sigma = max lambda."""
    return set_variances_from(instance.stddevs, sorted(active))


def shrvar_allocation_unrounded(
    instance: Instance, active, stage_budget: int
) -> tuple[float, dict[int, float]]:
    """The exact (real-valued) relative-variance allocation before rounding."""
    arms = sorted(active)
    sv = set_variances_from(instance.stddevs, arms)
    rho2 = max_rho_sq(instance.stddevs, arms)
    denom = sv.rho_sigma + sv.lambda_sigma
    control = sv.lambda_sigma / denom * stage_budget
    per_arm = rho2 / (sv.rho_sigma * denom) * stage_budget
    return control, dict(zip(arms, per_arm.tolist()))


def shrvar_allocation(
    instance: Instance, active, stage_budget: int, rounding: str = FLOOR
) -> StageAllocation:
    """Relative-variance allocation with the algorithm's floor rounding.

    Floored-to-zero counts are bumped to one pull, paid for from the
    floor-discarded remainder first and otherwise from the largest counts;
    all other counts keep their exact floors.  Raises
    InsufficientBudgetError when the budget cannot cover one pull per arm.
    """
    _check_budget(stage_budget)
    arms = sorted(active)
    sv = set_variances_from(instance.stddevs, arms)
    rho2 = max_rho_sq(instance.stddevs, arms)
    counts = _shrvar_counts(rho2, sv.lambda_sigma, stage_budget, rounding)
    return _to_allocation([0] + arms, counts, stage_budget)


def uniform_allocation(active, stage_budget: int) -> StageAllocation:
    """Every arm (control included) gets floor(B / (|active|+1)) pulls."""
    _check_budget(stage_budget)
    arms = sorted(active)
    per = stage_budget // (len(arms) + 1)
    if per == 0:
        raise InsufficientBudgetError(
            f"stage budget {stage_budget} cannot cover {len(arms) + 1} arms", arm=0
        )
    return StageAllocation(
        control_pulls=per,
        treatment_pulls={a: per for a in arms},
        stage_budget=stage_budget,
    )


def variance_allocation(instance: Instance, active, stage_budget: int) -> StageAllocation:
    """Pulls proportional to max_i sigma[arm,i]^2, control folded in as an arm."""
    arms = sorted(active)
    weights = np.max(instance.stddevs[[0] + arms] ** 2, axis=1)
    return _proportional([0] + arms, weights, stage_budget)


def neyman_allocation(instance: Instance, active, stage_budget: int) -> StageAllocation:
    """Pulls proportional to max_i sigma[arm,i], control folded in as an arm."""
    arms = sorted(active)
    weights = np.max(instance.stddevs[[0] + arms], axis=1)
    return _proportional([0] + arms, weights, stage_budget)


def _check_budget(stage_budget: int):
    if not isinstance(stage_budget, (int, np.integer)) or stage_budget <= 0:
        raise ValueError("stage_budget must be a positive integer")


def _shrvar_counts(max_rho2: np.ndarray, lambda_sigma: float, stage_budget: int,
                   rounding: str) -> np.ndarray:
    """Rounded counts [control, treatments...] of the relative-variance rule."""
    rho_sigma = math.sqrt(float(max_rho2.sum()))
    denom = rho_sigma + lambda_sigma
    exact = np.concatenate(
        ([lambda_sigma / denom * stage_budget],
         max_rho2 / (rho_sigma * denom) * stage_budget)
    )
    return _round(exact, stage_budget, rounding)


def _to_allocation(arms: list[int], counts: np.ndarray,
                   stage_budget: int) -> StageAllocation:
    counts = _fund_starved(counts, arms, stage_budget)
    return StageAllocation(
        control_pulls=int(counts[0]),
        treatment_pulls=dict(zip(arms[1:], (int(c) for c in counts[1:]))),
        stage_budget=stage_budget,
    )


def _fund_starved(counts: np.ndarray, arms: list[int], stage_budget: int) -> np.ndarray:
    """Give every zero-count arm one pull without exceeding the budget.

    The discarded rounding remainder pays first; if that runs out, pulls are
    taken back from the largest counts (deterministically, first position on
    ties).  A count above one is always available to shrink unless the
    budget is below the arm count, which is reported as insufficient.
    """
    if not np.any(counts == 0):
        return counts
    if stage_budget < len(arms):
        starved = arms[int(np.argmin(counts))]
        raise InsufficientBudgetError(
            f"stage budget {stage_budget} cannot cover {len(arms)} arms",
            arm=starved,
        )
    counts = counts.copy()
    counts[counts == 0] = 1
    while counts.sum() > stage_budget:
        counts[np.argmax(counts)] -= 1
    return counts


def _round(exact: np.ndarray, stage_budget: int, rounding: str) -> np.ndarray:
    counts = np.floor(exact).astype(int)
    if rounding == LARGEST_REMAINDER:
        # Hand the discarded remainder back, largest fractional part first
        # (ties -> lower position); each arm gains at most one pull.
        leftover = stage_budget - int(counts.sum())
        order = np.lexsort((np.arange(exact.size), -(exact - counts)))
        counts[order[:leftover]] += 1
    elif rounding != FLOOR:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    return counts


def _proportional(arms: list[int], weights: np.ndarray, stage_budget: int) -> StageAllocation:
    """Weight-proportional pulls, floored, with a one-pull-per-arm guarantee.

    Weight ratios for these baselines can span many orders of magnitude, so a
    plain floor could zero out low-weight arms and break their estimators.
    Floored zeros are bumped to one pull and the excess is taken back from the
    largest counts, deterministically.
    """
    _check_budget(stage_budget)
    counts = np.floor(weights / weights.sum() * stage_budget).astype(int)
    return _to_allocation(arms, counts, stage_budget)
