"""Instance-hardness diagnostics for the staged exploration engines.

Everything here is a function of the true z-value matrix and the relative
variances; nothing is estimated.  For a candidate set S of treatments
containing the best one, define

    rho_sigma(S)    = sqrt(sum_{a in S} max_i rho2[a, i]),
    lambda_sigma(S) = sqrt(max_{a in S, i} lambda2[a, i]),

the same set-level scales the stage allocator equalizes against.  The
heterogeneity weight of one (arm, metric) pair inside S is

    kappa(S, a, i) = (rho2[a,i]/max_i rho2[a,i] * rho_sigma
                      + lambda2[a,i]/lambda_sigma(S)^2 * lambda_sigma)
                     / (rho_sigma + lambda_sigma),

a value in (0, 1] that is exactly 1 when one metric attains both maxima.
The effective gap of a sub-optimal treatment a in S against the best
treatment `star` is

    D(S, a)^2 = min_i max_j [z[star,i] - z[a,j]]_+^2
                            / (kappa(S,a,j) + kappa(S,star,i))^2,

and the subset-minimum complexity is

    h3 = ( min_{S : star in S}  min_{a in S'_c} D(S, a)^2
                                / (rho_sigma(S) + lambda_sigma(S))^2 )^-1,

where S'_c is the sub-optimal part of S minus its floor(|S|/4) members with
smallest gap (no drops when |S| <= 3; the best treatment never occupies a
drop slot).  Subsets whose S'_c is empty contribute nothing.

The budget-corrected variant replaces D by a gap that may additionally pick

    [z[star,i] - z[a,j]]_+^2 / (kappa(S,a,j) - kappa(S,star,i))^2
        + delta_min^2 - 8 A log2(A)^2 / T

whenever kappa(S,a,j) > kappa(S,star,i); it is never larger than D, so the
corrected complexity is never smaller.  delta_min is the smallest gap in
bottleneck z-values between the best treatment and any other.

The error_bound helper evaluates 6 M log2(A) exp(-T / (c h log2 A)) with
c = 2 ("theorem1") or c = 8 ("theorem2" — its source states 2 but concludes
with 8; we default the stricter variant to the concluding constant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Instance, best_treatment, relative_variance, z_profile
from .errors import TooLargeError

__all__ = [
    "ComplexityReport",
    "ErrorBound",
    "effective_gap",
    "effective_gap_tilde",
    "error_bound",
    "h3",
    "h3_prime",
    "h3_tilde",
    "kappa",
]

DEFAULT_MAX_ENUMERATION = 20
_CHUNK = 1024


@dataclass(frozen=True)
class ComplexityReport:
    """Subset-minimum hardness of one instance, plus the cheaper surrogates."""

    h3: float
    h3_prime: float
    delta_min: float
    argmin_subset: tuple[int, ...]
    rho_sigma: float
    lambda_sigma: float
    num_treatments: int
    num_metrics: int
    h3_tilde: float | None = None

    def gamma_s(self, budget: float) -> float:
        """Stage-scale (rho_sigma + lambda_sigma) * sqrt(log2(A) / T) of the
        attaining subset."""
        if budget <= 0:
            raise ValueError("budget must be positive")
        return (self.rho_sigma + self.lambda_sigma) * math.sqrt(
            math.log2(self.num_treatments) / budget
        )


class ErrorBound(NamedTuple):
    value: float
    vacuous: bool


def _treatment_relvars(instance: Instance) -> np.ndarray:
    """(A, M) relative variances rho2 of each treatment against control."""
    rho_sq, _ = relative_variance(instance.stddevs[1:], instance.stddevs[0])
    return rho_sq


def _set_scales(rho2: np.ndarray, members: np.ndarray) -> tuple[float, float]:
    mr = rho2.max(axis=1)
    lam2 = 1.0 - rho2
    rho_sigma = math.sqrt(float(mr[members].sum()))
    lambda_sigma = math.sqrt(float(lam2[members].max()))
    return rho_sigma, lambda_sigma


def _validate_subset(instance: Instance, subset) -> np.ndarray:
    members = sorted(set(int(a) for a in subset))
    if not members:
        raise ValueError("subset must not be empty")
    for a in members:
        if not 1 <= a <= instance.num_treatments:
            raise ValueError(f"treatment {a} is not part of the instance")
    return np.asarray(members, dtype=int)


def kappa(instance: Instance, subset, treatment: int, metric: int) -> float:
    """Heterogeneity weight of (treatment, metric) within the candidate set."""
    members = _validate_subset(instance, subset)
    if treatment not in members:
        raise ValueError(f"treatment {treatment} is not in the subset")
    if not 0 <= metric < instance.num_metrics:
        raise ValueError(f"metric {metric} out of range")
    rho2 = _treatment_relvars(instance)
    idx = members - 1
    rho_sigma, lambda_sigma = _set_scales(rho2, idx)
    row = rho2[treatment - 1]
    mr = float(row.max())
    p = float(row[metric]) / mr if mr > 0 else 1.0
    lam2 = 1.0 - float(row[metric])
    return (p * rho_sigma + lam2 / lambda_sigma) / (rho_sigma + lambda_sigma)


def _gap_grid(instance: Instance) -> tuple[np.ndarray, int, np.ndarray]:
    """Clipped squared z-gaps G[a, i, j] = relu(z[star,i] - z[a,j])^2."""
    star = best_treatment(instance)
    z = z_profile(instance).z
    g = np.maximum(z[star - 1][None, :, None] - z[:, None, :], 0.0) ** 2
    return g, star, z


def _delta_min(z: np.ndarray, star: int) -> float:
    minz = z.min(axis=1)
    others = np.delete(minz, star - 1)
    return float(minz[star - 1] - others.max())


def _pair_gap_sq(instance: Instance, subset, treatment: int,
                 correction: float | None) -> float:
    """D(S, a)^2, optionally with the budget-corrected alternative term."""
    members = _validate_subset(instance, subset)
    g, star, z = _gap_grid(instance)
    if treatment == star:
        raise ValueError("the best treatment has no gap against itself")
    if treatment not in members or star not in members:
        raise ValueError(
            f"subset must contain both treatment {treatment} and the best "
            f"treatment {star}"
        )
    k_a = np.array([kappa(instance, members, treatment, j)
                    for j in range(instance.num_metrics)])
    k_star = np.array([kappa(instance, members, star, i)
                       for i in range(instance.num_metrics)])
    grid = g[treatment - 1]  # [i, j]
    base = grid / (k_a[None, :] + k_star[:, None]) ** 2
    if correction is not None:
        diff = k_a[None, :] - k_star[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            alt = grid / diff**2 + _delta_min(z, star) ** 2 - correction
        cell = np.where(diff > 0, np.minimum(base, alt), base)
    else:
        cell = base
    out = float(cell.max(axis=1).min())
    return max(out, 0.0) if correction is not None else out


def effective_gap(instance: Instance, subset, treatment: int) -> float:
    """The gap D(S, a) >= 0 separating one sub-optimal treatment in S."""
    return math.sqrt(_pair_gap_sq(instance, subset, treatment, None))


def effective_gap_tilde(instance: Instance, subset, treatment: int,
                        budget: float) -> float:
    """The budget-corrected gap; never exceeds effective_gap."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    a_count = instance.num_treatments
    correction = 8.0 * a_count * math.log2(a_count) ** 2 / budget
    return math.sqrt(_pair_gap_sq(instance, subset, treatment, correction))


def _best_over_subsets(instance: Instance, correction: float | None):
    """Minimize min_{a in S'_c} gap^2 / (rho_sigma + lambda_sigma)^2 over all
    subsets containing the best treatment.  Returns (value, members, scales).

    Subsets are swept as bitmasks over the sub-optimal treatments, in chunks,
    with the whole per-chunk computation vectorized.
    """
    g, star, z = _gap_grid(instance)
    a_count, m_count = instance.num_treatments, instance.num_metrics
    rho2 = _treatment_relvars(instance)
    lam2 = 1.0 - rho2
    mr = rho2.max(axis=1)
    ml2 = lam2.max(axis=1)
    p = np.where(mr[:, None] > 0, rho2 / np.where(mr[:, None] > 0, mr[:, None], 1.0), 1.0)
    dm2 = _delta_min(z, star) ** 2
    star_idx = star - 1
    others = np.array([a for a in range(a_count) if a != star_idx])
    k = len(others)

    best = math.inf
    best_members: np.ndarray | None = None
    best_scales = (math.nan, math.nan)
    for start in range(0, 2**k, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 2**k))
        c = len(masks)
        member = np.zeros((c, a_count), dtype=bool)
        member[:, others] = (masks[:, None] >> np.arange(k)[None, :]) & 1
        member[:, star_idx] = True
        sizes = member.sum(axis=1)

        rho_sigma = np.sqrt(member @ mr)
        lambda_sigma = np.sqrt(np.where(member, ml2[None, :], -np.inf).max(axis=1))
        denom = rho_sigma + lambda_sigma
        kap = (p[None] * rho_sigma[:, None, None]
               + lam2[None] / lambda_sigma[:, None, None]) / denom[:, None, None]
        k_star = kap[:, star_idx, :]
        ksum = kap[:, :, None, :] + k_star[:, None, :, None]  # [c, a, i, j]
        base = g[None] / ksum**2
        if correction is not None:
            diff = kap[:, :, None, :] - k_star[:, None, :, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                alt = g[None] / diff**2 + dm2 - correction
            cell = np.where(diff > 0, np.minimum(base, alt), base)
        else:
            cell = base
        gap_sq = cell.max(axis=3).min(axis=2)  # [c, a]
        if correction is not None:
            gap_sq = np.maximum(gap_sq, 0.0)

        rank_key = gap_sq.copy()
        rank_key[:, star_idx] = -np.inf  # pinned first; never a drop slot
        rank_key[~member] = np.inf
        values = gap_sq.copy()
        values[:, star_idx] = np.inf
        values[~member] = np.inf
        order = np.argsort(rank_key, axis=1, kind="stable")
        ranked_values = np.take_along_axis(values, order, axis=1)
        suffix_min = np.minimum.accumulate(ranked_values[:, ::-1], axis=1)[:, ::-1]
        drops = np.where(sizes >= 4, sizes // 4, 0)
        numerator = suffix_min[np.arange(c), drops + 1]
        candidate = numerator / denom**2

        j = int(np.argmin(candidate))
        if candidate[j] < best:
            best = float(candidate[j])
            best_members = np.flatnonzero(member[j]) + 1
            best_scales = (float(rho_sigma[j]), float(lambda_sigma[j]))
    return best, best_members, best_scales


def _check_enumerable(instance: Instance, max_enumeration: int) -> None:
    if instance.num_treatments > max_enumeration:
        raise TooLargeError(
            f"{instance.num_treatments} treatments means "
            f"2^{instance.num_treatments - 1} subsets; raise max_enumeration "
            f"(currently {max_enumeration}) or use h3_prime instead"
        )


def h3_prime(instance: Instance) -> float:
    """Closed-form surrogate (sum of max relative variances over the smallest
    squared bottleneck z-gap); looser than h3 but O(A M)."""
    if instance.num_treatments < 2:
        raise ValueError("need at least two treatments for a gap")
    rho2 = _treatment_relvars(instance)
    z = z_profile(instance).z
    star = best_treatment(instance)
    dm = _delta_min(z, star)
    total = float(rho2.max(axis=1).sum() + (1.0 - rho2).max())
    if dm == 0.0:
        return math.inf
    return total / dm**2


def h3(instance: Instance, max_enumeration: int = DEFAULT_MAX_ENUMERATION,
       budget: float | None = None) -> ComplexityReport:
    """Exhaustive subset-minimum complexity; the corrected variant is filled
    in when a budget is supplied."""
    if instance.num_treatments < 2:
        raise ValueError("need at least two treatments for a gap")
    _check_enumerable(instance, max_enumeration)
    value, members, scales = _best_over_subsets(instance, None)
    z = z_profile(instance).z
    star = best_treatment(instance)
    tilde = None
    if budget is not None:
        tilde = h3_tilde(instance, budget, max_enumeration)
    return ComplexityReport(
        h3=1.0 / value if value > 0 else math.inf,
        h3_prime=h3_prime(instance),
        delta_min=_delta_min(z, star),
        argmin_subset=tuple(int(a) for a in members),
        rho_sigma=scales[0],
        lambda_sigma=scales[1],
        num_treatments=instance.num_treatments,
        num_metrics=instance.num_metrics,
        h3_tilde=tilde,
    )


def h3_tilde(instance: Instance, budget: float,
             max_enumeration: int = DEFAULT_MAX_ENUMERATION) -> float:
    """Subset-minimum complexity with the budget-corrected gap; >= h3, and
    equal once the budget clears 8 A log2(A)^2 / delta_min^2."""
    if instance.num_treatments < 2:
        raise ValueError("need at least two treatments for a gap")
    if budget <= 0:
        raise ValueError("budget must be positive")
    _check_enumerable(instance, max_enumeration)
    a_count = instance.num_treatments
    correction = 8.0 * a_count * math.log2(a_count) ** 2 / budget
    value, _, _ = _best_over_subsets(instance, correction)
    return 1.0 / value if value > 0 else math.inf


def error_bound(budget: float, num_treatments: int, num_metrics: int,
                h: float, variant: str = "theorem1") -> ErrorBound:
    """6 M log2(A) exp(-T / (c h log2 A)); c = 2 (theorem1) or 8 (theorem2).

    The value is returned unclamped; vacuous flags bounds >= 1.
    """
    constants = {"theorem1": 2.0, "theorem2": 8.0}
    if variant not in constants:
        raise ValueError(f"variant must be one of {sorted(constants)}")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if num_treatments < 1 or num_metrics < 1:
        raise ValueError("need at least one treatment and one metric")
    if not h > 0:
        raise ValueError("complexity h must be positive")
    log2a = math.log2(num_treatments)
    if log2a == 0.0:
        return ErrorBound(0.0, False)
    value = 6.0 * num_metrics * log2a * math.exp(
        -budget / (constants[variant] * h * log2a)
    )
    return ErrorBound(value, value >= 1.0)
