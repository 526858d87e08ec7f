"""Simulation of the validation A/B test.

The recommended treatment and the control are each pulled t_v/2 times (the
treatment side is drawn first, then the control side — fixed order so a seeded
run is reproducible).  Per metric, one-sided "treatment beats control" tests:

* non-Bayesian: pass iff  mean_diff >= Phi^-1(1-delta_i) * sqrt(2(sigma_a^2 +
  sigma_0^2) / t_v)  — the level-delta_i z-test;
* Bayesian: with prior N(0, tau_i^2) on the effect, the posterior is normal
  with  sigma_hat^2 = (t_v/(2(sigma_a^2+sigma_0^2)) + 1/tau_i^2)^-1  and mean
  delta_hat = t_v * sigma_hat^2 / (2(sigma_a^2+sigma_0^2)) * mean_diff; pass
  iff the posterior probability of a positive effect p_i = Phi(delta_hat /
  sigma_hat) reaches q_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from m3ab.core import BAYESIAN, Instance, norm_cdf, norm_ppf


@dataclass(frozen=True)
class ValidationOutcome:
    """One validation run; posterior and p are None for non-Bayesian tests."""

    per_metric_pass: np.ndarray
    ate_estimates: np.ndarray
    posterior: list[tuple[float, float]] | None = None
    p: np.ndarray | None = None

    @property
    def pass_all(self) -> bool:
        return bool(np.all(self.per_metric_pass))


def posterior(sample_mean_diff: float, sigma_a: float, sigma_0: float,
              tau: float, t_v: int) -> tuple[float, float]:
    """Posterior (mean, variance) of the treatment effect for one metric."""
    var_sum = sigma_a**2 + sigma_0**2
    sigma_hat_sq = 1.0 / (t_v / (2.0 * var_sum) + 1.0 / tau**2)
    delta_hat = t_v * sigma_hat_sq / (2.0 * var_sum) * sample_mean_diff
    return delta_hat, sigma_hat_sq


def run_validation(instance: Instance, treatment: int,
                   rng: np.random.Generator,
                   reward_source: str = "pulls") -> ValidationOutcome:
    """Draw both sides of the A/B test and apply the per-metric decisions.

    reward_source "pulls" draws every individual reward; "means" draws each
    side's sample mean from its exact law N(mu, sigma^2 / (t_v/2)) — the two
    produce identically distributed outcomes, and "means" keeps large
    validation horizons cheap.  Treatment side first, then control.
    """
    if not 1 <= treatment <= instance.num_treatments:
        raise ValueError(f"treatment {treatment} out of range")
    if reward_source not in ("pulls", "means"):
        raise ValueError(
            f"unknown reward source {reward_source!r}; expected 'pulls' or 'means'"
        )
    cfg = instance.validation
    half = cfg.horizon // 2
    m = instance.num_metrics
    if reward_source == "means":
        mean_t = rng.normal(instance.means[treatment],
                            instance.stddevs[treatment] / np.sqrt(half))
        mean_c = rng.normal(instance.means[0], instance.stddevs[0] / np.sqrt(half))
        ate = mean_t - mean_c
    else:
        draws_t = rng.normal(instance.means[treatment], instance.stddevs[treatment],
                             size=(half, m))
        draws_c = rng.normal(instance.means[0], instance.stddevs[0], size=(half, m))
        ate = draws_t.mean(axis=0) - draws_c.mean(axis=0)
    var_sum = instance.variance_sums()[treatment - 1]

    if cfg.variant == BAYESIAN:
        sigma_hat_sq = 1.0 / (cfg.horizon / (2.0 * var_sum) + 1.0 / cfg.tau**2)
        delta_hat = cfg.horizon * sigma_hat_sq / (2.0 * var_sum) * ate
        ratio = delta_hat / np.sqrt(sigma_hat_sq)
        return ValidationOutcome(
            per_metric_pass=ratio >= norm_ppf(cfg.q),
            ate_estimates=ate,
            posterior=list(zip(delta_hat.tolist(), sigma_hat_sq.tolist())),
            p=norm_cdf(ratio),
        )
    thresholds = norm_ppf(1.0 - cfg.delta) * np.sqrt(2.0 * var_sum / cfg.horizon)
    return ValidationOutcome(per_metric_pass=ate >= thresholds, ate_estimates=ate)
