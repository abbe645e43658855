"""Closed-form corrected estimators for two components.

Subsamples: ``11`` (both observed, size J11), ``10`` (first only, J21) and
``01`` (second only, J22). Means are written ``x111, x112`` for the complete
rows and ``x211``, ``x222`` for the incomplete ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EstimationError


class BivariateMeans(NamedTuple):
    x111: float
    x112: float
    x211: float = math.nan
    x222: float = math.nan


@dataclass(frozen=True)
class BivariateConfig:
    """Population covariance entries and subsample sizes.

    ``sigma11``, ``sigma22`` are variances and ``sigma12`` the covariance
    (not their square roots).
    """

    sigma11: float
    sigma22: float
    sigma12: float
    J11: float
    J21: float = 0
    J22: float = 0

    def __post_init__(self):
        if self.J11 < 1:
            raise EstimationError("J11 must be at least 1")
        if self.J21 < 0 or self.J22 < 0:
            raise EstimationError("subsample sizes must be nonnegative")

    @property
    def sigma(self) -> np.ndarray:
        return np.array([[self.sigma11, self.sigma12], [self.sigma12, self.sigma22]])

    def check_pd(self) -> None:
        if not (self.sigma11 > 0 and self.sigma11 * self.sigma22 - self.sigma12**2 > 0):
            raise EstimationError("covariance matrix is not positive definite")


def lambda0(cfg: BivariateConfig) -> np.ndarray:
    """Gain applied to the complete-minus-incomplete mean differences.

    Infinite ``J21``/``J22`` encode incomplete means known exactly.
    """
    if cfg.J21 < 1 or cfg.J22 < 1:
        raise EstimationError("lambda0 needs J21 >= 1 and J22 >= 1")
    cfg.check_pd()
    sigma = cfg.sigma
    bracket = sigma + np.diag(
        [cfg.J11 * cfg.sigma11 / cfg.J21, cfg.J11 * cfg.sigma22 / cfg.J22]
    )
    try:
        return np.linalg.solve(bracket.T, sigma.T).T
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular system") from exc


def mean_vector(means: BivariateMeans, cfg: BivariateConfig):
    """Corrected mean vector using all three subsamples.

    Returns ``(mu_tilde, cov)`` where ``cov = (I - lambda0) sigma / J11``.
    """
    lam = lambda0(cfg)
    base = np.array([means.x111, means.x112])
    resid = np.array([means.x111 - means.x211, means.x112 - means.x222])
    mu = base - lam @ resid
    cov_hat = cfg.sigma / cfg.J11
    cov = cov_hat - lam @ cov_hat
    return mu, 0.5 * (cov + cov.T)


def change_score_gain(cfg: BivariateConfig) -> float:
    if cfg.sigma11 <= 0:
        raise EstimationError("degenerate variance")
    return cfg.J21 / (cfg.J11 + cfg.J21) * (1.0 - cfg.sigma12 / cfg.sigma11)


def change_score(means: BivariateMeans, cfg: BivariateConfig) -> tuple[float, float]:
    """Corrected ``mu1 - mu2`` when only first-component dropouts exist.

    The ``01`` subsample is ignored. Returns ``(delta_tilde, variance)``.
    """
    lam = change_score_gain(cfg)
    delta_hat = means.x111 - means.x112
    if cfg.J21 > 0:
        delta = delta_hat - lam * (means.x111 - means.x211)
    else:
        delta = delta_hat
    s11, s12, s22 = cfg.sigma11, cfg.sigma12, cfg.sigma22
    var = (
        s11
        - 2 * s12
        + s22
        - cfg.J21 / (cfg.J11 + cfg.J21) * (s11 - s12) ** 2 / s11
    ) / cfg.J11
    return float(delta), float(var)


def change_score_cs(
    means: BivariateMeans, sigma: float, rho: float, J11: float, J21: float
) -> tuple[float, float]:
    """Change score under compound symmetry ``sigma^2 [[1, rho], [rho, 1]]``.

    ``sigma`` is the standard deviation.
    """
    if not sigma > 0:
        raise EstimationError("degenerate variance")
    if not -1.0 <= rho <= 1.0:
        raise EstimationError("invalid correlation")
    s2 = sigma * sigma
    return change_score(means, BivariateConfig(s2, s2, rho * s2, J11, J21, 0))


def nonignorable_shift(means: BivariateMeans, cfg: BivariateConfig) -> tuple[float, float]:
    """Shift-invariant change score combining complete and incomplete pairs.

    Both ``x111 - x112`` and ``x211 - x222`` are free of a common additive
    shift in incomplete rows; they are pooled with the minimum-variance
    weight. Returns ``(delta, variance)``.
    """
    if min(cfg.J21, cfg.J22) < 1:
        raise EstimationError("shift adjustment needs J21 >= 1 and J22 >= 1")
    s11, s12, s22 = cfg.sigma11, cfg.sigma12, cfg.sigma22
    J11, J21, J22 = cfg.J11, cfg.J21, cfg.J22
    num = s11 - 2 * s12 + s22
    den = s11 * (1 + J11 / J21) - 2 * s12 + s22 * (1 + J11 / J22)
    if not (num > 0 and den > 0):
        raise EstimationError("degenerate variance")
    delta_hat = means.x111 - means.x112
    delta_inc = means.x211 - means.x222
    delta = delta_hat - num / den * (delta_hat - delta_inc)
    var = num / J11 - num**2 / (J11 * den)
    return float(delta), float(var)


def complete_pair_variance(cfg: BivariateConfig) -> float:
    return (cfg.sigma11 - 2 * cfg.sigma12 + cfg.sigma22) / cfg.J11


def incomplete_pair_variance(cfg: BivariateConfig) -> float:
    """Variance of ``x211 - x222``: component 1 comes from the J21 rows."""
    return cfg.sigma11 / cfg.J21 + cfg.sigma22 / cfg.J22


def subsample_summary(values: np.ndarray):
    """Means and sizes of the three bivariate subsamples of a ``(N, 2)`` array."""
    values = np.asarray(values, dtype=float)
    obs = ~np.isnan(values)
    both = obs[:, 0] & obs[:, 1]
    only1 = obs[:, 0] & ~obs[:, 1]
    only2 = ~obs[:, 0] & obs[:, 1]
    J11, J21, J22 = int(both.sum()), int(only1.sum()), int(only2.sum())

    def _mean(x):
        return float(x.mean()) if x.size else math.nan

    means = BivariateMeans(
        _mean(values[both, 0]),
        _mean(values[both, 1]),
        _mean(values[only1, 0]),
        _mean(values[only2, 1]),
    )
    return means, (J11, J21, J22)
