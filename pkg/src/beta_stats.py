"""Beta model: method-of-moments fitting, incomplete beta function and quantiles."""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .constants import DUMMY_OBSERVATIONS, MIN_FIT_SAMPLES, QUANTILE_TOLERANCE
from .errors import DomainError, EstimationInfeasibleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BetaParams:
    """Method-of-moments estimate of a Beta(delta, xi) model.

    Attributes:
        delta: First shape parameter, ``mean * nu``.
        xi: Second shape parameter, ``(1 - mean) * nu``.
        mean: Sample mean.
        variance: Unbiased sample variance (divisor n - 1).
        nu: ``mean * (1 - mean) / variance - 1``.
        sample_size: Number of values fitted, dummies included.
        dummy_augmented: Whether the two dummy observations were appended.
    """

    delta: float
    xi: float
    mean: float
    variance: float
    nu: float
    sample_size: int
    dummy_augmented: bool = False

    def cdf(self, x: float) -> float:
        return reg_inc_beta(x, self.delta, self.xi)

    def quantile(self, level: float) -> float:
        return beta_quantile(level, self.delta, self.xi)


def _sample_moments(values: List[float]) -> Tuple[float, float]:
    """Two-pass mean and unbiased variance."""
    n = len(values)
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, variance


def _moments_admissible(mean: float, variance: float) -> bool:
    return 0.0 < variance < mean * (1.0 - mean)


def fit_beta_mom(values: Iterable[float]) -> BetaParams:
    """Fit a Beta distribution by the method of moments.

    If the moments do not satisfy ``0 < variance < mean * (1 - mean)`` the
    values 0.4 and 0.6 are appended once and the fit is repeated.

    Args:
        values: Observations in [0, 1].

    Returns:
        The fitted parameters with their intermediate moments.

    Raises:
        EstimationInfeasibleError: Fewer than two values, or the moments are
            still inadmissible after augmentation.
    """
    data = [float(v) for v in values]
    if len(data) < MIN_FIT_SAMPLES:
        raise EstimationInfeasibleError(
            f"method of moments needs at least {MIN_FIT_SAMPLES} values, got {len(data)}"
        )

    augmented = False
    mean, variance = _sample_moments(data)
    if not _moments_admissible(mean, variance):
        data.extend(DUMMY_OBSERVATIONS)
        augmented = True
        mean, variance = _sample_moments(data)
        logger.warning("Moments inadmissible, refitted with dummy observations (n=%d)", len(data))
        if not _moments_admissible(mean, variance):
            raise EstimationInfeasibleError(
                f"moments mean={mean!r}, variance={variance!r} inadmissible after dummy augmentation"
            )

    nu = mean * (1.0 - mean) / variance - 1.0
    return BetaParams(
        delta=mean * nu,
        xi=(1.0 - mean) * nu,
        mean=mean,
        variance=variance,
        nu=nu,
        sample_size=len(data),
        dummy_augmented=augmented,
    )


def _check_shapes(delta: float, xi: float) -> None:
    if not (delta > 0 and xi > 0) or not (math.isfinite(delta) and math.isfinite(xi)):
        raise DomainError(f"shape parameters must be positive and finite, got delta={delta}, xi={xi}")


def reg_inc_beta(x: float, delta: float, xi: float) -> float:
    """Regularized incomplete beta function I_x(delta, xi).

    Args:
        x: Evaluation point in [0, 1].
        delta: First shape parameter, > 0.
        xi: Second shape parameter, > 0.

    Returns:
        The Beta(delta, xi) CDF at ``x``; exactly 0 at 0 and 1 at 1.
    """
    _check_shapes(delta, xi)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    return float(special.betainc(delta, xi, x))


def beta_quantile(beta_level: float, delta: float, xi: float) -> float:
    """Quantile z with I_z(delta, xi) = beta_level.

    Uses the closed inverse from scipy and falls back to bracketed root
    finding on [0, 1] when the residual exceeds the tolerance.

    Args:
        beta_level: Probability strictly between 0 and 1.
        delta: First shape parameter, > 0.
        xi: Second shape parameter, > 0.

    Returns:
        The quantile, strictly inside (0, 1).
    """
    _check_shapes(delta, xi)
    if not 0.0 < beta_level < 1.0:
        raise DomainError(f"beta_level must lie strictly between 0 and 1, got {beta_level}")

    z = float(special.betaincinv(delta, xi, beta_level))
    if not (0.0 < z < 1.0) or abs(special.betainc(delta, xi, z) - beta_level) > QUANTILE_TOLERANCE:
        logger.debug("Polishing quantile %s of Beta(%s, %s) by root finding", beta_level, delta, xi)
        z = brentq(
            lambda u: special.betainc(delta, xi, u) - beta_level,
            0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000,
        )
    return float(min(max(z, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0)))


def control_limits(params: BetaParams, alpha: float) -> Tuple[float, float]:
    """Chart limits cutting alpha/2 probability from each tail.

    Args:
        params: Fitted Beta model.
        alpha: Significance level strictly between 0 and 1.

    Returns:
        ``(z_{alpha/2}, z_{1 - alpha/2})``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    return (
        beta_quantile(alpha / 2.0, params.delta, params.xi),
        beta_quantile(1.0 - alpha / 2.0, params.delta, params.xi),
    )


def is_extreme(x: float, params: BetaParams, alpha: float) -> bool:
    """Whether ``x`` falls strictly outside the chart limits.

    A value exactly on a limit is not extreme.
    """
    lower, upper = control_limits(params, alpha)
    return outside_limits(x, lower, upper)


def outside_limits(x: float, lower: float, upper: float) -> bool:
    """Whether ``x`` lies strictly below ``lower`` or strictly above ``upper``."""
    return x < lower or x > upper
