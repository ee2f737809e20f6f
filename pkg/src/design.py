"""Design optimization: utilities U1/U2, the optimal set A* and the closed-form alpha*."""

import logging
from dataclasses import dataclass
from typing import List, Union

import numpy as np
import pandas as pd

from .constants import DEFAULT_GRID_START_POINTS, DEFAULT_GRID_ALPHA_POINTS
from .core import PathLike
from .errors import DesignError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignPoint:
    """A design (S, alpha) annotated with both utilities.

    ``start_point`` is real-valued on the contour grid and an integer on the
    optimal set.
    """

    start_point: Union[int, float]
    alpha: float
    u1: float
    u2: float
    optimal: bool = False


def optimal_alpha(n_effective: float, start_point: int, target: int) -> float:
    """Optimal significance level for a given (effective) study length.

    Args:
        n_effective: Expected number of samples, N or an estimate of N'.
        start_point: Triggering starting point S*.
        target: Desired number of triggers v.

    Returns:
        0 if the window ``n_effective - start_point + 1`` is non-positive,
        1 if the window is at most ``target``, otherwise ``target / window``.
    """
    if target < 1:
        raise DesignError(f"target must be at least 1, got {target}")
    window = n_effective - start_point + 1
    if window <= 0:
        return 0.0
    if window <= target:
        return 1.0
    return target / window


def expected_trigger_utility(start_point: float, alpha: float, n_total: float, target: int) -> float:
    """U1(S, alpha) = -(E(V) - v)^2 with E(V) = (N - S + 1) * alpha."""
    _check_alpha(alpha)
    return -(((n_total - start_point + 1) * alpha - target) ** 2)


def variance_utility(start_point: float, alpha: float, n_total: float) -> float:
    """U2(S, alpha) = -Var(V) = -(N - S + 1) * alpha * (1 - alpha)."""
    _check_alpha(alpha)
    return -((n_total - start_point + 1) * alpha * (1.0 - alpha))


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise DesignError(f"alpha must lie in [0, 1], got {alpha}")


def optimal_set(n_total: int, target: int) -> List[DesignPoint]:
    """The optimal set A*: one design per starting point S = 2..N.

    Args:
        n_total: Study length N.
        target: Desired number of triggers v.

    Returns:
        Points ``(S, optimal_alpha(N, S, v))`` with U1 and U2 attached.
    """
    if target < 1:
        raise DesignError(f"target must be at least 1, got {target}")
    points = []
    for start in range(2, n_total + 1):
        alpha = optimal_alpha(n_total, start, target)
        points.append(DesignPoint(
            start_point=start,
            alpha=alpha,
            u1=expected_trigger_utility(start, alpha, n_total, target),
            u2=variance_utility(start, alpha, n_total),
            optimal=True,
        ))
    return points


def variance_optimum(n_total: int, target: int) -> DesignPoint:
    """Maximize U2 over A*; ties go to the smallest starting point."""
    points = optimal_set(n_total, target)
    if not points:
        raise DesignError(f"optimal set is empty for N={n_total}")
    best = max(p.u2 for p in points)
    return next(p for p in points if p.u2 == best)


def design_grid(
    n_total: int,
    target: int,
    start_points: int = DEFAULT_GRID_START_POINTS,
    alpha_points: int = DEFAULT_GRID_ALPHA_POINTS,
) -> List[DesignPoint]:
    """Contour grid of the continuous extension of U2 plus the optimal set.

    The grid spans [1, N] x [0, 1] uniformly; optimal-set rows follow with
    ``optimal=True``.

    Args:
        n_total: Study length N.
        target: Desired number of triggers v.
        start_points: Grid resolution along S.
        alpha_points: Grid resolution along alpha.

    Returns:
        Grid points followed by the optimal set.
    """
    if start_points < 2 or alpha_points < 2:
        raise DesignError("design grid needs at least 2 points per axis")
    s_axis = np.linspace(1.0, float(n_total), start_points)
    a_axis = np.linspace(0.0, 1.0, alpha_points)
    s_grid, a_grid = np.meshgrid(s_axis, a_axis, indexing="ij")
    window = n_total - s_grid + 1.0
    u1 = -((window * a_grid - target) ** 2)
    u2 = -(window * a_grid * (1.0 - a_grid))

    grid = [
        DesignPoint(float(s), float(a), float(g1), float(g2))
        for s, a, g1, g2 in zip(s_grid.ravel(), a_grid.ravel(), u1.ravel(), u2.ravel())
    ]
    return grid + optimal_set(n_total, target)


def write_design_grid(points: List[DesignPoint], path: PathLike) -> None:
    """Write grid rows as ``S,alpha,u1,u2,optimal`` CSV."""
    frame = pd.DataFrame(
        [(p.start_point, p.alpha, p.u1, p.u2, p.optimal) for p in points],
        columns=["S", "alpha", "u1", "u2", "optimal"],
    )
    frame.to_csv(path, index=False)
    logger.info("Wrote %d design points to %s", len(frame), path)
