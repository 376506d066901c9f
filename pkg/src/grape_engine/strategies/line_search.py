"""
Strong-Wolfe Line Search

Bracketing and zoom search with Hermite cubic interpolation. When a box
is given the search runs along the projected path x(α) = clip(x + α·p),
and the slope is the derivative along that path (components held at a
bound contribute nothing).
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import structlog

from grape_engine.errors import LineSearchWarning

log = structlog.get_logger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

# Interpolated trial points closer than this fraction of the bracket to
# either end are replaced by bisection.
SAFEGUARD = 0.1
EXPANSION = 2.0


@dataclass(frozen=True)
class LinePoint:
    alpha: float
    x: np.ndarray
    f: float
    grad: np.ndarray
    slope: float


@dataclass(frozen=True)
class LineSearchResult:
    """
    Outcome of one line search.

    Attributes:
        alpha: Accepted step length (0 when no decrease was found)
        x: Accepted point
        f: Objective at x
        grad: Gradient at x
        n_evals: Objective evaluations spent
        converged: Strong Wolfe conditions met
    """

    alpha: float
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_evals: int
    converged: bool


def cubic_minimizer(
    a: float, fa: float, da: float, b: float, fb: float, db: float
) -> Optional[float]:
    """
    Minimizer of the cubic matching values and slopes at a and b.

    Returns:
        The minimizer, or None when the cubic has no real minimum
    """
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    radicand = d1 * d1 - da * db
    if radicand < 0:
        return None
    d2 = math.copysign(math.sqrt(radicand), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if math.isfinite(x) else None


class StrongWolfeSearch:
    """
    Strong-Wolfe line search on a possibly boxed domain.

    Args:
        c1: Sufficient-decrease parameter
        c2: Curvature parameter
        max_evals: Objective evaluation budget
        lower: Lower bounds (same length as x) or None
        upper: Upper bounds (same length as x) or None
    """

    def __init__(
        self,
        c1: float = 1e-4,
        c2: float = 0.9,
        max_evals: int = 20,
        lower: Optional[np.ndarray] = None,
        upper: Optional[np.ndarray] = None,
    ):
        if not 0.0 < c1 < c2 < 1.0:
            raise ValueError(f"Require 0 < c1 < c2 < 1, got c1={c1}, c2={c2}")
        if max_evals < 1:
            raise ValueError(f"max_evals must be >= 1, got {max_evals}")
        self.c1 = c1
        self.c2 = c2
        self.max_evals = max_evals
        self.lower = lower
        self.upper = upper

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.lower is None and self.upper is None:
            return x
        return np.clip(x, self.lower, self.upper)

    def path_direction(self, x: np.ndarray, p: np.ndarray, alpha: float) -> np.ndarray:
        """Right derivative of clip(x + α·p) with respect to α."""
        if self.lower is None and self.upper is None:
            return p
        raw = x + alpha * p
        pinned = np.zeros(p.shape, dtype=bool)
        if self.upper is not None:
            pinned |= (raw >= self.upper) & (p > 0)
        if self.lower is not None:
            pinned |= (raw <= self.lower) & (p < 0)
        return np.where(pinned, 0.0, p)

    def search(
        self,
        objective: Objective,
        x0: np.ndarray,
        f0: float,
        g0: np.ndarray,
        p: np.ndarray,
        alpha0: float,
    ) -> LineSearchResult:
        """
        Find α satisfying the strong Wolfe conditions along p.

        Args:
            objective: Returns (f, ∇f) at a point
            x0: Start point (feasible)
            f0: Objective at x0
            g0: Gradient at x0
            p: Descent direction
            alpha0: First trial step

        Returns:
            LineSearchResult; when the budget runs out the best point seen
            is returned with converged=False and a LineSearchWarning
        """
        slope0 = float(g0 @ self.path_direction(x0, p, 0.0))
        if not slope0 < 0:
            raise ValueError(f"Search direction is not a descent direction (slope {slope0:.3e})")
        if not alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {alpha0}")

        evals = 0
        origin = LinePoint(0.0, x0, f0, g0, slope0)
        best = origin

        def evaluate(alpha: float) -> LinePoint:
            nonlocal evals, best
            x = self.project(x0 + alpha * p)
            f, g = objective(x)
            evals += 1
            point = LinePoint(alpha, x, f, g, float(g @ self.path_direction(x0, p, alpha)))
            if point.f < best.f:
                best = point
            return point

        def sufficient(point: LinePoint) -> bool:
            return point.f <= f0 + self.c1 * point.alpha * slope0

        def flat(point: LinePoint) -> bool:
            return abs(point.slope) <= -self.c2 * slope0

        def accept(point: LinePoint) -> LineSearchResult:
            return LineSearchResult(point.alpha, point.x, point.f, point.grad, evals, True)

        def zoom(lo: LinePoint, hi: LinePoint) -> Optional[LineSearchResult]:
            while evals < self.max_evals:
                left, right = sorted((lo.alpha, hi.alpha))
                width = right - left
                trial = cubic_minimizer(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope)
                if (
                    trial is None
                    or trial < left + SAFEGUARD * width
                    or trial > right - SAFEGUARD * width
                ):
                    trial = 0.5 * (left + right)
                point = evaluate(trial)
                if not sufficient(point) or point.f >= lo.f:
                    hi = point
                    continue
                if flat(point):
                    return accept(point)
                if point.slope * (hi.alpha - lo.alpha) >= 0:
                    hi = lo
                lo = point
            return None

        prev = origin
        alpha = alpha0
        result: Optional[LineSearchResult] = None
        while evals < self.max_evals:
            point = evaluate(alpha)
            if not sufficient(point) or (prev is not origin and point.f >= prev.f):
                result = zoom(prev, point)
                break
            if flat(point):
                result = accept(point)
                break
            if point.slope >= 0:
                result = zoom(point, prev)
                break
            prev = point
            alpha *= EXPANSION

        if result is not None:
            return result

        warnings.warn(
            f"Line search used {evals} evaluations without a strong-Wolfe point",
            LineSearchWarning,
            stacklevel=2,
        )
        log.warning("line_search.budget_exhausted", evals=evals, best_alpha=best.alpha)
        return LineSearchResult(best.alpha, best.x, best.f, best.grad, evals, False)
