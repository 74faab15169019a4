"""One-dimensional minimisers for the clipping fraction alpha.

golden_section is the production method.  bisection and nelder_mead_1d
are kept as comparison baselines; their bodies are toolkit definitions
(central-difference bisection, textbook 1-D Nelder-Mead).  grid_oracle is
the brute-force reference used to check the others.

The search interval is [alpha_min, 1]: alpha = 0 would give a zero scale.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensors import InvalidInputError

METHODS = ("golden", "bisection", "nelder-mead", "grid")

Objective = Callable[[float], float]


class SearchAbortedError(RuntimeError):
    """The objective returned a non-finite value."""

    def __init__(self, alpha: float, value: float):
        super().__init__(f"objective returned {value!r} at alpha={alpha!r}")
        self.alpha = alpha
        self.value = value


@dataclass(frozen=True)
class SearchSettings:
    epsilon: float = 1e-4
    phi: float = 0.618
    alpha_min: float = 1e-3
    method: str = "golden"
    grid_points: int = 100_001
    max_evals: int = 200  # Nelder-Mead budget

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidInputError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.phi < 1.0:
            raise InvalidInputError(f"phi must lie in (0, 1), got {self.phi}")
        if not 0.0 < self.alpha_min < 1.0:
            raise InvalidInputError(f"alpha_min must lie in (0, 1), got {self.alpha_min}")
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown search method {self.method!r}; expected one of {METHODS}")
        if self.grid_points < 2:
            raise InvalidInputError("grid_points must be >= 2")
        if self.max_evals < 2:
            raise InvalidInputError("max_evals must be >= 2")


@dataclass(frozen=True)
class SearchResult:
    alpha: float
    loss: float
    evals: int
    wall_time_ms: float
    method: str
    probes: tuple = ()  # (alpha, loss) in evaluation order
    brackets: tuple = ()  # golden only: (left, right, width) before each iteration and at exit


class _Probe:
    """Counts and records objective calls, rejecting non-finite values."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.history = []

    def __call__(self, alpha: float) -> float:
        value = float(self.objective(alpha))
        if not math.isfinite(value):
            raise SearchAbortedError(alpha, value)
        self.history.append((alpha, value))
        return value

    @property
    def evals(self) -> int:
        return len(self.history)


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1e3


def golden_section(objective: Objective, settings: SearchSettings = SearchSettings()) -> SearchResult:
    """Golden-section search over [alpha_min, 1].

    The bracket is carried as (left end, width) and shrinks by exactly phi
    per iteration; one probe is reused each step, so the evaluation count
    is iterations + 2.  On f1 == f2 the left end moves.  Returns x1 if
    f1 <= f2, else x2.
    """
    start = time.perf_counter()
    f = _Probe(objective)
    phi, eps = settings.phi, settings.epsilon
    c, width = settings.alpha_min, 1.0 - settings.alpha_min

    x1, x2 = c + width - phi * width, c + phi * width
    f1, f2 = f(x1), f(x2)
    brackets = [(c, c + width, width)]
    while width > eps:
        if f1 < f2:
            width *= phi  # d <- x2
            x2, f2 = x1, f1
            x1 = c + width - phi * width
            f1 = f(x1)
        else:
            c = c + width - phi * width  # c <- x1
            width *= phi
            x1, f1 = x2, f2
            x2 = c + phi * width
            f2 = f(x2)
        brackets.append((c, c + width, width))

    alpha, loss = (x1, f1) if f1 <= f2 else (x2, f2)
    return SearchResult(alpha, loss, f.evals, _elapsed_ms(start), "golden", tuple(f.history), tuple(brackets))


def bisection(objective: Objective, settings: SearchSettings = SearchSettings()) -> SearchResult:
    """Bisect on the sign of a central difference with step epsilon / 4.

    Each halving costs two evaluations; the final midpoint costs one more.
    A zero difference is treated like a positive one (move left).
    """
    start = time.perf_counter()
    f = _Probe(objective)
    h = settings.epsilon / 4
    lo, hi = settings.alpha_min, 1.0
    while hi - lo > settings.epsilon:
        mid = 0.5 * (lo + hi)
        if f(mid + h) - f(mid - h) < 0:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    loss = f(alpha)
    return SearchResult(alpha, loss, f.evals, _elapsed_ms(start), "bisection", tuple(f.history))


REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


def nelder_mead_1d(objective: Objective, settings: SearchSettings = SearchSettings()) -> SearchResult:
    """Two-vertex Nelder-Mead started from {0.5, 0.95}.

    Trial points are clamped into [alpha_min, 1]; a reflection clamped onto
    the best vertex is followed by an inside contraction so the simplex does
    not collapse onto the bound.  Stops when the simplex is no wider than
    epsilon or the evaluation budget is spent; a result with
    evals == max_evals means the budget ran out.
    """
    start = time.perf_counter()
    f = _Probe(objective)
    lo, budget = settings.alpha_min, settings.max_evals

    def clamp(x):
        return min(max(x, lo), 1.0)

    simplex = [[0.5, f(0.5)], [0.95, f(0.95)]]
    while abs(simplex[1][0] - simplex[0][0]) > settings.epsilon and f.evals < budget:
        simplex.sort(key=lambda v: v[1])
        (best, f_best), (worst, f_worst) = simplex

        xr = clamp(best + REFLECT * (best - worst))
        fr = f(xr)
        if fr < f_best:
            if f.evals >= budget:
                simplex[1] = [xr, fr]
                break
            xe = clamp(best + EXPAND * (xr - best))
            fe = f(xe)
            simplex[1] = [xe, fe] if fe < fr else [xr, fr]
            continue
        if f.evals >= budget:
            break
        if fr < f_worst and xr != best:
            xc = clamp(best + CONTRACT * (xr - best))
            fc = f(xc)
            if fc <= fr:
                simplex[1] = [xc, fc]
                continue
        else:
            xc = clamp(best + CONTRACT * (worst - best))
            fc = f(xc)
            if fc < f_worst:
                simplex[1] = [xc, fc]
                continue
        if f.evals >= budget:
            break
        xs = best + SHRINK * (worst - best)
        simplex[1] = [xs, f(xs)]

    alpha, loss = min(simplex, key=lambda v: v[1])
    return SearchResult(alpha, loss, f.evals, _elapsed_ms(start), "nelder-mead", tuple(f.history))


def grid_oracle(objective: Objective, settings: SearchSettings = SearchSettings(), points: int | None = None) -> SearchResult:
    """Exact arg-min over `points` evenly spaced alphas in [alpha_min, 1].

    Ties go to the larger alpha.  If the objective has a vectorised
    ``many(alphas)`` method it is used for the sweep; the reported loss is
    always a direct call at the chosen alpha.
    """
    points = settings.grid_points if points is None else int(points)
    if points < 2:
        raise InvalidInputError("grid_oracle needs at least 2 points")
    start = time.perf_counter()
    alphas = np.linspace(settings.alpha_min, 1.0, points)
    many = getattr(objective, "many", None)
    if many is not None:
        values = np.asarray(many(alphas), dtype=np.float64)
    else:
        values = np.array([float(objective(a)) for a in alphas])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise SearchAbortedError(float(alphas[bad[0]]), float(values[bad[0]]))
    idx = points - 1 - int(np.argmin(values[::-1]))
    alpha = float(alphas[idx])
    loss = float(objective(alpha))
    if not math.isfinite(loss):
        raise SearchAbortedError(alpha, loss)
    return SearchResult(alpha, loss, points, _elapsed_ms(start), "grid")


def search(objective: Objective, settings: SearchSettings = SearchSettings()) -> SearchResult:
    """Dispatch on settings.method."""
    if settings.method == "golden":
        return golden_section(objective, settings)
    if settings.method == "bisection":
        return bisection(objective, settings)
    if settings.method == "nelder-mead":
        return nelder_mead_1d(objective, settings)
    return grid_oracle(objective, settings)
