"""Zeroth-order gradient estimators from one, two or M loss queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import BoxSet, SamplingScheme, sample_ball, sample_direction


class QueryBudgetExceeded(RuntimeError):
    pass


class InfeasibleQuery(RuntimeError):
    """A perturbed query point fell outside the feasible box."""


class LossOracle:
    """Value-only access to a time-varying loss ``f_t``.

    The wrapped callable is never handed out; learners see ``value`` and
    nothing else. ``max_queries`` caps the number of evaluations per slot.
    """

    def __init__(
        self,
        fn: Callable[[int, np.ndarray], float],
        max_queries: Optional[int] = None,
        F: Optional[float] = None,
        G: Optional[float] = None,
    ):
        self._fn = fn
        self.max_queries = max_queries
        self.F = F
        self.G = G
        self._slot: Optional[int] = None
        self.query_count = 0
        self.total_queries = 0

    def value(self, t: int, x: np.ndarray) -> float:
        if t != self._slot:
            self._slot = t
            self.query_count = 0
        if self.max_queries is not None and self.query_count >= self.max_queries:
            raise QueryBudgetExceeded(f"slot {t}: more than {self.max_queries} loss queries")
        self.query_count += 1
        self.total_queries += 1
        return float(self._fn(t, x))


@dataclass
class GradientEstimate:
    g: np.ndarray
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    scheme_tag: str = ""


def _check_inside(box: Optional[BoxSet], pts, tol: float = 1e-9):
    if box is None:
        return
    for p in pts:
        if not box.contains(p, tol):
            raise InfeasibleQuery(f"query point leaves the feasible set: {p}")


def _query(x_hat, step, box: Optional[BoxSet]):
    """``x_hat + step``, snapped onto ``box`` when rounding pushed it a hair outside."""
    p = x_hat + step
    if box is not None:
        _check_inside(box, [p])
        np.clip(p, box.lower, box.upper, out=p)
    return p


def one_point_grad(oracle: LossOracle, t: int, x_hat, delta: float, u, box: Optional[BoxSet] = None):
    """``(d / delta) f_t(x_hat + delta u) u``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    x1 = _query(x_hat, delta * u, box)
    f1 = oracle.value(t, x1)
    return GradientEstimate((d / delta) * f1 * u, [x1], [f1], "one_point")


def two_point_grad(oracle: LossOracle, t: int, x_hat, delta: float, u, box: Optional[BoxSet] = None):
    """Symmetric difference ``(d / 2 delta)(f(x + delta u) - f(x - delta u)) u``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    x1, x2 = _query(x_hat, delta * u, box), _query(x_hat, -delta * u, box)
    f1 = oracle.value(t, x1)
    f2 = oracle.value(t, x2)
    return GradientEstimate((d / (2.0 * delta)) * (f1 - f2) * u, [x1, x2], [f1, f2], "two_point")


def m_point_grad(
    oracle: LossOracle,
    t: int,
    x_hat,
    delta: float,
    M: int,
    rng: np.random.Generator,
    scheme: SamplingScheme | str = SamplingScheme.UNIFORM_SPHERE,
    box: Optional[BoxSet] = None,
):
    """Average of ``M - 1`` forward differences around ``x_hat``.

    ``x_hat`` itself is one of the ``M`` played actions (listed last).
    """
    if M < 3:
        raise ValueError("m_point_grad needs M >= 3; use one_point_grad/two_point_grad")
    if delta <= 0:
        raise ValueError("delta must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    dirs = [sample_direction(scheme, d, rng) for _ in range(M - 1)]
    pts = [_query(x_hat, delta * u, box) for u in dirs]
    _check_inside(box, [x_hat])
    vals = [oracle.value(t, p) for p in pts]
    f0 = oracle.value(t, x_hat)
    g = np.zeros(d)
    for fv, u in zip(vals, dirs):
        g += (fv - f0) * u
    g *= d / (delta * (M - 1))
    return GradientEstimate(g, pts + [x_hat.copy()], vals + [f0], f"{M}_point")


def smoothed_value(oracle: LossOracle, t: int, x, delta: float, n_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of ``E_v[f_t(x + delta v)]`` with ``v`` uniform in the unit ball."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    total = 0.0
    for _ in range(n_samples):
        total += oracle.value(t, x + delta * sample_ball(d, rng))
    return total / n_samples


# Batched forms for Monte-Carlo studies. ``fn(t, X)`` evaluates the loss on
# every row of ``X`` and returns a vector; row ``i`` of the result equals the
# single-draw estimator with direction ``U[i]``.


def one_point_grads(fn: Callable, t: int, x_hat, delta: float, U: np.ndarray) -> np.ndarray:
    if delta <= 0:
        raise ValueError("delta must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    f1 = np.asarray(fn(t, x_hat + delta * U), dtype=float)
    return (d / delta) * f1[:, None] * U


def two_point_grads(fn: Callable, t: int, x_hat, delta: float, U: np.ndarray) -> np.ndarray:
    if delta <= 0:
        raise ValueError("delta must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    diff = np.asarray(fn(t, x_hat + delta * U), dtype=float) - np.asarray(fn(t, x_hat - delta * U), dtype=float)
    return (d / (2.0 * delta)) * diff[:, None] * U
