"""Dynamic/static regret, dynamic fit and minimizer variation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize, nnls

from .geometry import BoxSet, project
from .solver import ConstraintOracle, Trajectory


class InfeasibleProblem(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


@dataclass
class KKTReport:
    primal_violation: float  # max(g(x), 0)
    stationarity: float  # ||x - P_X(x - (grad f + J^T lam))||_inf
    complementarity: float  # max |lam_n g_n|
    multipliers: np.ndarray

    def ok(self, tol: float) -> bool:
        return max(self.primal_violation, self.stationarity, self.complementarity) <= tol


@dataclass
class OptimaSeries:
    x_star: np.ndarray  # (T, d)
    f_star: np.ndarray  # (T,)
    solver_tolerance: float

    def __len__(self):
        return len(self.f_star)


@dataclass
class MetricsSeries:
    cum_regret: Optional[np.ndarray]
    cum_fit_vector: np.ndarray  # (T, N) running sum of M-averaged g
    fit: float
    variation: Optional[float] = None
    static_regret: Optional[float] = None


# ---------------------------------------------------------------------------
# clairvoyant per-slot benchmark


def kkt_report(x, grad_f, g, J, box: BoxSet, act_tol: float = 1e-7, bound_tol: float = 1e-9) -> KKTReport:
    """Certify ``x`` for ``min f s.t. g <= 0, x in box`` with least-squares multipliers."""
    x, grad_f, g, J = (np.asarray(a, dtype=float) for a in (x, grad_f, g, J))
    n_cons = g.shape[0]
    lam = np.zeros(n_cons)
    active = np.flatnonzero(g >= -act_tol * max(1.0, np.max(np.abs(g), initial=0.0)))
    free = (x > box.lower + bound_tol) & (x < box.upper - bound_tol)
    if active.size and np.any(free):
        lam_act, _ = nnls(J[np.ix_(active, free)].T, -grad_f[free])
        lam[active] = lam_act
    r = grad_f + J.T @ lam
    return KKTReport(
        primal_violation=float(max(np.max(g, initial=0.0), 0.0)),
        stationarity=float(np.max(np.abs(x - project(box, x - r)), initial=0.0)),
        complementarity=float(np.max(np.abs(lam * g), initial=0.0)),
        multipliers=lam,
    )


def _feasible_start(value, jac, linear: bool, box: BoxSet, n_cons: int, tol: float) -> np.ndarray:
    """Phase one: minimise the largest constraint value over the box."""
    d = box.dim
    if linear:
        J = np.asarray(jac(box.center), dtype=float)
        offset = np.asarray(value(box.center), dtype=float) - J @ box.center
        # variables (x, s): min s  s.t.  J x - s <= -offset
        c = np.zeros(d + 1)
        c[-1] = 1.0
        A = np.hstack([J, -np.ones((n_cons, 1))])
        bounds = list(zip(box.lower, box.upper)) + [(None, None)]
        res = linprog(c, A_ub=A, b_ub=-offset, bounds=bounds, method="highs")
        if res.status != 0:
            raise NotConverged(f"phase-one LP failed: {res.message}")
        x, s = res.x[:d], res.x[-1]
    else:
        def obj(v):
            return v[-1]

        def obj_grad(v):
            e = np.zeros(d + 1)
            e[-1] = 1.0
            return e

        cons = {
            "type": "ineq",
            "fun": lambda v: v[-1] - np.asarray(value(v[:d])),
            "jac": lambda v: np.hstack([-np.asarray(jac(v[:d])), np.ones((n_cons, 1))]),
        }
        x0 = box.center
        v0 = np.append(x0, np.max(value(x0)) + 1.0)
        bounds = list(zip(box.lower, box.upper)) + [(None, None)]
        res = minimize(obj, v0, jac=obj_grad, bounds=bounds, constraints=[cons], method="SLSQP",
                       options={"ftol": 1e-12, "maxiter": 1000})
        x, s = res.x[:d], res.x[-1]
    if s > tol:
        raise InfeasibleProblem(f"no point of the box satisfies the constraints (best max violation {s:.3g})")
    return project(box, x)


def _solve_convex(fun, grad, value, jac, linear, box: BoxSet, n_cons: int, tol: float, max_iter: int):
    x0 = _feasible_start(value, jac, linear, box, n_cons, tol)
    cons = {"type": "ineq", "fun": lambda x: -np.asarray(value(x)), "jac": lambda x: -np.asarray(jac(x))}
    x = x0
    best = None
    for ftol in (1e-12, 1e-15):
        res = minimize(fun, x, jac=grad, bounds=list(zip(box.lower, box.upper)), constraints=[cons],
                       method="SLSQP", options={"ftol": ftol, "maxiter": max_iter})
        x = project(box, res.x)
        rep = kkt_report(x, grad(x), value(x), jac(x), box)
        scale = max(1.0, float(np.max(np.abs(grad(x)))))
        if best is None or rep.stationarity / scale < best[1].stationarity / best[2]:
            best = (x, rep, scale)
        if rep.primal_violation <= tol and rep.stationarity <= tol * scale and rep.complementarity <= tol * scale:
            return x, rep
    x, rep, scale = best
    raise NotConverged(
        f"KKT residuals after {max_iter} iterations: violation {rep.primal_violation:.3g}, "
        f"stationarity {rep.stationarity:.3g}, complementarity {rep.complementarity:.3g} (tol {tol:g}, scale {scale:.3g})"
    )


def per_slot_optimum(
    loss_full: Callable[[int, np.ndarray], float],
    loss_grad: Callable[[int, np.ndarray], np.ndarray],
    cons: ConstraintOracle,
    box: BoxSet,
    t: int,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> np.ndarray:
    """``argmin_{x in box} f_t(x)  s.t.  g_t(x) <= 0``.

    Stationarity and complementarity are certified relative to
    ``max(1, ||grad f_t(x*)||_inf)``; constraint violation is absolute.
    """
    n_cons = np.asarray(cons.value(t, box.center)).shape[0]
    x, _ = _solve_convex(
        lambda x: loss_full(t, x),
        lambda x: np.asarray(loss_grad(t, x), dtype=float),
        lambda x: cons.value(t, x),
        lambda x: cons.jacobian(t, x),
        cons.linear,
        box,
        n_cons,
        tol,
        max_iter,
    )
    return x


def optima_series(loss_full, loss_grad, cons: ConstraintOracle, box: BoxSet, T: int, tol: float = 1e-6,
                  max_iter: int = 1000) -> OptimaSeries:
    xs = np.array([per_slot_optimum(loss_full, loss_grad, cons, box, t, tol, max_iter) for t in range(1, T + 1)])
    xs = xs.reshape(T, box.dim)
    fs = np.array([loss_full(t, xs[t - 1]) for t in range(1, T + 1)])
    return OptimaSeries(xs, fs, tol)


def static_optimum(loss_full, loss_grad, cons: ConstraintOracle, box: BoxSet, T: int, tol: float = 1e-6,
                   max_iter: int = 1000) -> np.ndarray:
    """``argmin_x sum_t f_t(x)`` subject to every ``g_t(x) <= 0``."""
    ts = range(1, T + 1)
    fun = lambda x: sum(loss_full(t, x) for t in ts)
    grad = lambda x: np.sum([loss_grad(t, x) for t in ts], axis=0)
    if cons.linear:
        # identical Jacobians: only the largest offset per row can bind
        J = np.asarray(cons.jacobian(1, box.center), dtype=float)
        offsets = np.max([np.asarray(cons.value(t, box.center)) - J @ box.center for t in ts], axis=0)
        value = lambda x: offsets + J @ x
        jac = lambda x: J
    else:
        value = lambda x: np.concatenate([np.asarray(cons.value(t, x)) for t in ts])
        jac = lambda x: np.vstack([np.asarray(cons.jacobian(t, x)) for t in ts])
    n_cons = np.asarray(value(box.center)).shape[0]
    x, _ = _solve_convex(fun, grad, value, jac, cons.linear, box, n_cons, tol, max_iter)
    return x


# ---------------------------------------------------------------------------
# metrics over a trajectory


def played_loss(traj: Trajectory, loss_full) -> np.ndarray:
    """``(1/M) sum_m f_t(x_{m,t})`` per slot, re-evaluated with the exact loss."""
    return np.array([np.mean([loss_full(t, a) for a in rec.actions]) for t, rec in enumerate(traj.records, 1)])


def dynamic_regret(traj: Trajectory, optima: OptimaSeries, loss_full) -> np.ndarray:
    """Cumulative dynamic regret after each slot."""
    if len(traj) != len(optima):
        raise ValueError(f"trajectory has {len(traj)} slots but optima series has {len(optima)}")
    return np.cumsum(played_loss(traj, loss_full) - optima.f_star)


def static_regret(traj: Trajectory, loss_full, x_static: np.ndarray) -> float:
    T = len(traj)
    return float(np.sum(played_loss(traj, loss_full)) - sum(loss_full(t, x_static) for t in range(1, T + 1)))


def static_optimum_and_regret(traj: Trajectory, loss_full, loss_grad, cons: ConstraintOracle, box: BoxSet,
                              tol: float = 1e-6):
    x = static_optimum(loss_full, loss_grad, cons, box, len(traj), tol)
    return x, static_regret(traj, loss_full, x)


def cumulative_constraint(traj: Trajectory) -> np.ndarray:
    """Running sum of M-averaged constraint values, shape ``(T, N)``."""
    if not traj.records:
        return np.zeros((0, 0))
    return np.cumsum([np.mean(rec.g_at_actions, axis=0) for rec in traj.records], axis=0)


def dynamic_fit(traj: Trajectory) -> float:
    if not traj.records:
        return 0.0
    total = np.sum([np.mean(rec.g_at_actions, axis=0) for rec in traj.records], axis=0)
    return float(np.linalg.norm(np.maximum(total, 0.0)))


def fit_series(traj: Trajectory) -> np.ndarray:
    return np.linalg.norm(np.maximum(cumulative_constraint(traj), 0.0), axis=1)


def variation(optima: OptimaSeries | Sequence) -> float:
    """Path length ``sum_t ||x*_t - x*_{t-1}||`` with ``x*_0 := x*_1``."""
    xs = optima.x_star if isinstance(optima, OptimaSeries) else np.asarray(optima, dtype=float)
    if len(xs) < 2:
        return 0.0
    xs = np.asarray(xs, dtype=float).reshape(len(xs), -1)
    return float(np.sum(np.linalg.norm(np.diff(xs, axis=0), axis=1)))


def compute_metrics(traj: Trajectory, loss_full=None, optima: Optional[OptimaSeries] = None) -> MetricsSeries:
    cum = cumulative_constraint(traj)
    regret = dynamic_regret(traj, optima, loss_full) if optima is not None else None
    return MetricsSeries(
        cum_regret=regret,
        cum_fit_vector=cum,
        fit=dynamic_fit(traj),
        variation=variation(optima) if optima is not None else None,
    )
