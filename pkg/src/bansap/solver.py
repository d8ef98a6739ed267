"""Bandit (BanSaP) and full-information (MOSP) online saddle-point steppers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Union

import numpy as np

from .estimators import GradientEstimate, LossOracle, m_point_grad, one_point_grad, two_point_grad
from .geometry import BoxSet, SamplingScheme, project, sample_direction, shrink


class NonFiniteValue(FloatingPointError):
    pass


class RunError(RuntimeError):
    def __init__(self, slot: int, cause: BaseException):
        super().__init__(f"slot {slot}: {cause}")
        self.slot = slot
        self.cause = cause


@dataclass
class ConstraintOracle:
    """Time-varying constraint ``g_t: R^d -> R^N`` with its Jacobian."""

    value: Callable[[int, np.ndarray], np.ndarray]
    jacobian: Callable[[int, np.ndarray], np.ndarray]
    linear: bool = False  # Jacobian independent of x and t


@dataclass
class Problem:
    box: BoxSet
    loss: Callable[[int, np.ndarray], float]  # exact f_t; learners only see it through LossOracle
    constraints: ConstraintOracle
    gradient: Optional[Callable[[int, np.ndarray], np.ndarray]] = None  # exact grad f_t (full information)
    fog: Any = None  # FogInstance when the heuristic baselines apply
    F: Optional[float] = None
    G: Optional[float] = None


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    mu: float
    delta: float = 1.0
    gamma: float = 0.0
    M: int = 1
    scheme: SamplingScheme = SamplingScheme.UNIFORM_SPHERE
    T: int = 1
    rho: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", SamplingScheme(self.scheme))
        if not (self.alpha > 0 and self.mu > 0 and self.delta > 0):
            raise ValueError(f"alpha, mu and delta must be positive: {self}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.M < 1 or self.T < 0:
            raise ValueError(f"need M >= 1 and T >= 0: {self}")
        if self.rho is not None and not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")

    def check_perturbation(self, box: BoxSet) -> None:
        """Perturbed actions stay in ``box`` only if ``gamma * r >= delta``."""
        if self.gamma * box.inner_radius < self.delta * (1 - 1e-12):
            raise ValueError(
                f"gamma * inner_radius = {self.gamma * box.inner_radius:.6g} < delta = {self.delta:.6g}; "
                "perturbed actions could leave the feasible set"
            )


@dataclass
class PrimalDualState:
    x_hat: np.ndarray
    lam: np.ndarray
    slot: int = 1


@dataclass
class SlotRecord:
    actions: list
    losses: list
    g_at_actions: list
    g_at_xhat: np.ndarray
    lambda_norm: float  # ||lambda_{t+1}||, after this slot's dual update
    x_hat: np.ndarray
    grad_estimate: Optional[np.ndarray] = None

    @property
    def avg_loss(self) -> float:
        return float(np.mean(self.losses))

    @property
    def avg_g(self) -> np.ndarray:
        return np.mean(self.g_at_actions, axis=0)


@dataclass
class Trajectory:
    records: list
    hyper: Optional[HyperParams]
    seed: Any
    algorithm: str = ""

    def __len__(self):
        return len(self.records)


# ---------------------------------------------------------------------------
# algorithm descriptors


@dataclass(frozen=True)
class BanSaP:
    M: int = 1
    scheme: SamplingScheme = SamplingScheme.UNIFORM_SPHERE

    @property
    def name(self) -> str:
        return f"bansap_m{self.M}_{SamplingScheme(self.scheme).value}"


@dataclass(frozen=True)
class MOSP:
    name: str = "mosp"


@dataclass(frozen=True)
class CloudOnly:
    name: str = "cloud_only"


@dataclass(frozen=True)
class FogOnly:
    name: str = "fog_only"


Algorithm = Union[BanSaP, MOSP, CloudOnly, FogOnly]


# ---------------------------------------------------------------------------
# steps


def _finite(t: int, what: str, v) -> None:
    if not np.all(np.isfinite(v)):
        raise NonFiniteValue(f"non-finite {what} at slot {t}: {v}")


def bandit_estimate(oracle: LossOracle, t: int, x_hat: np.ndarray, hp: HyperParams, rng, box: Optional[BoxSet] = None):
    """Pick the one-, two- or M-point estimator according to ``hp.M``."""
    if hp.M == 1:
        u = sample_direction(hp.scheme, x_hat.shape[0], rng)
        return one_point_grad(oracle, t, x_hat, hp.delta, u, box)
    if hp.M == 2:
        u = sample_direction(hp.scheme, x_hat.shape[0], rng)
        return two_point_grad(oracle, t, x_hat, hp.delta, u, box)
    return m_point_grad(oracle, t, x_hat, hp.delta, hp.M, rng, hp.scheme, box)


def _saddle_update(state, est: GradientEstimate, cons: ConstraintOracle, hp: HyperParams, feasible: BoxSet):
    t, x, lam = state.slot, state.x_hat, state.lam
    g_val = np.asarray(cons.value(t, x), dtype=float)
    J = np.asarray(cons.jacobian(t, x), dtype=float)
    _finite(t, "constraint", g_val)
    grad_L = est.g + J.T @ lam
    _finite(t, "gradient", grad_L)
    x_next = project(feasible, x - hp.alpha * grad_L)
    # first-order model of g_t at the new iterate, linearised at the old one
    lam_next = np.maximum(lam + hp.mu * (g_val + J @ (x_next - x)), 0.0)
    if cons.linear:
        g_acts = [g_val + J @ (a - x) for a in est.points]
    else:
        g_acts = [np.asarray(cons.value(t, a), dtype=float) for a in est.points]
    rec = SlotRecord(
        actions=est.points,
        losses=est.values,
        g_at_actions=g_acts,
        g_at_xhat=g_val,
        lambda_norm=float(np.linalg.norm(lam_next)),
        x_hat=x,
        grad_estimate=est.g,
    )
    return PrimalDualState(x_next, lam_next, t + 1), rec


def bansap_step(
    state: PrimalDualState,
    loss: LossOracle,
    cons: ConstraintOracle,
    hp: HyperParams,
    box: BoxSet,
    rng: np.random.Generator,
    estimator: Optional[Callable] = None,
    check_feasible: bool = True,
):
    """One slot of BanSaP: play perturbed actions, estimate, primal then dual update.

    ``estimator(oracle, t, x_hat, hp, rng)`` replaces the bandit estimator
    (used for differential testing against the full-information step).
    """
    feasible = shrink(box, hp.gamma)
    if estimator is None:
        est = bandit_estimate(loss, state.slot, state.x_hat, hp, rng, box if check_feasible else None)
    else:
        est = estimator(loss, state.slot, state.x_hat, hp, rng)
    _finite(state.slot, "loss", est.values)
    return _saddle_update(state, est, cons, hp, feasible)


def mosp_step(
    state: PrimalDualState,
    true_grad: Callable[[int, np.ndarray], np.ndarray],
    cons: ConstraintOracle,
    hp: HyperParams,
    box: BoxSet,
    loss: Optional[LossOracle] = None,
):
    """Full-information saddle-point step; the action is the iterate itself."""
    t, x = state.slot, state.x_hat
    g = np.asarray(true_grad(t, x), dtype=float)
    values = [loss.value(t, x)] if loss is not None else [math.nan]
    if loss is not None:
        _finite(t, "loss", values)
    est = GradientEstimate(g, [x.copy()], values, "exact")
    return _saddle_update(state, est, cons, hp, shrink(box, hp.gamma))


# ---------------------------------------------------------------------------
# schedules


def schedule(
    T: int,
    mode: str,
    box: BoxSet,
    rho: Optional[float] = None,
    c_alpha: float = 1.0,
    c_delta: float = 1.0,
    c_mu: Optional[float] = None,
    M: Optional[int] = None,
    scheme: SamplingScheme | str = SamplingScheme.UNIFORM_SPHERE,
) -> HyperParams:
    """Stepsizes and exploration radius with the horizon exponents of the regret bounds.

    ``one_point``: alpha = mu ~ T^(3/4 (rho - 1)), delta ~ T^(1/4 (rho - 1)).
    ``two_point``: alpha = mu ~ T^(1/2 (rho - 1)), delta ~ T^(1/2 (rho - 1)),
    and delta ~ 1/T when ``rho`` is not given. Always gamma = delta / r.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if rho is not None and not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    r = rho if rho is not None else 0.0
    if mode == "one_point":
        a_exp, d_exp = 0.75 * (r - 1), 0.25 * (r - 1)
        M = 1 if M is None else M
    elif mode == "two_point":
        a_exp = 0.5 * (r - 1)
        d_exp = 0.5 * (r - 1) if rho is not None else -1.0
        M = 2 if M is None else M
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")
    alpha = c_alpha * T ** a_exp
    mu = (c_alpha if c_mu is None else c_mu) * T ** a_exp
    delta = c_delta * T ** d_exp
    gamma = delta / box.inner_radius
    if gamma >= 1.0:
        raise ValueError(f"delta = {delta:.4g} too large for inner radius {box.inner_radius:.4g}")
    return HyperParams(alpha=alpha, mu=mu, delta=delta, gamma=gamma, M=M, scheme=scheme, T=T, rho=rho)


def with_gamma(hp: HyperParams, gamma: float, box: BoxSet) -> HyperParams:
    """Override the coupling ``gamma = delta / r``; warns when it is broken."""
    coupled = hp.delta / box.inner_radius
    if not math.isclose(gamma, coupled, rel_tol=1e-9):
        warnings.warn(f"gamma={gamma} differs from delta/r={coupled:.6g}", stacklevel=2)
    return replace(hp, gamma=gamma)


# ---------------------------------------------------------------------------
# run loop


def initial_state(box: BoxSet, hp: HyperParams, n_constraints: int, init: str = "center") -> PrimalDualState:
    """``x_hat_1`` at the center (default) or lower corner of the shrunken box; ``lambda_1 = 0``."""
    feasible = shrink(box, hp.gamma)
    if init == "center":
        x0 = feasible.center.copy()
    elif init == "lower":
        x0 = feasible.lower.copy()
    else:
        raise ValueError(f"unknown initialisation {init!r}")
    return PrimalDualState(x0, np.zeros(n_constraints), 1)


def run(problem: Problem, algo: Algorithm, hp: HyperParams, seed, T: Optional[int] = None, init: str = "center") -> Trajectory:
    """Execute ``T`` slots (default ``hp.T``) of ``algo`` on ``problem``."""
    T = hp.T if T is None else T
    rng = np.random.default_rng(seed)
    box = problem.box
    if isinstance(algo, (CloudOnly, FogOnly)):
        return _run_heuristic(problem, algo, hp, seed, T)
    if isinstance(algo, BanSaP):
        hp = replace(hp, M=algo.M, scheme=algo.scheme)
        hp.check_perturbation(box)
        oracle = LossOracle(problem.loss, max_queries=hp.M, F=problem.F, G=problem.G)
    elif isinstance(algo, MOSP):
        if problem.gradient is None:
            raise ValueError("MOSP needs the exact loss gradient")
        oracle = LossOracle(problem.loss, max_queries=1)
    else:
        raise TypeError(f"unknown algorithm {algo!r}")

    n_cons = np.asarray(problem.constraints.value(1, box.center)).shape[0] if T > 0 else 0
    state = initial_state(box, hp, n_cons, init)
    records = []
    for t in range(1, T + 1):
        try:
            if isinstance(algo, BanSaP):
                state, rec = bansap_step(state, oracle, problem.constraints, hp, box, rng)
            else:
                state, rec = mosp_step(state, problem.gradient, problem.constraints, hp, box, oracle)
        except Exception as exc:
            raise RunError(t, exc) from exc
        records.append(rec)
    return Trajectory(records, hp, seed, algo.name)


def _run_heuristic(problem: Problem, algo, hp, seed, T: int) -> Trajectory:
    from .fog import cloud_only_step, fog_only_step

    inst = problem.fog
    if inst is None:
        raise ValueError(f"{algo.name} applies to fog instances only")
    step = cloud_only_step if isinstance(algo, CloudOnly) else fog_only_step
    backlog = np.zeros(inst.net.N)
    records = []
    for t in range(1, T + 1):
        b = inst.arrivals.b(t)
        x, backlog = step(backlog, b, inst.net)
        g = problem.constraints.value(t, x)
        records.append(
            SlotRecord(
                actions=[x],
                losses=[problem.loss(t, x)],
                g_at_actions=[g],
                g_at_xhat=g,
                lambda_norm=0.0,
                x_hat=x,
            )
        )
    return Trajectory(records, hp, seed, algo.name)
