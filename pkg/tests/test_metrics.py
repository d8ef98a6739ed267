import numpy as np
import pytest

from bansap import metrics
from bansap.geometry import BoxSet
from bansap.solver import BanSaP, ConstraintOracle, HyperParams, MOSP, Problem, SlotRecord, Trajectory, run

from oracles import grid_argmin_active, grid_argmin_full, toy_node

BOX = BoxSet.cube(-2.0, 2.0, 1)


def cons1(offset):
    return ConstraintOracle(lambda t, x: np.array([x[0] - offset]), lambda t, x: np.array([[1.0]]), linear=True)


def test_inactive_constraint_optimum():
    x = metrics.per_slot_optimum(lambda t, x: float(x[0] ** 2), lambda t, x: 2 * x, cons1(1.0), BOX, 1)
    assert x[0] == pytest.approx(0.0, abs=1e-6)


def test_active_constraint_optimum_against_grid():
    x = metrics.per_slot_optimum(lambda t, x: float((x[0] - 3) ** 2), lambda t, x: 2 * (x - 3), cons1(1.0), BOX, 1)
    grid = np.arange(-2, 2 + 1e-5, 1e-4)
    feasible = grid[grid <= 1.0]
    assert x[0] == pytest.approx(feasible[np.argmin((feasible - 3) ** 2)], abs=1e-4)
    assert x[0] == pytest.approx(1.0, abs=1e-6)


def test_nonlinear_constraint_optimum():
    box = BoxSet.cube(-2.0, 2.0, 2)
    cons = ConstraintOracle(lambda t, x: np.array([x @ x - 1.0]), lambda t, x: 2 * x[None, :])
    x = metrics.per_slot_optimum(lambda t, x: float(-x.sum()), lambda t, x: -np.ones(2), cons, box, 1)
    assert np.allclose(x, np.full(2, 1 / np.sqrt(2)), atol=1e-5)


def test_infeasible_problem_raises():
    with pytest.raises(metrics.InfeasibleProblem):
        metrics.per_slot_optimum(lambda t, x: float(x[0] ** 2), lambda t, x: 2 * x, cons1(-5.0), BOX, 1)


def test_kkt_certificate():
    x = np.array([1.0])
    rep = metrics.kkt_report(x, np.array([-4.0]), np.array([0.0]), np.array([[1.0]]), BOX)
    assert rep.ok(1e-12) and rep.multipliers[0] == pytest.approx(4.0)
    rep = metrics.kkt_report(np.array([0.5]), np.array([-4.0]), np.array([-0.5]), np.array([[1.0]]), BOX)
    assert not rep.ok(1e-6)


def test_toy_node_matches_grid_search():
    rng = np.random.default_rng(0)
    T = 10
    p = dict(enumerate(rng.uniform(0.05, 0.3, T + 1)))
    b = dict(enumerate(rng.uniform(5, 40, T + 1)))
    box, loss, grad, cons = toy_node(p, b)
    for t in range(1, T + 1):
        x = metrics.per_slot_optimum(loss, grad, cons, box, t)
        assert np.max(np.abs(x - grid_argmin_active(p[t], b[t]))) <= 1e-2


def test_reduced_grid_agrees_with_full_grid():
    p, b = {1: 0.2}, {1: 12.0}
    box, loss, grad, cons = toy_node(p, b)
    full = grid_argmin_full(lambda x: loss(1, x), box, lambda x: cons.value(1, x), 0.25)
    reduced = grid_argmin_active(0.2, 12.0, pitch=0.25)
    assert loss(1, reduced) <= loss(1, full) + 1e-12


def test_optima_series_satisfies_constraints():
    rng = np.random.default_rng(1)
    p = dict(enumerate(rng.uniform(0.05, 0.3, 21)))
    b = dict(enumerate(rng.uniform(5, 40, 21)))
    box, loss, grad, cons = toy_node(p, b)
    opt = metrics.optima_series(loss, grad, cons, box, 20)
    assert opt.x_star.shape == (20, 3)
    for t in range(1, 21):
        assert box.contains(opt.x_star[t - 1], 1e-9)
        assert np.all(cons.value(t, opt.x_star[t - 1]) <= 1e-6)
        assert opt.f_star[t - 1] == loss(t, opt.x_star[t - 1])


# ---------------------------------------------------------------------------
# trajectory metrics


def traj_from(actions_per_slot, g_per_slot=None, lam=0.0):
    recs = []
    for k, acts in enumerate(actions_per_slot):
        acts = [np.atleast_1d(np.asarray(a, float)) for a in acts]
        g = g_per_slot[k] if g_per_slot is not None else [np.zeros(1)] * len(acts)
        g = [np.atleast_1d(np.asarray(v, float)) for v in g]
        recs.append(SlotRecord(acts, [0.0] * len(acts), g, g[0], lam, acts[0]))
    return Trajectory(recs, HyperParams(alpha=1, mu=1, T=len(recs)), 0, "handmade")


def test_dynamic_regret_examples():
    sq = lambda t, x: float(x @ x)  # noqa: E731
    opt = metrics.OptimaSeries(np.zeros((1, 1)), np.zeros(1), 1e-6)
    assert metrics.dynamic_regret(traj_from([[0.5]]), opt, sq)[-1] == pytest.approx(0.25)
    assert metrics.dynamic_regret(traj_from([[0.0]]), opt, sq)[-1] == 0.0
    with pytest.raises(ValueError):
        metrics.dynamic_regret(traj_from([[0.0], [0.0]]), opt, sq)


def test_regret_averages_over_actions():
    sq = lambda t, x: float(x @ x)  # noqa: E731
    opt = metrics.OptimaSeries(np.zeros((1, 1)), np.zeros(1), 1e-6)
    assert metrics.dynamic_regret(traj_from([[1.0, 0.0]]), opt, sq)[-1] == pytest.approx(0.5)


def test_fit_examples():
    assert metrics.dynamic_fit(traj_from([[0], [0]], [[[-1.0]], [[-2.0]]])) == 0.0
    assert metrics.dynamic_fit(traj_from([[0], [0]], [[[1.0]], [[-3.0]]])) == 0.0
    t = traj_from([[0], [0]], [[[1.0, 0.0]], [[2.0, -1.0]]])
    assert metrics.dynamic_fit(t) == pytest.approx(3.0)
    # M-averaging inside a slot
    t = traj_from([[0, 0]], [[[4.0], [-2.0]]])
    assert metrics.dynamic_fit(t) == pytest.approx(1.0)


def test_fit_does_not_grow_on_feasible_slot():
    rng = np.random.default_rng(2)
    gs = [[rng.normal(size=3)] for _ in range(30)]
    base = metrics.dynamic_fit(traj_from([[0]] * 30, gs))
    more = metrics.dynamic_fit(traj_from([[0]] * 31, gs + [[-np.abs(rng.normal(size=3))]]))
    assert more <= base + 1e-9


def test_variation_examples():
    assert metrics.variation(np.ones((5, 2))) == 0.0
    assert metrics.variation([[0.0], [1.0], [0.0]]) == 2.0
    assert metrics.variation([[3.0]]) == 0.0


def test_static_example():
    f = lambda t, x: float((x[0] - (1 if t == 1 else -1)) ** 2)  # noqa: E731
    df = lambda t, x: 2 * (x - (1 if t == 1 else -1))  # noqa: E731
    free = cons1(10.0)
    x_s = metrics.static_optimum(f, df, free, BOX, 2)
    assert x_s[0] == pytest.approx(0.0, abs=1e-6)
    traj = traj_from([[0.0], [0.0]])
    opt = metrics.optima_series(f, df, free, BOX, 2)
    assert np.allclose(opt.x_star[:, 0], [1, -1], atol=1e-6)
    assert metrics.dynamic_regret(traj, opt, f)[-1] == pytest.approx(2.0, abs=1e-6)
    assert metrics.static_regret(traj, f, x_s) == pytest.approx(0.0, abs=1e-9)


def test_static_regret_bounded_by_dynamic_on_runs():
    rng = np.random.default_rng(3)
    T = 40
    p = dict(enumerate(rng.uniform(0.05, 0.3, T + 1)))
    b = dict(enumerate(rng.uniform(5, 12, T + 1)))
    box, loss, grad, cons = toy_node(p, b)
    problem = Problem(box, loss, cons, gradient=grad)
    opt = metrics.optima_series(loss, grad, cons, box, T)
    for algo, hp in [(MOSP(), HyperParams(alpha=0.5, mu=0.5, T=T)),
                     (BanSaP(2), HyperParams(alpha=0.1, mu=0.1, delta=0.1, gamma=0.1 / 5.0, T=T))]:
        traj = run(problem, algo, hp, seed=0)
        _, s = metrics.static_optimum_and_regret(traj, loss, grad, cons, box)
        assert s <= metrics.dynamic_regret(traj, opt, loss)[-1] + 1e-6


def test_time_invariant_static_equals_dynamic():
    f = lambda t, x: float((x[0] - 0.5) ** 2)  # noqa: E731
    df = lambda t, x: 2 * (x - 0.5)  # noqa: E731
    traj = traj_from([[0.1], [0.9], [0.3]])
    opt = metrics.optima_series(f, df, cons1(10.0), BOX, 3)
    _, s = metrics.static_optimum_and_regret(traj, f, df, cons1(10.0), BOX)
    assert s == pytest.approx(metrics.dynamic_regret(traj, opt, f)[-1], abs=1e-9)


def test_compute_metrics_consistency():
    rng = np.random.default_rng(4)
    T = 25
    p = dict(enumerate(rng.uniform(0.05, 0.3, T + 1)))
    b = dict(enumerate(rng.uniform(5, 12, T + 1)))
    box, loss, grad, cons = toy_node(p, b)
    traj = run(Problem(box, loss, cons, gradient=grad), MOSP(), HyperParams(alpha=0.3, mu=0.3, T=T), seed=0)
    opt = metrics.optima_series(loss, grad, cons, box, T)
    m = metrics.compute_metrics(traj, loss, opt)
    direct = sum(np.mean([loss(t, a) for a in r.actions]) - opt.f_star[t - 1] for t, r in enumerate(traj.records, 1))
    assert m.cum_regret[-1] == pytest.approx(direct, abs=1e-9)
    assert m.fit == pytest.approx(np.linalg.norm(np.maximum(m.cum_fit_vector[-1], 0)), abs=1e-9)
    assert m.fit >= 0 and m.variation >= 0
    assert np.allclose(metrics.fit_series(traj)[-1], m.fit)
