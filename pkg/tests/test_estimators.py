import numpy as np
import pytest

from bansap.estimators import (
    InfeasibleQuery,
    LossOracle,
    QueryBudgetExceeded,
    m_point_grad,
    one_point_grad,
    one_point_grads,
    smoothed_value,
    two_point_grad,
    two_point_grads,
)
from bansap.geometry import BoxSet, sample_ball, sample_direction, sample_directions, shrink


def linear(a):
    return lambda t, x: float(a @ x)


def test_one_point_constant_hand_value():
    g = one_point_grad(LossOracle(lambda t, x: 5.0), 1, np.zeros(2), 0.5, np.array([1.0, 0.0]))
    assert np.array_equal(g.g, [20.0, 0.0])
    assert len(g.points) == 1 and np.array_equal(g.points[0], [0.5, 0.0])


def test_one_point_linear_mean():
    a = np.array([1.0, 2.0])
    oracle = LossOracle(linear(a))
    rng = np.random.default_rng(0)
    n = 100_000
    mean = sum(one_point_grad(oracle, 1, np.zeros(2), 0.1, sample_direction("uniform", 2, rng)).g for _ in range(n)) / n
    assert np.max(np.abs(mean - a)) < 0.02


def test_two_point_linear_identity_per_draw():
    rng = np.random.default_rng(1)
    a = rng.normal(size=4)
    oracle = LossOracle(linear(a))
    for _ in range(1000):
        u = sample_direction("uniform", 4, rng)
        x = rng.normal(size=4)
        delta = rng.uniform(1e-3, 2)
        g = two_point_grad(oracle, 1, x, delta, u).g
        assert np.allclose(g, 4 * (a @ u) * u, rtol=1e-9, atol=1e-9)


def test_two_point_linear_mean():
    a = np.array([1.0, -2.0, 0.5])
    rng = np.random.default_rng(2)
    oracle = LossOracle(linear(a))
    n = 100_000
    mean = sum(two_point_grad(oracle, 1, np.ones(3), 0.3, sample_direction("uniform", 3, rng)).g for _ in range(n)) / n
    assert np.max(np.abs(mean - a)) < 0.02


def test_two_point_quadratic_mean():
    rng = np.random.default_rng(3)
    oracle = LossOracle(lambda t, x: float(x @ x))
    n = 100_000
    x = np.array([1.0, 0.0])
    mean = sum(two_point_grad(oracle, 1, x, 1e-3, sample_direction("uniform", 2, rng)).g for _ in range(n)) / n
    assert np.max(np.abs(mean - [2.0, 0.0])) < 0.02


@pytest.mark.parametrize("M", [2, 3, 5])
def test_constant_loss_gives_zero(M):
    rng = np.random.default_rng(4)
    oracle = LossOracle(lambda t, x: 3.7)
    for _ in range(100):
        if M == 2:
            g = two_point_grad(oracle, 1, np.zeros(3), 0.2, sample_direction("uniform", 3, rng)).g
        else:
            g = m_point_grad(oracle, 1, np.zeros(3), 0.2, M, rng).g
        assert np.array_equal(g, np.zeros(3))


def test_m_point_linear_mean_and_actions():
    a = np.array([0.5, 1.0, -1.5])
    rng = np.random.default_rng(5)
    oracle = LossOracle(linear(a))
    x = np.array([0.1, 0.2, 0.3])
    n = 100_000
    total = np.zeros(3)
    for _ in range(n):
        est = m_point_grad(oracle, 1, x, 0.05, 5, rng)
        total += est.g
    assert np.max(np.abs(total / n - a)) < 0.02
    assert len(est.points) == 5 and np.array_equal(est.points[-1], x)


def test_m_point_variance_decreases_with_M():
    a = np.array([1.0, 2.0, -1.0])
    oracle = LossOracle(linear(a))
    variances = []
    for M in (3, 5, 9):
        rng = np.random.default_rng(6)
        G = np.array([m_point_grad(oracle, 1, np.zeros(3), 0.1, M, rng).g for _ in range(10_000)])
        variances.append(G.var(axis=0).sum())
    assert variances[0] > variances[1] > variances[2]


def test_m_point_requires_three():
    with pytest.raises(ValueError):
        m_point_grad(LossOracle(lambda t, x: 0.0), 1, np.zeros(2), 0.1, 2, np.random.default_rng(0))


def test_query_accounting():
    rng = np.random.default_rng(7)
    oracle = LossOracle(lambda t, x: float(x.sum()))
    u = sample_direction("uniform", 2, rng)
    one_point_grad(oracle, 1, np.zeros(2), 0.1, u)
    assert oracle.query_count == 1
    two_point_grad(oracle, 2, np.zeros(2), 0.1, u)
    assert oracle.query_count == 2
    m_point_grad(oracle, 3, np.zeros(2), 0.1, 6, rng)
    assert oracle.query_count == 6
    assert oracle.total_queries == 9


def test_query_budget_enforced():
    oracle = LossOracle(lambda t, x: 0.0, max_queries=1)
    u = np.array([1.0, 0.0])
    one_point_grad(oracle, 1, np.zeros(2), 0.1, u)
    with pytest.raises(QueryBudgetExceeded):
        one_point_grad(oracle, 1, np.zeros(2), 0.1, u)
    one_point_grad(oracle, 2, np.zeros(2), 0.1, u)  # new slot resets the counter


def test_infeasible_query_rejected():
    box = BoxSet.cube(0.0, 1.0, 2)
    oracle = LossOracle(lambda t, x: 0.0)
    with pytest.raises(InfeasibleQuery):
        two_point_grad(oracle, 1, np.array([0.05, 0.5]), 0.1, np.array([1.0, 0.0]), box)
    assert oracle.total_queries == 0


def test_oracle_hides_function():
    fn = lambda t, x: 1.0  # noqa: E731
    oracle = LossOracle(fn)
    public = [k for k in vars(oracle) if not k.startswith("_")]
    assert all(getattr(oracle, k) is not fn for k in public)


def test_batch_matches_single_draws():
    rng = np.random.default_rng(8)
    a = rng.normal(size=4)
    fvec = lambda t, X: np.log1p(np.exp(X)).sum(axis=-1) + X @ a  # noqa: E731
    oracle = LossOracle(lambda t, x: float(fvec(t, x)))
    x = rng.normal(size=4)
    U = sample_directions("uniform", 4, 50, rng)
    G1, G2 = one_point_grads(fvec, 1, x, 0.3, U), two_point_grads(fvec, 1, x, 0.3, U)
    for i, u in enumerate(U):
        assert np.allclose(G1[i], one_point_grad(oracle, 1, x, 0.3, u).g, rtol=1e-13, atol=1e-13)
        assert np.allclose(G2[i], two_point_grad(oracle, 1, x, 0.3, u).g, rtol=1e-13, atol=1e-13)


# ---------------------------------------------------------------------------
# smoothed function


def test_smoothed_linear_is_exact_in_mean():
    a = np.array([1.0, -1.0, 2.0])
    x = np.array([0.3, 0.1, -0.2])
    rng = np.random.default_rng(9)
    n = 20_000
    val = smoothed_value(LossOracle(linear(a)), 1, x, 0.5, n, rng)
    se = 0.5 * np.linalg.norm(a) / np.sqrt(3 + 2) / np.sqrt(n)  # sd of a.v for v uniform in the ball
    assert abs(val - a @ x) <= 3 * se


def test_smoothed_square_ball_moment():
    val = smoothed_value(LossOracle(lambda t, x: float(x @ x)), 1, np.zeros(2), 1.0, 100_000, np.random.default_rng(10))
    assert val == pytest.approx(0.5, abs=0.02)


def test_smoothing_gap_bounded_by_lipschitz_constant():
    f = lambda t, x: float(np.linalg.norm(x - 0.2))  # noqa: E731, 1-Lipschitz
    x = np.array([0.5, -0.4, 0.0])
    for delta in (1.0, 0.1, 0.01):
        val = smoothed_value(LossOracle(f), 1, x, delta, 2000, np.random.default_rng(11))
        assert abs(val - f(1, x)) <= delta + 1e-12


def _smoothed_gradient_crn(fscalar, x, delta, n, h=1e-3, seed=0):
    """Central differences of ``smoothed_value`` with common random numbers."""
    g = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        plus = smoothed_value(LossOracle(fscalar), 1, x + e, delta, n, np.random.default_rng(seed))
        minus = smoothed_value(LossOracle(fscalar), 1, x - e, delta, n, np.random.default_rng(seed))
        g[i] = (plus - minus) / (2 * h)
    return g


@pytest.mark.parametrize("name", ["linear", "quadratic", "softplus"])
def test_one_point_unbiased_for_smoothed_function(name):
    d, delta = 3, 0.5
    a = np.array([1.0, -0.5, 2.0])
    fns = {
        "linear": lambda t, X: X @ a,
        "quadratic": lambda t, X: (X * X).sum(axis=-1) + X @ a,
        "softplus": lambda t, X: np.log1p(np.exp(2.0 * X)).sum(axis=-1),
    }
    fvec = fns[name]
    x = np.array([0.2, -0.1, 0.4])
    rng = np.random.default_rng(12)
    n = 1_000_000
    G = one_point_grads(fvec, 1, x, delta, sample_directions("uniform", d, n, rng))
    mean, se = G.mean(axis=0), G.std(axis=0) / np.sqrt(n)

    m = 20_000
    ref = _smoothed_gradient_crn(lambda t, z: float(fvec(t, z)), x, delta, m)
    # Monte-Carlo error of the reference: spread of the partials over the ball
    h, I = 1e-3, np.eye(d)
    Vs = np.array([x + delta * sample_ball_row for sample_ball_row in _ball(d, m, 14)])
    partials = np.array([(fvec(1, Vs + h * I[i]) - fvec(1, Vs - h * I[i])) / (2 * h) for i in range(d)])
    ref_se = partials.std(axis=1) / np.sqrt(m)
    assert np.all(np.abs(mean - ref) <= 3 * np.sqrt(se**2 + ref_se**2) + 1e-6)


def _ball(d, n, seed):
    rng = np.random.default_rng(seed)
    return np.array([sample_ball(d, rng) for _ in range(n)])


# ---------------------------------------------------------------------------
# norm bounds


@pytest.mark.parametrize("scheme", ["uniform", "coordinate"])
def test_norm_bounds_hold_on_every_draw(scheme):
    rng = np.random.default_rng(16)
    d, Lip = 4, 1.5
    c = rng.uniform(-0.5, 0.5, size=d)
    fvec = lambda t, X: Lip * np.linalg.norm(X - c, axis=-1) - 1.0  # noqa: E731
    F = Lip * np.sqrt(d) * 1.5 + 1.0  # |f| <= F on [-1, 1]^d
    worst1 = worst2 = 0.0
    for delta in (0.05, 0.3):
        for _ in range(50):  # 50 centres x 1000 directions x 2 radii = 1e5 estimates each
            x = rng.uniform(-1 + delta, 1 - delta, size=d)
            U = sample_directions(scheme, d, 1000, rng)
            assert np.all(np.abs(fvec(1, x + delta * U)) <= F)
            n1 = np.linalg.norm(one_point_grads(fvec, 1, x, delta, U), axis=1)
            n2 = np.linalg.norm(two_point_grads(fvec, 1, x, delta, U), axis=1)
            worst1 = max(worst1, np.max(n1 - d * F / delta))
            worst2 = max(worst2, np.max(n2 - d * Lip))
    assert worst1 <= 1e-9 and worst2 <= 1e-9


def test_query_on_shrunk_face_is_snapped_into_box():
    box = BoxSet(np.zeros(3), np.array([20.0, 10.0, 15.0]))
    delta = 0.05
    inner = shrink(box, delta / box.inner_radius)
    oracle = LossOracle(lambda t, x: float(x.sum()))
    for k in range(3):
        u = np.zeros(3)
        u[k] = -1.0
        est = two_point_grad(oracle, 1, inner.lower.copy(), delta, u, box)
        assert all(box.contains(p, 0.0) for p in est.points)
    with pytest.raises(InfeasibleQuery):
        one_point_grad(oracle, 1, inner.lower.copy(), 1.0, -np.eye(3)[0], box)
