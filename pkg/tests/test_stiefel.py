import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmccsp import stiefel
from bmccsp.diagnostics import batch_means_variance, geweke_diagnostic
from bmccsp.stiefel import GmcConfig, PsiTarget


def haar(rng, T, H):
    return stiefel.orthonormalize(rng.standard_normal((T, H)))


def log_density(Y, Xi, Phi, Psi, tau):
    U = Y - Phi @ Psi.T - Xi
    return -0.5 * tau * np.sum(U * U)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_gradient_zero_when_phi_zero(rng):
    Y, Xi = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    g = stiefel.log_grad_psi(Y, Xi, np.zeros((3, 2)), haar(rng, 4, 2), 2.0)
    assert np.all(g == 0)


def test_gradient_zero_at_perfect_fit(rng):
    Phi, Psi, Xi = rng.normal(size=(3, 2)), haar(rng, 4, 2), rng.normal(size=(3, 4))
    g = stiefel.log_grad_psi(Phi @ Psi.T + Xi, Xi, Phi, Psi, 1.7)
    np.testing.assert_allclose(g, 0.0, atol=1e-12)


def test_gradient_dimension_check(rng):
    with pytest.raises(ValueError, match="dimension"):
        stiefel.log_grad_psi(np.zeros((3, 4)), np.zeros((3, 4)), np.zeros((3, 2)), np.zeros((5, 2)), 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_finite_difference(seed):
    r = np.random.default_rng(seed)
    Y, Xi, Phi = r.normal(size=(3, 4)), r.normal(size=(3, 4)), r.normal(size=(3, 2))
    Psi, tau = haar(r, 4, 2), 1.3
    g = stiefel.log_grad_psi(Y, Xi, Phi, Psi, tau)
    fd = fd_gradient(lambda P: log_density(Y, Xi, Phi, P, tau), Psi)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_target_matches_direct_formula(rng):
    Y, Xi, Phi, Psi = rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), rng.normal(size=(4, 3)), haar(rng, 6, 3)
    t = PsiTarget(Y - Xi, Phi, 0.8)
    assert t.log_density(Psi) == pytest.approx(log_density(Y, Xi, Phi, Psi, 0.8), rel=1e-12)
    np.testing.assert_allclose(t.grad(Psi), stiefel.log_grad_psi(Y, Xi, Phi, Psi, 0.8), atol=1e-12)


def test_project_examples(rng):
    Psi = haar(rng, 6, 3)
    np.testing.assert_allclose(stiefel.project_tangent(Psi, Psi), 0.0, atol=1e-14)
    v = stiefel.project_tangent(Psi, rng.normal(size=(6, 3)))
    np.testing.assert_allclose(stiefel.project_tangent(Psi, v), v, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 9), data=st.data())
def test_projection_properties(seed, T, data):
    H = data.draw(st.integers(1, T))
    r = np.random.default_rng(seed)
    Psi = haar(r, T, H)
    v = r.normal(size=(T, H))
    w = stiefel.project_tangent(Psi, v)
    np.testing.assert_allclose(stiefel.sym(Psi.T @ w), 0.0, atol=1e-10)
    np.testing.assert_allclose(stiefel.project_tangent(Psi, w), w, atol=1e-12)


def test_flow_zero_time(rng):
    Psi = haar(rng, 5, 2)
    v = stiefel.project_tangent(Psi, rng.normal(size=(5, 2)))
    x, w = stiefel.geodesic_flow(Psi, v, 0.0)
    assert np.array_equal(x, Psi) and np.array_equal(w, v)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 9), eps=st.floats(1e-3, 2.0), data=st.data())
def test_flow_isometry_and_constraint(seed, T, eps, data):
    H = data.draw(st.integers(1, T))
    r = np.random.default_rng(seed)
    Psi = haar(r, T, H)
    v = stiefel.project_tangent(Psi, r.normal(size=(T, H)))
    x, w = stiefel.geodesic_flow(Psi, v, eps)
    assert stiefel.ortho_drift(x) < 1e-8
    assert abs(np.linalg.norm(w) - np.linalg.norm(v)) < 1e-8
    np.testing.assert_allclose(stiefel.sym(x.T @ w), 0.0, atol=1e-8)


def test_flow_square_case_composed(rng):
    T = 4
    x = haar(rng, T, T)
    v = stiefel.project_tangent(x, rng.normal(size=(T, T)))
    for _ in range(1000):
        x, v = stiefel.geodesic_flow(x, v, 0.05)
    assert stiefel.ortho_drift(x) < 1e-8


def test_flow_follows_great_circle():
    # T = 2, H = 1: the manifold is the unit circle; the geodesic is a rotation
    x = np.array([[1.0], [0.0]])
    v = np.array([[0.0], [0.7]])
    y, w = stiefel.geodesic_flow(x, v, 1.3)
    np.testing.assert_allclose(y[:, 0], [np.cos(0.91), np.sin(0.91)], atol=1e-12)
    np.testing.assert_allclose(w[:, 0], 0.7 * np.array([-np.sin(0.91), np.cos(0.91)]), atol=1e-12)


def test_orthonormalize_sign_convention(rng):
    A = rng.normal(size=(7, 3))
    q = stiefel.orthonormalize(A)
    R = q.T @ A
    np.testing.assert_allclose(np.tril(R, -1), 0.0, atol=1e-12)
    assert np.all(np.diag(R) > 0)
    assert stiefel.ortho_drift(q) < 1e-12


def test_tiny_step_always_accepts(rng):
    Y, Phi = rng.normal(size=(4, 6)), rng.normal(size=(4, 2))
    target = PsiTarget(Y, Phi, 1.0)
    psi = haar(rng, 6, 2)
    acc = [stiefel.sample_psi(target, psi, 1e-7, 5, rng)[1] for _ in range(50)]
    assert all(acc)
    new, _, _ = stiefel.sample_psi(target, psi, 1e-9, 5, rng)
    assert np.max(np.abs(new - psi)) < 1e-7


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_proposal_rejected(rng):
    target = PsiTarget(rng.normal(size=(3, 4)), np.full((3, 2), 1e200), 1e200)
    psi = haar(rng, 4, 2)
    new, accepted, _ = stiefel.sample_psi(target, psi, 0.1, 5, rng)
    assert not accepted and np.array_equal(new, psi)


def test_two_point_manifold():
    """J = T = H = 1: Psi in {+1, -1}; P(+1) / P(-1) = exp(2 tau r phi)."""
    r_, phi, tau = 0.4, 0.5, 1.0
    target = PsiTarget(np.array([[r_]]), np.array([[phi]]), tau)
    rng = np.random.default_rng(5)
    psi = np.array([[1.0]])
    n = 40000
    hits = np.empty(n)
    for i in range(n):
        psi, _, _ = stiefel.sample_psi(target, psi, 0.1, 5, rng)
        psi, _ = stiefel.flip_column(target, psi, rng)
        hits[i] = psi[0, 0] > 0
    p = 1.0 / (1.0 + np.exp(-2 * tau * r_ * phi))
    se = np.sqrt(batch_means_variance(hits) / n)
    assert abs(hits.mean() - p) < 3 * se


def test_stationarity_of_trace_statistic():
    rng = np.random.default_rng(8)
    J, T, H = 4, 6, 2
    Phi = rng.normal(size=(J, H))
    truth = haar(rng, T, H)
    Y = Phi @ truth.T + rng.normal(size=(J, T))
    target = PsiTarget(Y, Phi, 1.0)
    M = rng.normal(size=(T, H))
    psi, eps = truth.copy(), 0.2
    cfg = GmcConfig()
    for i in range(1, 1001):
        psi, acc, _ = stiefel.sample_psi(target, psi, eps, 5, rng)
        eps = stiefel.adapt_step(eps, i, float(acc), cfg)
    chain = np.empty(10000)
    for i in range(chain.size):
        psi, _, _ = stiefel.sample_psi(target, psi, eps, 5, rng)
        psi, _ = stiefel.flip_column(target, psi, rng)
        chain[i] = np.sum(psi * M)
    assert abs(geweke_diagnostic(chain)) < 1.96


def test_adapt_reciprocal_examples():
    cfg = GmcConfig(decay="reciprocal")
    assert stiefel.adapt_step(0.1, 7, 0.6, cfg) == pytest.approx(0.1, rel=1e-15)
    assert stiefel.adapt_step(0.1, 1, 0.8, cfg) == pytest.approx(0.1 * np.exp(-0.2), rel=1e-12)
    assert stiefel.adapt_step(0.1, 1, 0.8, cfg) == pytest.approx(0.08187, abs=1e-5)
    for a in (0.0, 1.0):
        assert abs(np.log(stiefel.adapt_step(0.1, 1000, a, cfg) / 0.1)) < 1e-5


def test_adapt_default_direction():
    cfg = GmcConfig()
    assert stiefel.adapt_step(0.1, 1, 0.6, cfg) == pytest.approx(0.1)
    assert stiefel.adapt_step(0.1, 1, 0.8, cfg) == pytest.approx(0.1 * np.exp(0.2), rel=1e-12)
    assert stiefel.adapt_step(0.1, 4, 0.0, cfg) == pytest.approx(0.1 * np.exp(-0.6 * 4**-0.6), rel=1e-12)
    with pytest.raises(ValueError):
        stiefel.adapt_step(0.1, 0, 0.5, cfg)


@pytest.mark.parametrize("kw", [dict(step=0), dict(n_step=0), dict(target_accept=1.0),
                                dict(varsigma=0.5), dict(decay="fast")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GmcConfig(**kw)


def _angle_cdf(kappa):
    """CDF of theta on [0, 2 pi) for density exp(kappa cos^2 theta) on the circle."""
    grid = np.linspace(0.0, 2 * np.pi, 20001)
    dens = np.exp(kappa * np.cos(grid) ** 2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    return lambda t: np.interp(t, grid, cum / cum[-1])


@pytest.mark.parametrize("kappa", [-3.0, 0.5, 8.0])
def test_bingham_circle_matches_density(kappa):
    from scipy.stats import kstest

    rng = np.random.default_rng(5)
    B = np.diag([kappa, 0.0])
    x = np.array([stiefel.sample_bingham(B, rng) for _ in range(20_000)])
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0)
    theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    assert kstest(theta, _angle_cdf(kappa)).pvalue > 0.01


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1e4), min_size=1, max_size=30))
def test_envelope_b_stays_below_root(gaps):
    a = np.array(gaps + [0.0])
    b = stiefel._envelope_b(a)
    phi = np.sum(1.0 / (b + 2.0 * a))
    # any b <= q is a valid envelope; ending near the root keeps acceptance high
    assert 1.0 <= b <= a.size
    assert 1.0 - 1e-12 <= phi < 1.01


def test_bingham_sphere_second_moments():
    from scipy.integrate import dblquad

    B = np.diag([2.0, 0.0, -1.0])

    def point(th, ph):
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    def moment(f):
        return dblquad(lambda ph, th: f(point(th, ph)) * np.exp(point(th, ph) @ B @ point(th, ph))
                       * np.sin(th), 0, np.pi, 0, 2 * np.pi)[0]

    z = moment(lambda x: 1.0)
    want = [moment(lambda x, i=i: x[i] ** 2) / z for i in range(3)]
    rng = np.random.default_rng(8)
    # rotate so the eigenbasis is not the coordinate basis
    Q = stiefel.orthonormalize(rng.standard_normal((3, 3)))
    x = np.array([stiefel.sample_bingham(Q @ B @ Q.T, rng) for _ in range(20000)]) @ Q
    got = (x**2).mean(axis=0)
    np.testing.assert_allclose(got, want, atol=0.015)


def test_bingham_one_dimension_is_a_sign():
    rng = np.random.default_rng(0)
    draws = [stiefel.sample_bingham(np.array([[4.0]]), rng)[0] for _ in range(400)]
    assert set(draws) == {-1.0, 1.0}
    assert 150 < sum(d > 0 for d in draws) < 250


@pytest.mark.parametrize("T, H", [(6, 2), (4, 4), (5, 1)])
def test_gibbs_columns_stay_orthonormal(rng, T, H):
    psi = haar(rng, T, H)
    M = rng.normal(size=(7, T))
    for _ in range(20):
        psi = stiefel.gibbs_columns(psi, M.T @ M, rng.uniform(0.1, 2.0, size=H), rng)
    assert stiefel.ortho_drift(psi) < 1e-10


def test_gibbs_columns_square_case_only_flips_signs(rng):
    psi = haar(rng, 4, 4)
    new = stiefel.gibbs_columns(psi.copy(), np.eye(4), np.ones(4), rng)
    np.testing.assert_allclose(np.abs(np.sum(new * psi, axis=0)), 1.0)
