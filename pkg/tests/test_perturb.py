import numpy as np
import pytest

from ttso.encoders import Architecture, init_params
from ttso.losses import AugmentationSpec
from ttso.perturb import (
    SIGMA_MIN,
    GMMParams,
    PerturbationState,
    derive_delta,
    p3_penalty,
    p3_penalty_direct,
    third_level_ascent,
    weighted_align_delta_grad,
)
from util import assert_grad_close, central_diff

ARCH = Architecture(kind="linear", input_window_len=4, n_features=2, repr_dim=3)
AUG = AugmentationSpec(kind="jitter", magnitude=0.2, seed=5)
D = ARCH.input_dim
RHO = (1.0, 1.0, 1.0, 1.0)


def make_gmm(seed=0, mc=2, dim=D, sigma=0.3):
    rng = np.random.default_rng(seed)
    return GMMParams(
        pi=np.array([0.6, 0.4] if mc == 2 else np.full(mc, 1.0 / mc)),
        mu=rng.standard_normal((mc, dim)),
        sigma=np.full((mc, dim), sigma),
        base_noise=rng.standard_normal((mc, dim)),
    )


def make_domains(seed=1, k=3, batch=4):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal((batch, ARCH.input_window_len, ARCH.n_features)) for _ in range(k)]


def test_derive_delta_zero_noise_zero_mean():
    gmm = GMMParams(pi=[1.0], mu=np.zeros((1, D)), sigma=np.ones((1, D)), base_noise=np.zeros((1, D)))
    assert np.array_equal(derive_delta(gmm), np.zeros(D))


def test_derive_delta_single_component_exact():
    rng = np.random.default_rng(2)
    mu = rng.standard_normal((1, D))
    sigma = np.abs(rng.standard_normal((1, D))) + 0.1
    eps = rng.standard_normal((1, D))
    gmm = GMMParams(pi=[1.0], mu=mu, sigma=sigma, base_noise=eps)
    np.testing.assert_allclose(derive_delta(gmm), (mu + sigma * eps)[0], rtol=1e-15)


def test_derive_delta_symmetric_components_cancel():
    gmm = GMMParams(
        pi=[0.5, 0.5],
        mu=np.array([[1.0] * D, [-1.0] * D]),
        sigma=np.zeros((2, D)),  # clamps to SIGMA_MIN
        base_noise=np.zeros((2, D)),
    )
    np.testing.assert_allclose(derive_delta(gmm), np.zeros(D), atol=1e-15)
    assert np.all(gmm.sigma == SIGMA_MIN)


def test_derive_delta_linear_in_mu():
    gmm = make_gmm(3)
    d0 = derive_delta(gmm)
    scaled = GMMParams(gmm.pi, 3.0 * gmm.mu, gmm.sigma, gmm.base_noise)
    base = GMMParams(gmm.pi, 0.0 * gmm.mu, gmm.sigma, gmm.base_noise)
    np.testing.assert_allclose(
        derive_delta(scaled) - derive_delta(base), 3.0 * (d0 - derive_delta(base)), rtol=1e-12
    )


def test_p3_feasible_point_is_zero():
    gmm = GMMParams(
        pi=[0.5, 0.5],
        mu=0.01 * np.ones((2, D)),
        sigma=0.01 * np.ones((2, D)),
        base_noise=np.zeros((2, D)),
    )
    value, (g_pi, g_mu, g_sigma) = p3_penalty(gmm, c1=1.0, c2=1.0, rho=RHO)
    assert value == 0.0
    assert np.all(g_pi == 0) and np.all(g_mu == 0) and np.all(g_sigma == 0)


def test_p3_simplex_sum_violation_value():
    gmm = GMMParams(
        pi=[0.7, 0.5],  # sums to 1.2
        mu=np.zeros((2, D)),
        sigma=np.full((2, D), SIGMA_MIN),
        base_noise=np.zeros((2, D)),
    )
    value, _ = p3_penalty(gmm, c1=1.0, c2=1.0, rho=(1.0, 1.0, 1.0, 0.0))
    assert value == pytest.approx(0.04, rel=1e-12)


def test_p3_mu_norm_violation_value_and_fd():
    c1 = 0.5
    mu = np.zeros((2, D))
    mu[0, 0] = c1 + 0.5  # Frobenius norm = c1 + 0.5
    gmm = GMMParams(
        pi=[0.5, 0.5], mu=mu, sigma=np.full((2, D), SIGMA_MIN), base_noise=np.zeros((2, D))
    )
    value, grads = p3_penalty(gmm, c1=c1, c2=10.0, rho=(2.0, 0.0, 0.0, 0.0))
    assert value == pytest.approx(0.5, rel=1e-12)

    def f(mu_flat):
        g = GMMParams(gmm.pi, mu_flat.reshape(2, D), gmm.sigma, gmm.base_noise)
        return p3_penalty(g, c1=c1, c2=10.0, rho=(2.0, 0.0, 0.0, 0.0))[0]

    fd = central_diff(f, mu.reshape(-1))
    assert_grad_close(grads[1].reshape(-1), fd, label="p3 mu")


def test_p3_grads_match_fd_on_random_infeasible_point():
    rng = np.random.default_rng(7)
    gmm = GMMParams(
        pi=rng.standard_normal(3) * 0.8,
        mu=2.0 * rng.standard_normal((3, D)),
        sigma=1.5 + np.abs(rng.standard_normal((3, D))),
        base_noise=rng.standard_normal((3, D)),
    )
    value, (g_pi, g_mu, g_sigma) = p3_penalty(gmm, c1=0.5, c2=0.5, rho=(1.2, 0.7, 2.0, 1.5))
    assert value > 0

    fd_pi = central_diff(
        lambda p: p3_penalty(GMMParams(p, gmm.mu, gmm.sigma, gmm.base_noise), 0.5, 0.5, (1.2, 0.7, 2.0, 1.5))[0],
        gmm.pi,
    )
    assert_grad_close(g_pi, fd_pi, label="p3 pi")
    fd_sigma = central_diff(
        lambda s: p3_penalty(
            GMMParams(gmm.pi, gmm.mu, s.reshape(3, D), gmm.base_noise), 0.5, 0.5, (1.2, 0.7, 2.0, 1.5)
        )[0],
        gmm.sigma.reshape(-1),
    )
    assert_grad_close(g_sigma.reshape(-1), fd_sigma, label="p3 sigma")


def test_p3_zero_iff_feasible():
    rng = np.random.default_rng(31)
    c1 = c2 = 1.0
    for _ in range(40):
        mc = 2
        pi = rng.uniform(-0.3, 1.0, size=mc)
        mu = rng.uniform(-0.5, 0.5, size=(mc, D))
        sigma = rng.uniform(SIGMA_MIN, 0.4, size=(mc, D))
        gmm = GMMParams(pi=pi, mu=mu, sigma=sigma, base_noise=np.zeros((mc, D)))
        feasible = (
            np.linalg.norm(gmm.mu) <= c1
            and np.linalg.norm(gmm.sigma) <= c2
            and abs(gmm.pi.sum() - 1.0) <= 1e-12
            and np.all(gmm.pi >= 0)
        )
        value, _ = p3_penalty(gmm, c1, c2, RHO)
        assert (value == 0.0) == feasible
    # exactly-on-simplex cases are feasible when the norms are
    gmm = GMMParams(pi=[0.25, 0.75], mu=np.zeros((2, D)),
                    sigma=np.full((2, D), SIGMA_MIN), base_noise=np.zeros((2, D)))
    assert p3_penalty(gmm, c1, c2, RHO)[0] == 0.0


def test_p3_direct_ball():
    delta = np.zeros(D)
    value, grad = p3_penalty_direct(delta, 0.5, 0.5, 2.0)
    assert value == 0.0 and np.all(grad == 0)
    delta = np.full(D, 1.0)
    value, grad = p3_penalty_direct(delta, 0.25, 0.25, 2.0)
    assert value == pytest.approx(2.0 * (np.linalg.norm(delta) - 0.5) ** 2, rel=1e-12)
    fd = central_diff(lambda d: p3_penalty_direct(d, 0.25, 0.25, 2.0)[0], delta)
    assert_grad_close(grad, fd, label="p3 direct")


def test_ascent_t3_zero_is_identity():
    params = init_params(ARCH, seed=1)
    gmm = make_gmm(4)
    state = PerturbationState(mode="gmm_reparam", gmm=gmm)
    domains = make_domains()
    q = np.array([0.3, 0.3, 0.4])
    state2, delta2, traj = third_level_ascent(
        params, q, state, domains, AUG, t3=0, eta_delta=0.1, c1=1.0, c2=1.0, rho=RHO
    )
    assert np.array_equal(delta2, derive_delta(gmm))
    assert np.all(traj.grad_sum == 0) and traj.steps == 0
    assert np.array_equal(state2.gmm.pi, gmm.pi)


def test_ascent_is_deterministic():
    params = init_params(ARCH, seed=1)
    domains = make_domains()
    q = np.array([0.5, 0.25, 0.25])
    results = []
    for _ in range(2):
        state = PerturbationState(mode="gmm_reparam", gmm=make_gmm(4))
        _, delta, traj = third_level_ascent(
            params, q, state, domains, AUG, t3=3, eta_delta=0.05, c1=1.0, c2=1.0, rho=RHO
        )
        results.append((delta, traj.grad_sum))
    assert np.array_equal(results[0][0], results[1][0])
    assert np.array_equal(results[0][1], results[1][1])


def _f3_direct(params, q, delta, domains, c1, c2, rho):
    value, _ = weighted_align_delta_grad(params, q, delta, domains, AUG)
    pen, _ = p3_penalty_direct(delta, c1, c2, rho[0])
    return value - pen


def test_ascent_increases_objective_for_small_steps():
    # backtrack on the step size until every recorded step is an increase
    params = init_params(ARCH, seed=6)
    rng = np.random.default_rng(11)
    params = params.with_theta(params.theta + 0.5 * rng.standard_normal(params.n_params))
    domains = make_domains(seed=12)
    q = np.array([0.2, 0.5, 0.3])
    eta = 0.5
    for _ in range(8):
        state = PerturbationState(mode="direct", delta_direct=0.05 * rng.standard_normal(D))
        values = [_f3_direct(params, q, state.delta(), domains, 1.0, 1.0, RHO)]
        s = state
        ok = True
        for _step in range(4):
            s, delta, _ = third_level_ascent(
                params, q, s, domains, AUG, t3=1, eta_delta=eta, c1=1.0, c2=1.0, rho=RHO
            )
            values.append(_f3_direct(params, q, delta, domains, 1.0, 1.0, RHO))
            if values[-1] < values[-2]:
                ok = False
                break
        if ok:
            return
        eta *= 0.5
    pytest.fail(f"ascent never monotone even at eta={eta}")


def test_direct_mode_grad_sum_equals_displacement():
    params = init_params(ARCH, seed=2)
    domains = make_domains(seed=9)
    q = np.array([0.4, 0.4, 0.2])
    state = PerturbationState(mode="direct", delta_direct=np.zeros(D))
    state2, delta2, traj = third_level_ascent(
        params, q, state, domains, AUG, t3=5, eta_delta=0.02, c1=1.0, c2=1.0, rho=RHO
    )
    np.testing.assert_allclose(traj.grad_sum, delta2 - traj.delta0, rtol=1e-12, atol=1e-15)


def test_sigma_clamped_after_steps():
    params = init_params(ARCH, seed=3)
    domains = make_domains(seed=10)
    q = np.array([1.0, 1.0, 1.0])
    gmm = GMMParams(
        pi=[0.5, 0.5],
        mu=np.zeros((2, D)),
        sigma=np.full((2, D), 2e-6),
        base_noise=np.random.default_rng(0).standard_normal((2, D)),
    )
    state = PerturbationState(mode="gmm_reparam", gmm=gmm)
    state2, _, _ = third_level_ascent(
        params, q, state, domains, AUG, t3=3, eta_delta=0.5, c1=0.01, c2=1e-9, rho=(0, 10.0, 0, 0)
    )
    assert np.all(state2.gmm.sigma >= SIGMA_MIN)
