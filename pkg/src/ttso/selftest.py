"""Built-in property checks behind the `selftest` subcommand.

Quick versions of the verification suites: analytic gradients against
central finite differences, midpoint convexity of the feasibility surrogate,
and cutting-plane validity on sampled feasible points. Prints one line per
check; returns the number of failures.
"""

import numpy as np

from .cutplane import F_grads, F_value, PlaneSet, generate_plane
from .encoders import Architecture, backward, forward, init_params
from .group import (
    GroupState,
    build_anchor,
    h_value_grads,
    p2_penalty,
    phi_linearized,
    uniform_prior,
)
from .losses import AugmentationSpec, alignment_loss, contrastive_loss, reg_loss
from .perturb import AscentTrajectory, GMMParams, p3_penalty

FD_STEP = 1e-5
RTOL = 1e-5

ARCHS = (
    Architecture(kind="linear", input_window_len=4, n_features=2, repr_dim=3),
    Architecture(kind="mlp", input_window_len=4, n_features=2, repr_dim=3, hidden_dims=(6,)),
    Architecture(kind="dilated_conv", input_window_len=8, n_features=2, repr_dim=3, n_layers=2),
)


def _central_diff(fn, x):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = FD_STEP
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * FD_STEP)
    return g


def _close(analytic, numeric):
    a = np.asarray(analytic).reshape(-1)
    b = np.asarray(numeric).reshape(-1)
    # absolute floor covers identically-zero gradients compared against
    # finite-difference noise
    return np.linalg.norm(a - b) <= RTOL * max(np.linalg.norm(a), np.linalg.norm(b)) + 1e-8


def check_encoder_gradients():
    rng = np.random.default_rng(0)
    for arch in ARCHS:
        params = init_params(arch, seed=1)
        params = params.with_theta(params.theta + 0.3 * rng.standard_normal(params.n_params))
        x = rng.standard_normal((arch.input_window_len, arch.n_features))
        upstream = rng.standard_normal(arch.repr_dim)
        gt, gx = backward(params, x, upstream)
        ok_t = _close(gt, _central_diff(
            lambda th: upstream @ forward(params.with_theta(th), x), params.theta))
        ok_x = _close(gx, _central_diff(
            lambda xf: upstream @ forward(params, xf.reshape(x.shape)), x.reshape(-1)))
        if not (ok_t and ok_x):
            return False
    return True


def check_loss_gradients():
    rng = np.random.default_rng(1)
    aug = AugmentationSpec(kind="scale", magnitude=0.3, seed=2)
    for arch in ARCHS:
        params = init_params(arch, seed=2)
        params = params.with_theta(params.theta + 0.2 * rng.standard_normal(params.n_params))
        batch = rng.standard_normal((3, arch.input_window_len, arch.n_features))
        delta = 0.1 * rng.standard_normal(arch.input_dim)
        for fn in (
            lambda p, b, d: alignment_loss(p, b, d, aug),
            lambda p, b, d: reg_loss(p, b, d, aug),
            lambda p, b, d: contrastive_loss(p, b, d, aug, 0.5),
        ):
            out = fn(params, batch, delta)
            ok_t = _close(out.grad_theta, _central_diff(
                lambda th: fn(params.with_theta(th), batch, delta).value, params.theta))
            ok_d = _close(out.grad_delta, _central_diff(
                lambda dd: fn(params, batch, dd).value, delta))
            if not (ok_t and ok_d):
                return False
    return True


def check_penalty_gradients():
    rng = np.random.default_rng(2)
    mc, dim = 2, 6
    gmm = GMMParams(
        pi=rng.standard_normal(mc) * 0.8,
        mu=2.0 * rng.standard_normal((mc, dim)),
        sigma=1.0 + np.abs(rng.standard_normal((mc, dim))),
        base_noise=rng.standard_normal((mc, dim)),
    )
    rho = (1.5, 0.8, 2.0, 1.0)
    _, (g_pi, g_mu, g_sigma) = p3_penalty(gmm, 0.5, 0.5, rho)
    ok = _close(g_pi, _central_diff(
        lambda p: p3_penalty(GMMParams(p, gmm.mu, gmm.sigma, gmm.base_noise), 0.5, 0.5, rho)[0],
        gmm.pi))
    ok = ok and _close(g_mu.reshape(-1), _central_diff(
        lambda m: p3_penalty(GMMParams(gmm.pi, m.reshape(mc, dim), gmm.sigma, gmm.base_noise),
                             0.5, 0.5, rho)[0], gmm.mu.reshape(-1)))

    traj = AscentTrajectory(delta0=rng.standard_normal(dim), grad_sum=rng.standard_normal(dim),
                            steps=2)
    p = uniform_prior(3)
    lambdas = (1.0, 1.2, 0.7, 0.9)
    q = np.array([0.8, -0.3, 0.6])
    delta = traj.target + 0.4 * rng.standard_normal(dim)
    _, g_q, g_d = p2_penalty(q, delta, traj, lambdas, p, tau=0.2)
    ok = ok and _close(g_q, _central_diff(
        lambda qq: p2_penalty(qq, delta, traj, lambdas, p, 0.2)[0], q))
    ok = ok and _close(g_d, _central_diff(
        lambda dd: p2_penalty(q, dd, traj, lambdas, p, 0.2)[0], delta))
    return ok


def _toy_anchor(rng, n, k, d):
    arch = ARCHS[0]
    params = init_params(arch, seed=3)
    group = GroupState(q=uniform_prior(k), p=uniform_prior(k), tau=0.4,
                       lambdas=(1.0, 1.0, 1.0, 1.0))
    batches = [rng.standard_normal((2, arch.input_window_len, arch.n_features))
               for _ in range(k)]
    aug = AugmentationSpec(kind="jitter", magnitude=0.2, seed=4)
    return params, build_anchor(params, 0.1 * rng.standard_normal(arch.input_dim), batches,
                                group, eta_q_inner=0.2, aug=aug, lam=0.5)


def check_h_convexity(trials=300):
    rng = np.random.default_rng(3)
    params, anchor = _toy_anchor(rng, None, 3, None)
    n = params.n_params
    k = 3
    d = params.arch.input_dim

    def h_at(z):
        return h_value_grads(anchor, z[:n], z[n : n + k], z[n + k :])[0]

    for _ in range(trials):
        x = rng.standard_normal(n + k + d)
        y = rng.standard_normal(n + k + d)
        hx, hy = h_at(x), h_at(y)
        for lam in (0.25, 0.5, 0.75):
            if h_at(lam * x + (1 - lam) * y) > lam * hx + (1 - lam) * hy + 1e-9:
                return False
    return True


def check_plane_validity():
    rng = np.random.default_rng(4)
    params, anchor = _toy_anchor(rng, None, 3, None)
    n, k, d = params.n_params, 3, params.arch.input_dim
    eps = 0.05
    planes = []
    for i in range(10):
        while True:
            theta = anchor.theta_bar + rng.standard_normal(n)
            delta = anchor.delta_bar + rng.standard_normal(d)
            q = phi_linearized(anchor, theta, delta) + rng.standard_normal(k)
            h, *_ = h_value_grads(anchor, theta, q, delta)
            if h > eps:
                break
        plane = generate_plane(anchor, theta, q, delta, eps, 1.0, born_at=i)
        if abs(plane.evaluate(theta, q, delta) - (h - eps)) > 1e-10:
            return False
        planes.append(plane)
    accepted = 0
    while accepted < 50:
        theta = anchor.theta_bar + rng.standard_normal(n)
        delta = anchor.delta_bar + rng.standard_normal(d)
        q = phi_linearized(anchor, theta, delta) + 2 * eps * rng.uniform(-1, 1, k)
        h, *_ = h_value_grads(anchor, theta, q, delta)
        if h > eps:
            continue
        accepted += 1
        if any(pl.evaluate(theta, q, delta) > 1e-9 for pl in planes):
            return False
    return True


def check_penalized_objective_gradients():
    rng = np.random.default_rng(5)
    params, anchor = _toy_anchor(rng, None, 3, None)
    n, k, d = params.n_params, 3, params.arch.input_dim
    ps = PlaneSet(max_planes=8)
    for i in range(3):
        while True:
            theta = anchor.theta_bar + rng.standard_normal(n)
            delta = anchor.delta_bar + rng.standard_normal(d)
            q = phi_linearized(anchor, theta, delta) + rng.standard_normal(k)
            if h_value_grads(anchor, theta, q, delta)[0] > 0.05:
                break
        ps = ps.add(generate_plane(anchor, theta, q, delta, 0.05, 2.0, born_at=i))
    t0, q0, d0 = rng.standard_normal(n), rng.standard_normal(k), rng.standard_normal(d)

    theta, q, delta = rng.standard_normal(n), rng.standard_normal(k), rng.standard_normal(d)
    f1_grads = (theta - t0, q - q0, delta - d0)
    gF = F_grads(f1_grads, ps, theta, q, delta)

    def F_of(th, qq, dd):
        f1 = 0.5 * (np.sum((th - t0) ** 2) + np.sum((qq - q0) ** 2) + np.sum((dd - d0) ** 2))
        return F_value(f1, ps, th, qq, dd)

    ok = _close(gF[0], _central_diff(lambda th: F_of(th, q, delta), theta))
    ok = ok and _close(gF[1], _central_diff(lambda qq: F_of(theta, qq, delta), q))
    ok = ok and _close(gF[2], _central_diff(lambda dd: F_of(theta, q, dd), delta))
    return ok


CHECKS = (
    ("encoder gradients vs finite differences", check_encoder_gradients),
    ("loss gradients vs finite differences", check_loss_gradients),
    ("penalty gradients vs finite differences", check_penalty_gradients),
    ("penalized objective gradients vs finite differences", check_penalized_objective_gradients),
    ("feasibility surrogate midpoint convexity", check_h_convexity),
    ("cutting plane validity on feasible samples", check_plane_validity),
)


def run_selftest(print_fn=print):
    failures = 0
    for name, fn in CHECKS:
        ok = fn()
        print_fn(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1
    return failures
