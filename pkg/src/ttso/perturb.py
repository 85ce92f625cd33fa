"""Worst-case input perturbations: the innermost solver level.

The shared perturbation template ``delta`` is either the deterministic image
of a diagonal Gaussian mixture (mode ``gmm_reparam``: delta is the
pi-weighted sum of mu_m + sigma_m * eps_m with frozen base noise eps) or a
free vector (mode ``direct``). The exterior penalty keeps the mixture inside
its norm/simplex constraints, and a short gradient ascent on the weighted
alignment loss moves delta toward the worst case; the recorded trajectory is
what the group level's penalty anchors against.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .losses import alignment_loss

MODES = ("gmm_reparam", "direct")
SIGMA_MIN = 1e-6


@dataclass(frozen=True)
class GMMParams:
    """Diagonal Gaussian mixture over perturbations, plus frozen base noise."""

    pi: np.ndarray        # (Mc,)
    mu: np.ndarray        # (Mc, D)
    sigma: np.ndarray     # (Mc, D), clamped >= SIGMA_MIN
    base_noise: np.ndarray  # (Mc, D), refreshed once per outer iteration

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64).reshape(-1)
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        noise = np.asarray(self.base_noise, dtype=np.float64)
        mc = pi.shape[0]
        if mu.shape != sigma.shape or mu.shape != noise.shape or mu.shape[0] != mc:
            raise InputError(
                f"inconsistent mixture shapes pi={pi.shape} mu={mu.shape} "
                f"sigma={sigma.shape} noise={noise.shape}"
            )
        for name, arr in (("pi", pi), ("mu", mu), ("sigma", sigma), ("base_noise", noise)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite entries")
        sigma = np.maximum(sigma, SIGMA_MIN)
        for arr in (pi, mu, sigma, noise):
            arr.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "base_noise", noise)

    @property
    def n_components(self):
        return self.pi.shape[0]

    @property
    def dim(self):
        return self.mu.shape[1]

    def with_base_noise(self, rng):
        return GMMParams(self.pi, self.mu, self.sigma, rng.standard_normal(self.mu.shape))


def init_gmm(n_components, dim, rng, sigma_init=0.05):
    """Uniform weights, zero means, small scales, seeded base noise."""
    return GMMParams(
        pi=np.full(n_components, 1.0 / n_components),
        mu=np.zeros((n_components, dim)),
        sigma=np.full((n_components, dim), float(sigma_init)),
        base_noise=rng.standard_normal((n_components, dim)),
    )


def derive_delta(gmm: GMMParams) -> np.ndarray:
    """delta = sum_m pi_m (mu_m + sigma_m * eps_m) with frozen eps."""
    return gmm.pi @ (gmm.mu + gmm.sigma * gmm.base_noise)


def delta_pullback(gmm: GMMParams, g_delta):
    """Chain a delta-space gradient back onto (pi, mu, sigma)."""
    g_delta = np.asarray(g_delta, dtype=np.float64).reshape(-1)
    comp = gmm.mu + gmm.sigma * gmm.base_noise       # (Mc, D)
    g_pi = comp @ g_delta                            # (Mc,)
    g_mu = gmm.pi[:, None] * g_delta[None, :]        # (Mc, D)
    g_sigma = gmm.pi[:, None] * gmm.base_noise * g_delta[None, :]
    return g_pi, g_mu, g_sigma


def p3_penalty(gmm: GMMParams, c1, c2, rho):
    """Exterior penalty for the mixture constraints.

    rho1 (max(0, ||mu||F - c1))^2 + rho2 (max(0, ||sigma||F - c2))^2
    + rho3 (sum pi - 1)^2 + rho4 sum_m max(0, -pi_m)^2.
    Subgradients at hinge kinks are taken as zero.
    """
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    if rho.shape[0] != 4 or np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise InputError("rho must be 4 finite nonnegative penalty coefficients")
    g_pi = np.zeros_like(gmm.pi)
    g_mu = np.zeros_like(gmm.mu)
    g_sigma = np.zeros_like(gmm.sigma)
    value = 0.0

    mu_norm = float(np.linalg.norm(gmm.mu))
    excess = mu_norm - c1
    if excess > 0:
        value += rho[0] * excess**2
        g_mu = rho[0] * 2.0 * excess * gmm.mu / mu_norm

    sig_norm = float(np.linalg.norm(gmm.sigma))
    excess = sig_norm - c2
    if excess > 0:
        value += rho[1] * excess**2
        g_sigma = rho[1] * 2.0 * excess * gmm.sigma / sig_norm

    gap = float(gmm.pi.sum() - 1.0)
    value += rho[2] * gap**2
    g_pi = g_pi + rho[2] * 2.0 * gap

    neg = np.maximum(0.0, -gmm.pi)
    value += rho[3] * float(np.sum(neg**2))
    g_pi = g_pi - rho[3] * 2.0 * neg
    return value, (g_pi, g_mu, g_sigma)


def p3_penalty_direct(delta, c1, c2, rho1):
    """Degenerate penalty for direct mode: one norm ball of radius c1 + c2."""
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(delta))
    excess = norm - (c1 + c2)
    if excess <= 0:
        return 0.0, np.zeros_like(delta)
    return rho1 * excess**2, rho1 * 2.0 * excess * delta / norm


@dataclass(frozen=True)
class AscentTrajectory:
    """Start point and accumulated ascent increments of one inner run."""

    delta0: np.ndarray
    grad_sum: np.ndarray
    steps: int

    def __post_init__(self):
        d0 = np.asarray(self.delta0, dtype=np.float64).reshape(-1)
        gs = np.asarray(self.grad_sum, dtype=np.float64).reshape(-1)
        if d0.shape != gs.shape:
            raise InputError("trajectory delta0 and grad_sum lengths differ")
        d0.flags.writeable = False
        gs.flags.writeable = False
        object.__setattr__(self, "delta0", d0)
        object.__setattr__(self, "grad_sum", gs)

    @property
    def target(self):
        """The point the group-level penalty anchors delta to."""
        return self.delta0 + self.grad_sum


def zero_trajectory(dim):
    return AscentTrajectory(np.zeros(dim), np.zeros(dim), 0)


@dataclass(frozen=True)
class PerturbationState:
    """Mode-dispatching holder for the perturbation variable.

    gmm_reparam: state is the mixture; delta is its deterministic image and
    delta-space gradients are pulled back onto (pi, mu, sigma).
    direct: state is the flat delta vector itself.
    """

    mode: str
    gmm: GMMParams = None
    delta_direct: np.ndarray = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown perturbation mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "gmm_reparam":
            if self.gmm is None:
                raise InputError("gmm_reparam mode requires mixture parameters")
        else:
            if self.delta_direct is None:
                raise InputError("direct mode requires a delta vector")
            d = np.asarray(self.delta_direct, dtype=np.float64).reshape(-1).copy()
            d.flags.writeable = False
            object.__setattr__(self, "delta_direct", d)

    @property
    def dim(self):
        return self.gmm.dim if self.mode == "gmm_reparam" else self.delta_direct.shape[0]

    def delta(self):
        if self.mode == "gmm_reparam":
            return derive_delta(self.gmm)
        return self.delta_direct.copy()

    def step(self, g_delta, eta, sign=1.0, g_gmm_extra=None):
        """One gradient step of size eta, ascent for sign=+1.

        g_gmm_extra, when given, is an additional (g_pi, g_mu, g_sigma)
        gradient applied directly in mixture space (the penalty part of the
        inner ascent objective).
        """
        if self.mode == "direct":
            return PerturbationState(mode="direct", delta_direct=self.delta_direct + sign * eta * g_delta)
        g_pi, g_mu, g_sigma = delta_pullback(self.gmm, g_delta)
        if g_gmm_extra is not None:
            g_pi = g_pi + g_gmm_extra[0]
            g_mu = g_mu + g_gmm_extra[1]
            g_sigma = g_sigma + g_gmm_extra[2]
        gmm = GMMParams(
            pi=self.gmm.pi + sign * eta * g_pi,
            mu=self.gmm.mu + sign * eta * g_mu,
            sigma=self.gmm.sigma + sign * eta * g_sigma,  # clamped in the constructor
            base_noise=self.gmm.base_noise,
        )
        return PerturbationState(mode="gmm_reparam", gmm=gmm)

    def refresh_noise(self, rng):
        if self.mode == "direct":
            return self
        return PerturbationState(mode="gmm_reparam", gmm=self.gmm.with_base_noise(rng))


def weighted_align_delta_grad(params, q, state_delta, domain_batches, aug, lam_unused=None):
    """Value and delta-gradient of sum_i q_i * alignment(theta, delta; D_i)."""
    value = 0.0
    grad = np.zeros_like(state_delta)
    for qi, batch in zip(q, domain_batches):
        out = alignment_loss(params, batch, state_delta, aug)
        value += qi * out.value
        grad += qi * out.grad_delta
    return value, grad


def third_level_ascent(params, q, state: PerturbationState, domain_batches, aug,
                       t3, eta_delta, c1, c2, rho):
    """Run t3 ascent steps on the inner objective; return the new state,
    its delta, and the trajectory the group-level penalty consumes.

    The inner objective is the q-weighted alignment loss minus the mixture
    penalty. In gmm_reparam mode the penalty acts in mixture space; in direct
    mode its degenerate form acts on delta itself and therefore enters the
    recorded delta-space gradient.
    """
    if t3 < 0:
        raise InputError("t3 must be nonnegative")
    delta0 = state.delta()
    grad_sum = np.zeros_like(delta0)
    for it in range(t3):
        delta = state.delta()
        _, g_delta = weighted_align_delta_grad(params, q, delta, domain_batches, aug)
        if state.mode == "direct":
            _, g_pen = p3_penalty_direct(delta, c1, c2, rho[0])
            g_delta = g_delta - g_pen
            g_extra = None
        else:
            _, (g_pi, g_mu, g_sigma) = p3_penalty(state.gmm, c1, c2, rho)
            g_extra = (-g_pi, -g_mu, -g_sigma)
        if not np.all(np.isfinite(g_delta)):
            raise NumericalError("non-finite inner ascent gradient", iteration=it)
        grad_sum += eta_delta * g_delta
        state = state.step(g_delta, eta_delta, sign=1.0, g_gmm_extra=g_extra)
    trajectory = AscentTrajectory(delta0=delta0, grad_sum=grad_sum, steps=t3)
    return state, state.delta(), trajectory
