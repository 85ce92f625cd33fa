"""Domain-weight machinery: the middle solver level.

The weight vector q lives near the probability simplex; feasibility is
enforced softly through the penalty P2, and the inner argmax over q is
replaced by a single linearized ascent step phi built from a first-order
Taylor expansion of the weighted loss at an anchor point. The constraint
surrogate h = ||q - phi(theta, delta)|| is convex in (theta, q, delta) for a
fixed anchor, which is what makes the cutting planes generated from it valid.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, InputError
from .losses import contrastive_loss
from .perturb import AscentTrajectory


@dataclass(frozen=True)
class GroupState:
    """Weights q, prior p, ball radius tau, and the P2 coefficients."""

    q: np.ndarray
    p: np.ndarray
    tau: float
    lambdas: tuple  # (l1, l2, l3, l4); l4 weights the tau-ball term
    tau_ball: bool = True
    squared_hinge: bool = False

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        p = np.asarray(self.p, dtype=np.float64).reshape(-1)
        if q.shape != p.shape:
            raise DimensionError(f"q length {q.shape[0]} != p length {p.shape[0]}")
        if q.shape[0] < 2:
            raise ConfigurationError("need at least 2 domains")
        if not np.all(np.isfinite(q)):
            raise InputError("q contains non-finite entries")
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise InputError("prior p must lie on the simplex")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigurationError("tau must be positive")
        lambdas = tuple(float(l) for l in self.lambdas)
        if len(lambdas) != 4 or any(l < 0 or not np.isfinite(l) for l in lambdas):
            raise ConfigurationError("lambdas must be 4 finite nonnegative reals")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def n_domains(self):
        return self.q.shape[0]

    def with_q(self, q):
        return GroupState(q=q, p=self.p, tau=self.tau, lambdas=self.lambdas,
                          tau_ball=self.tau_ball, squared_hinge=self.squared_hinge)


def uniform_prior(k):
    return np.full(k, 1.0 / k)


def simplex_project(v):
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InputError("cannot project non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    cond = u - (css - 1.0) / idx > 0
    hits = np.nonzero(cond)[0]
    if hits.size == 0:
        # mathematically cond[0] always holds; reaching here means the input
        # magnitudes exceeded float precision
        raise InputError("projection failed: input magnitudes overflow float precision")
    rho = int(hits[-1])
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def euclid_dist(p, q):
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise DimensionError(f"length mismatch {p.shape[0]} vs {q.shape[0]}")
    return float(np.linalg.norm(p - q))


def p2_q_gradient(q, lambdas, p, tau, tau_ball=True, squared_hinge=False):
    """Gradient in q of the P2 penalty (the delta term contributes nothing)."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    l1, l2, _, l4 = lambdas
    g = np.full_like(q, 2.0 * l1 * (q.sum() - 1.0))
    if squared_hinge:
        g = g - 2.0 * l2 * np.maximum(0.0, -q)
    else:
        g = g - l2 * (q < 0).astype(np.float64)
    if tau_ball and l4 > 0:
        dist = float(np.linalg.norm(p - q))
        excess = dist - tau
        if excess > 0:
            g = g + 2.0 * l4 * excess * (q - p) / dist
    return g


def p2_penalty(q, delta, traj: AscentTrajectory, lambdas, p, tau,
               tau_ball=True, squared_hinge=False):
    """Value and (q, delta) gradients of the group-level exterior penalty.

    l1 (sum q - 1)^2 + l2 sum max(0, -q_i)
    + l3 ||delta - delta0 - grad_sum||^2 + l4 (max(0, ||p - q|| - tau))^2,
    with the hinge subgradient taken as zero at kinks. The l2 hinge is linear
    as stated; squared_hinge switches it to max(0, -q_i)^2.
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if delta.shape != traj.delta0.shape:
        raise DimensionError(
            f"delta length {delta.shape[0]} != trajectory length {traj.delta0.shape[0]}"
        )
    l1, l2, l3, l4 = lambdas

    value = l1 * float(q.sum() - 1.0) ** 2
    neg = np.maximum(0.0, -q)
    value += l2 * float((neg**2).sum() if squared_hinge else neg.sum())

    resid = delta - traj.target
    value += l3 * float(resid @ resid)
    g_delta = 2.0 * l3 * resid

    if tau_ball and l4 > 0:
        excess = max(0.0, float(np.linalg.norm(p - q)) - tau)
        value += l4 * excess**2
    g_q = p2_q_gradient(q, lambdas, p, tau, tau_ball=tau_ball, squared_hinge=squared_hinge)
    return value, g_q, g_delta


@dataclass(frozen=True)
class LinearizationAnchor:
    """First-order expansion of the weighted loss at (theta_bar, delta_bar).

    Rows of the Jacobians are the per-domain theta/delta gradients of the
    entries of loss_bar; phi and h are exact affine consequences of these.
    """

    theta_bar: np.ndarray
    delta_bar: np.ndarray
    loss_bar: np.ndarray      # (K,)
    j_theta: np.ndarray       # (K, N)
    j_delta: np.ndarray       # (K, D)
    q0: np.ndarray            # (K,)
    eta_q_inner: float
    p2_grad_q0: np.ndarray = field(default=None)  # grad_q P2 at q0
    inner_sign: float = 1.0   # +1: ascent step on the inner maximization

    def __post_init__(self):
        for name in ("theta_bar", "delta_bar", "loss_bar", "j_theta", "j_delta", "q0"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.p2_grad_q0 is None:
            object.__setattr__(self, "p2_grad_q0", np.zeros_like(self.q0))
        k = self.loss_bar.shape[0]
        if self.j_theta.shape != (k, self.theta_bar.shape[0]):
            raise DimensionError("j_theta shape inconsistent with anchor")
        if self.j_delta.shape != (k, self.delta_bar.shape[0]):
            raise DimensionError("j_delta shape inconsistent with anchor")

    @property
    def n_domains(self):
        return self.loss_bar.shape[0]


def build_anchor(params, delta, domain_batches, group: GroupState, eta_q_inner,
                 aug, lam, q0=None, inner_sign=1.0) -> LinearizationAnchor:
    """Evaluate per-domain losses and gradients at the current iterate."""
    if not domain_batches:
        raise InputError("need at least one domain batch")
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    loss_bar, j_theta, j_delta = [], [], []
    for batch in domain_batches:
        out = contrastive_loss(params, batch, delta, aug, lam)
        loss_bar.append(out.value)
        j_theta.append(out.grad_theta)
        j_delta.append(out.grad_delta)
    q0 = group.p.copy() if q0 is None else np.asarray(q0, dtype=np.float64).reshape(-1)
    p2_grad = p2_q_gradient(q0, group.lambdas, group.p, group.tau,
                            tau_ball=group.tau_ball, squared_hinge=group.squared_hinge)
    return LinearizationAnchor(
        theta_bar=params.theta.copy(),
        delta_bar=delta,
        loss_bar=np.array(loss_bar),
        j_theta=np.array(j_theta),
        j_delta=np.array(j_delta),
        q0=q0,
        eta_q_inner=float(eta_q_inner),
        p2_grad_q0=p2_grad,
        inner_sign=float(inner_sign),
    )


def phi_linearized(anchor: LinearizationAnchor, theta, delta):
    """One inner step on the linearized weighted loss: affine in (theta, delta)."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if theta.shape != anchor.theta_bar.shape:
        raise DimensionError(f"theta length {theta.shape[0]} != {anchor.theta_bar.shape[0]}")
    if delta.shape != anchor.delta_bar.shape:
        raise DimensionError(f"delta length {delta.shape[0]} != {anchor.delta_bar.shape[0]}")
    grad_q = (
        anchor.loss_bar
        + anchor.j_theta @ (theta - anchor.theta_bar)
        + anchor.j_delta @ (delta - anchor.delta_bar)
        - anchor.p2_grad_q0
    )
    return anchor.q0 + anchor.inner_sign * anchor.eta_q_inner * grad_q


def h_value_grads(anchor: LinearizationAnchor, theta, q, delta):
    """h = ||q - phi(theta, delta)|| with chain-rule gradients.

    At h = 0 every gradient is the zero subgradient.
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape != anchor.q0.shape:
        raise DimensionError(f"q length {q.shape[0]} != {anchor.q0.shape[0]}")
    phi = phi_linearized(anchor, theta, delta)
    resid = q - phi
    h = float(np.linalg.norm(resid))
    if h == 0.0:
        zt = np.zeros_like(anchor.theta_bar)
        zd = np.zeros_like(anchor.delta_bar)
        return 0.0, zt, np.zeros_like(q), zd
    u = resid / h
    coeff = anchor.inner_sign * anchor.eta_q_inner
    grad_theta = -coeff * (anchor.j_theta.T @ u)
    grad_delta = -coeff * (anchor.j_delta.T @ u)
    return h, grad_theta, u, grad_delta
