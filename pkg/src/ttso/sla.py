"""Stratified localization driver.

One outer iteration updates (theta, q, delta) simultaneously by gradient
descent on the penalized objective F = f1 + plane penalties, using gradients
evaluated at the pre-update iterate. Every ``plane_cadence`` iterations the
driver rebuilds the linearization anchor, runs the inner perturbation ascent,
evaluates the feasibility surrogate h at the refreshed point, and cuts the
point off when h exceeds the tolerance.

The driver is generic over an objective bundle. A bundle provides:

  init_state()                          -> (theta, q, delta)
  begin_iteration(t, delta)             -> delta   (e.g. base-noise refresh)
  f1_value_grads(theta, q, delta, t)    -> (f1, g_theta, g_q, g_delta)
  delta_step(delta, g_delta, eta)       -> delta'  (descent in the underlying
                                           delta parameterization)
  refresh(theta, q, delta, t)           -> delta'  (anchor rebuild + inner
                                           ascent; may move delta)
  anchor                                -> LinearizationAnchor or None

``QuadraticBundle`` is the deterministic/noisy toy instance used for the
convergence diagnostics; ``TrilevelBundle`` wires in the real losses.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .cutplane import F_grads, F_value, PlaneSet, generate_plane, prune_planes
from .encoders import EncoderParams
from .errors import ConfigurationError, InputError, NumericalError
from .group import GroupState, build_anchor, h_value_grads, uniform_prior
from .losses import alignment_loss, contrastive_loss
from .perturb import PerturbationState, init_gmm, third_level_ascent
from .seeding import derive_rng

STATUS_MAX_ITERS = "MaxIters"
STATUS_STATIONARY = "Stationary"
STATUS_NUMERICAL_ERROR = "NumericalError"


def grad_norm_sq(grad_theta, grad_q, grad_delta) -> float:
    """Stationarity measure: sum of squared norms of the three blocks."""
    return float(
        np.sum(np.square(grad_theta)) + np.sum(np.square(grad_q)) + np.sum(np.square(grad_delta))
    )


def schedule_step(t, t1_total, warmup, warmup_value=None) -> float:
    """Constant 1/sqrt(T1 - t1) step size; warm-up iterations may override."""
    if t1_total <= warmup:
        raise ConfigurationError(f"need warmup < total iterations, got {warmup} >= {t1_total}")
    base = 1.0 / np.sqrt(t1_total - warmup)
    if t < warmup and warmup_value is not None:
        return float(warmup_value)
    return float(base)


@dataclass(frozen=True)
class SLAConfig:
    t1_total: int                 # outer iterations T1
    warmup: int = 1               # index t1 before which stationarity is not checked
    plane_cadence: int = 5        # k
    epsilon_h: float = 0.05       # feasibility tolerance triggering new planes
    epsilon_stat: float = 1e-6    # stationarity threshold on grad_norm_sq
    eta_theta: object = "schedule"
    eta_q: object = "schedule"
    eta_delta: object = "schedule"
    t3: int = 3
    eta_delta_inner: float = 0.05
    eta_q_inner: float = 0.1
    batch_size: int = 8
    seed: int = 0
    lambda_plane: float = 10.0
    max_planes: int = 64
    update_order: str = "jacobi"  # or "gauss_seidel"
    record_plane_snapshots: bool = False

    def __post_init__(self):
        if self.t1_total < 0:
            raise ConfigurationError("t1_total must be >= 0")
        if self.t1_total > 0 and not 0 <= self.warmup < self.t1_total:
            raise ConfigurationError(f"need 0 <= warmup < t1_total, got {self.warmup}, {self.t1_total}")
        if self.plane_cadence < 1:
            raise ConfigurationError("plane_cadence must be >= 1")
        if self.epsilon_h <= 0 or self.epsilon_stat <= 0:
            raise ConfigurationError("epsilons must be positive")
        if self.update_order not in ("jacobi", "gauss_seidel"):
            raise ConfigurationError(f"unknown update order {self.update_order!r}")
        for name in ("eta_theta", "eta_q", "eta_delta"):
            v = getattr(self, name)
            if v != "schedule" and not (np.isscalar(v) and np.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be 'schedule' or a positive number")

    def step_size(self, name, t):
        v = getattr(self, name)
        if v == "schedule":
            return schedule_step(t, self.t1_total, self.warmup)
        return float(v)


@dataclass(frozen=True)
class TraceRecord:
    t: int
    f_value: float
    f1_value: float
    h_value: float          # nan until the first anchor exists
    grad_norm_sq: float
    n_planes: int
    eta_theta: float
    eta_q: float
    eta_delta: float


@dataclass
class SolverTrace:
    records: list = field(default_factory=list)
    status: str = STATUS_MAX_ITERS
    stop_index: int = -1

    def append(self, record: TraceRecord):
        if self.records and record.t <= self.records[-1].t:
            raise ValueError("trace records must be strictly increasing in t")
        self.records.append(record)


@dataclass(frozen=True)
class SLAResult:
    theta: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    trace: SolverTrace
    planes: PlaneSet
    plane_snapshots: tuple = ()


def _bundle_h(bundle, theta, q, delta):
    anchor = bundle.anchor
    if anchor is None:
        return float("nan")
    return h_value_grads(anchor, theta, q, delta)[0]


def sla_step(theta, q, delta, bundle, planes, etas, t, order="jacobi"):
    """One simultaneous update of the three blocks.

    Gradients are evaluated at the incoming iterate (Jacobi); the
    Gauss-Seidel option re-evaluates between blocks on the same minibatch.
    Returns the new blocks plus the pre-update diagnostics (f1, F, gns).
    """
    eta_t, eta_q, eta_d = etas
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(q)) and np.all(np.isfinite(delta))):
        raise NumericalError("iterate left the finite range", iteration=t)
    f1, g1t, g1q, g1d = bundle.f1_value_grads(theta, q, delta, t)
    if not (np.isfinite(f1) and np.all(np.isfinite(g1t)) and np.all(np.isfinite(g1q))
            and np.all(np.isfinite(g1d))):
        raise NumericalError("non-finite objective or gradient", iteration=t)
    f_val = F_value(f1, planes, theta, q, delta)
    gft, gfq, gfd = F_grads((g1t, g1q, g1d), planes, theta, q, delta)
    gns = grad_norm_sq(gft, gfq, gfd)
    if not (np.isfinite(f_val) and np.isfinite(gns)):
        raise NumericalError("non-finite objective or gradient", iteration=t)

    if order == "jacobi":
        theta_new = theta - eta_t * gft
        q_new = q - eta_q * gfq
        delta_new = bundle.delta_step(delta, gfd, eta_d)
    else:
        theta_new = theta - eta_t * gft
        _, g1tb, g1qb, g1db = bundle.f1_value_grads(theta_new, q, delta, t)
        _, gfq, _ = F_grads((g1tb, g1qb, g1db), planes, theta_new, q, delta)
        q_new = q - eta_q * gfq
        _, g1tc, g1qc, g1dc = bundle.f1_value_grads(theta_new, q_new, delta, t)
        _, _, gfd = F_grads((g1tc, g1qc, g1dc), planes, theta_new, q_new, delta)
        delta_new = bundle.delta_step(delta, gfd, eta_d)
    return theta_new, q_new, delta_new, f1, f_val, gns


def sla_run(config: SLAConfig, bundle) -> SLAResult:
    """Run the full driver; see the module docstring for the schedule."""
    theta, q, delta = bundle.init_state()
    theta = np.asarray(theta, dtype=np.float64).copy()
    q = np.asarray(q, dtype=np.float64).copy()
    delta = np.asarray(delta, dtype=np.float64).copy()
    planes = PlaneSet(max_planes=config.max_planes)
    trace = SolverTrace()
    snapshots = []

    for t in range(config.t1_total):
        etas = tuple(config.step_size(n, t) for n in ("eta_theta", "eta_q", "eta_delta"))
        try:
            # overflow inside a diverging run shows up as inf and is caught
            # by the finiteness checks; the warnings themselves are noise
            with np.errstate(over="ignore", invalid="ignore"):
                delta = bundle.begin_iteration(t, delta)
                theta_new, q_new, delta_new, f1, f_val, gns = sla_step(
                    theta, q, delta, bundle, planes, etas, t, order=config.update_order
                )
        except (NumericalError, InputError):
            # states inside the loop are solver-produced: treat non-finite
            # inputs as numerical failure with a partial trace
            trace.status = STATUS_NUMERICAL_ERROR
            trace.stop_index = t
            return SLAResult(theta, q, delta, trace, planes, tuple(snapshots))

        stop_here = t > config.warmup and gns <= config.epsilon_stat
        if not stop_here:
            theta, q, delta = theta_new, q_new, delta_new
            if t % config.plane_cadence == 0:
                delta = bundle.refresh(theta, q, delta, t)
                anchor = bundle.anchor
                h_val = h_value_grads(anchor, theta, q, delta)[0] if anchor is not None else 0.0
                if h_val > config.epsilon_h:
                    plane = generate_plane(
                        anchor, theta, q, delta, config.epsilon_h, config.lambda_plane, born_at=t
                    )
                    planes = prune_planes(planes.add(plane), theta, q, delta)
                    if config.record_plane_snapshots:
                        snapshots.append((t, planes))

        h_trace = _bundle_h(bundle, theta, q, delta)
        trace.append(
            TraceRecord(
                t=t,
                f_value=f_val,
                f1_value=f1,
                h_value=h_trace,
                grad_norm_sq=gns,
                n_planes=len(planes),
                eta_theta=etas[0],
                eta_q=etas[1],
                eta_delta=etas[2],
            )
        )
        if stop_here:
            trace.status = STATUS_STATIONARY
            trace.stop_index = t
            return SLAResult(theta, q, delta, trace, planes, tuple(snapshots))

    trace.status = STATUS_MAX_ITERS
    trace.stop_index = config.t1_total - 1
    return SLAResult(theta, q, delta, trace, planes, tuple(snapshots))


def solve_restricted(bundle, planes: PlaneSet, x0_blocks, tol=1e-8):
    """Solve min F over the fixed plane set to the given tolerance.

    Requires a deterministic bundle (full-batch / noise-free); used by the
    monotone-convergence diagnostic, which compares these restricted optima
    across plane-addition epochs.
    """
    theta0, q0, delta0 = (np.asarray(b, dtype=np.float64) for b in x0_blocks)
    n, k = theta0.size, q0.size

    def split(x):
        return x[:n], x[n : n + k], x[n + k :]

    def fun_grad(x):
        theta, q, delta = split(x)
        f1, g1t, g1q, g1d = bundle.f1_value_grads(theta, q, delta, None)
        value = F_value(f1, planes, theta, q, delta)
        gt, gq, gd = F_grads((g1t, g1q, g1d), planes, theta, q, delta)
        return value, np.concatenate([gt, gq, gd])

    x0 = np.concatenate([theta0, q0, delta0])
    res = minimize(
        fun_grad, x0, jac=True, method="L-BFGS-B",
        options={"ftol": tol * 1e-2, "gtol": 1e-10, "maxiter": 2000},
    )
    theta, q, delta = split(res.x)
    return float(res.fun), (theta, q, delta)


class QuadraticBundle:
    """Strongly convex toy objective with the real h machinery.

    f1 is a separable quadratic centered at seeded targets; the anchor is a
    fixed random linearization, so h = ||q - phi(theta, delta)|| exercises
    the same code path the full problem uses. Optional seeded Gaussian
    gradient noise turns it into the stochastic instance the step-size
    diagnostics need. The quadratic minimizer is placed away from the
    feasible region so plane generation keeps firing.
    """

    def __init__(self, n_theta=6, n_q=3, n_delta=4, seed=0, noise_scale=0.0,
                 curvature=1.0, eta_q_inner=0.25, anchor_scale=0.5):
        self.n_theta, self.n_q, self.n_delta = n_theta, n_q, n_delta
        self.seed = seed
        self.noise_scale = float(noise_scale)
        self.curvature = float(curvature)
        self.true_gns_log = []  # noise-free gradient norms, for rate diagnostics
        rng = derive_rng(seed, "quadratic_bundle")
        self.theta_star = rng.standard_normal(n_theta)
        self.delta_star = rng.standard_normal(n_delta)
        from .group import LinearizationAnchor  # local to avoid cycle at import time

        self._anchor = LinearizationAnchor(
            theta_bar=rng.standard_normal(n_theta),
            delta_bar=rng.standard_normal(n_delta),
            loss_bar=rng.standard_normal(n_q),
            j_theta=anchor_scale * rng.standard_normal((n_q, n_theta)),
            j_delta=anchor_scale * rng.standard_normal((n_q, n_delta)),
            q0=uniform_prior(n_q),
            eta_q_inner=eta_q_inner,
        )
        # target q far from the feasible manifold q = phi(theta*, delta*)
        from .group import phi_linearized

        self.q_star = phi_linearized(self._anchor, self.theta_star, self.delta_star) + 2.0 * np.sign(
            rng.standard_normal(n_q)
        )
        self._x0 = (
            self.theta_star + rng.standard_normal(n_theta),
            self.q_star + rng.standard_normal(n_q),
            self.delta_star + rng.standard_normal(n_delta),
        )

    @property
    def anchor(self):
        return self._anchor

    def init_state(self):
        return tuple(x.copy() for x in self._x0)

    def begin_iteration(self, t, delta):
        return delta

    def f1_value_grads(self, theta, q, delta, t):
        c = self.curvature
        gt = c * (theta - self.theta_star)
        gq = c * (q - self.q_star)
        gd = c * (delta - self.delta_star)
        value = 0.5 * (gt @ gt + gq @ gq + gd @ gd) / c
        if t is not None:
            self.true_gns_log.append(grad_norm_sq(gt, gq, gd))
        if self.noise_scale > 0.0 and t is not None:
            rng = derive_rng(self.seed, "gradient_noise", t)
            gt = gt + self.noise_scale * rng.standard_normal(self.n_theta)
            gq = gq + self.noise_scale * rng.standard_normal(self.n_q)
            gd = gd + self.noise_scale * rng.standard_normal(self.n_delta)
        return float(value), gt, gq, gd

    def delta_step(self, delta, g_delta, eta):
        return delta - eta * g_delta

    def refresh(self, theta, q, delta, t):
        return delta


class EpochSampler:
    """Without-replacement minibatch stream with per-epoch reshuffling."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._queue = []

    def next_indices(self):
        if len(self._queue) < self.batch_size:
            self._queue = list(self.rng.permutation(self.n))
        out = self._queue[: self.batch_size]
        del self._queue[: self.batch_size]
        return np.array(out, dtype=np.intp)


class TrilevelBundle:
    """The full objective: per-domain contrastive losses, mixture-backed
    perturbation, anchored h. Owns the perturbation state so the driver's
    delta updates land in the right parameterization."""

    def __init__(self, params: EncoderParams, domain_windows, aug, lam,
                 group: GroupState, config: SLAConfig, perturb_mode="gmm_reparam",
                 n_components=2, c1=1.0, c2=1.0, rho=(10.0, 10.0, 10.0, 10.0),
                 sigma_init=0.05, align_only_f1=False, inner_sign=1.0):
        if len(domain_windows) != group.n_domains:
            raise ConfigurationError("domain count does not match group state")
        self.params_template = params
        self.domains = [np.asarray(w, dtype=np.float64) for w in domain_windows]
        self.aug = aug
        self.lam = float(lam)
        self.group = group
        self.config = config
        self.c1, self.c2, self.rho = float(c1), float(c2), tuple(rho)
        self.align_only_f1 = bool(align_only_f1)
        self.inner_sign = float(inner_sign)
        self.dim_delta = params.arch.input_dim

        seed = config.seed
        if perturb_mode == "gmm_reparam":
            gmm = init_gmm(n_components, self.dim_delta, derive_rng(seed, "gmm_init"), sigma_init)
            self.pstate = PerturbationState(mode="gmm_reparam", gmm=gmm)
        else:
            self.pstate = PerturbationState(mode="direct", delta_direct=np.zeros(self.dim_delta))
        self.samplers = [
            EpochSampler(len(w), config.batch_size, derive_rng(seed, "minibatch", i))
            for i, w in enumerate(self.domains)
        ]
        self._anchor = None
        self._trajectory = None

    @property
    def anchor(self):
        return self._anchor

    @property
    def trajectory(self):
        return self._trajectory

    def init_state(self):
        return (
            self.params_template.theta.copy(),
            self.group.p.copy(),
            self.pstate.delta(),
        )

    def begin_iteration(self, t, delta):
        self.pstate = self.pstate.refresh_noise(derive_rng(self.config.seed, "base_noise", t))
        return self.pstate.delta()

    def _loss(self, params, batch, delta):
        if self.align_only_f1:
            return alignment_loss(params, batch, delta, self.aug)
        return contrastive_loss(params, batch, delta, self.aug, self.lam)

    def f1_on_batches(self, theta, q, delta, batches):
        """f1 = sum_i q_i * loss_i with assembled gradients; deterministic."""
        params = self.params_template.with_theta(theta)
        g_theta = np.zeros_like(theta)
        g_delta = np.zeros(self.dim_delta)
        losses = np.empty(len(batches))
        for i, batch in enumerate(batches):
            out = self._loss(params, batch, delta)
            losses[i] = out.value
            g_theta += q[i] * out.grad_theta
            g_delta += q[i] * out.grad_delta
        value = float(q @ losses)
        return value, g_theta, losses, g_delta

    def f1_value_grads(self, theta, q, delta, t):
        if t is None:
            batches = self.domains  # full-batch deterministic path
        else:
            batches = [w[s.next_indices()] for w, s in zip(self.domains, self.samplers)]
            self._last_batches = batches
        return self.f1_on_batches(theta, q, delta, batches)

    def delta_step(self, delta, g_delta, eta):
        self.pstate = self.pstate.step(g_delta, eta, sign=-1.0)
        return self.pstate.delta()

    def refresh(self, theta, q, delta, t):
        """Anchor rebuild then inner ascent, both on full domain batches.

        The anchor linearizes at the pre-ascent iterate; the feasibility
        surrogate is then evaluated at the ascended delta through the
        anchor's linear delta term.
        """
        params = self.params_template.with_theta(theta)
        self._anchor = build_anchor(
            params, delta, self.domains, self.group,
            eta_q_inner=self.config.eta_q_inner, aug=self.aug, lam=self.lam,
            inner_sign=self.inner_sign,
        )
        self.pstate, delta_new, self._trajectory = third_level_ascent(
            params, q, self.pstate, self.domains, self.aug,
            t3=self.config.t3, eta_delta=self.config.eta_delta_inner,
            c1=self.c1, c2=self.c2, rho=self.rho,
        )
        return delta_new
