"""Downstream evaluation: probes, constrained fine-tuning, and the
leave-one-domain-out benchmark with ERM / GroupDRO / trilevel training.

Every method consumes identical domain splits, standardization, and seed
streams; the config hash recorded in a report covers exactly that shared
surface so cross-method comparisons can be checked for alignment.
"""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import DomainDataset, standardize_domain
from .encoders import Architecture, EncoderParams, forward_batch, init_params
from .errors import ConfigurationError, InputError, NumericalError
from .group import GroupState, simplex_project, uniform_prior
from .losses import AugmentationSpec, contrastive_loss
from .sla import SLAConfig, TrilevelBundle, sla_run
from .seeding import derive_rng, derive_seed

METHODS = ("erm", "groupdro", "ttso")


@dataclass(frozen=True)
class ProbeHead:
    weights: np.ndarray  # (C, M)
    bias: np.ndarray     # (C,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise InputError("head shapes inconsistent")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InputError("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    def logits(self, reps):
        return reps @ self.weights.T + self.bias


def _representations(params, windows):
    return forward_batch(params, np.asarray(windows, dtype=np.float64))


def init_head(n_classes, repr_dim, seed):
    rng = derive_rng(seed, "probe_init")
    return ProbeHead(weights=0.01 * rng.standard_normal((n_classes, repr_dim)),
                     bias=np.zeros(n_classes))


def _head_loss_grads(head, reps, labels):
    n = len(labels)
    logits = head.logits(reps)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    value = float(-log_probs[np.arange(n), labels].mean())
    g_logits = np.exp(log_probs)
    g_logits[np.arange(n), labels] -= 1.0
    g_logits /= n
    return value, g_logits.T @ reps, g_logits.sum(axis=0)


def train_probe(params: EncoderParams, windows, labels, n_classes,
                epochs=200, lr=0.5, seed=0):
    """Full-batch gradient descent on cross-entropy over frozen representations."""
    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) == 0:
        raise InputError("empty probe training set")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise InputError("probe labels out of range")
    reps = _representations(params, windows)
    head = init_head(n_classes, reps.shape[1], seed)
    for _ in range(epochs):
        _, g_w, g_b = _head_loss_grads(head, reps, labels)
        head = ProbeHead(weights=head.weights - lr * g_w, bias=head.bias - lr * g_b)
    return head


def probe_loss_trace(params, windows, labels, n_classes, epochs, lr, seed=0):
    """Per-epoch training loss; diagnostic twin of train_probe."""
    labels = np.asarray(labels, dtype=np.intp)
    reps = _representations(params, windows)
    head = init_head(n_classes, reps.shape[1], seed)
    trace = []
    for _ in range(epochs):
        value, g_w, g_b = _head_loss_grads(head, reps, labels)
        trace.append(value)
        head = ProbeHead(weights=head.weights - lr * g_w, bias=head.bias - lr * g_b)
    return trace


def constrained_finetune(params0: EncoderParams, windows, labels, n_classes,
                         gamma, epochs=50, lr=0.05, seed=0):
    """Fine-tune the encoder (and a fresh head) on classification loss while
    keeping ||theta - theta0|| <= gamma by Euclidean projection each step."""
    if gamma < 0:
        raise InputError("gamma must be nonnegative")
    labels = np.asarray(labels, dtype=np.intp)
    windows = np.asarray(windows, dtype=np.float64)
    theta0 = params0.theta.copy()
    params = params0
    head = init_head(n_classes, params.arch.repr_dim, seed)
    from .encoders import batch_vjp, forward_batch_cached

    n = len(labels)
    for _ in range(epochs):
        reps, cache = forward_batch_cached(params, windows)
        logits = head.logits(reps)
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        g_logits = probs
        g_logits[np.arange(n), labels] -= 1.0
        g_logits /= n
        g_w = g_logits.T @ reps
        g_b = g_logits.sum(axis=0)
        g_theta, _ = batch_vjp(params, cache, g_logits @ head.weights)
        theta = params.theta - lr * g_theta
        drift = theta - theta0
        norm = float(np.linalg.norm(drift))
        if norm > gamma:
            theta = theta0 + (gamma / norm) * drift if norm > 0 else theta0
        params = params.with_theta(theta)
        head = ProbeHead(weights=head.weights - lr * g_w, bias=head.bias - lr * g_b)
    return params, head


def evaluate_accuracy(params: EncoderParams, head: ProbeHead, windows, labels) -> float:
    """Fraction of argmax-correct predictions; argmax ties resolve to the
    lowest class index."""
    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) == 0:
        raise InputError("empty evaluation set")
    reps = _representations(params, windows)
    preds = np.argmax(head.logits(reps), axis=1)
    return float(np.mean(preds == labels))


def groupdro_step(domain_losses, q, eta_g):
    """Exponentiated-gradient reweighting followed by renormalization."""
    q = np.asarray(q, dtype=np.float64)
    losses = np.asarray(domain_losses, dtype=np.float64)
    w = q * np.exp(eta_g * losses)
    return w / w.sum()


@dataclass(frozen=True)
class BenchSettings:
    """Everything a benchmark run shares across methods."""

    arch: Architecture
    aug_kind: str = "jitter"
    aug_magnitude: float = 0.2
    lam: float = 0.2
    tau: float = 0.6
    group_lambdas: tuple = (5.0, 5.0, 1.0, 5.0)
    perturb_mode: str = "gmm_reparam"
    n_components: int = 2
    c1: float = 2.0
    c2: float = 7.5
    rho: tuple = (10.0, 10.0, 10.0, 10.0)
    sigma_init: float = 0.4
    t1_total: int = 100
    warmup: int = 1
    plane_cadence: int = 10
    epsilon_h: float = 0.05
    epsilon_stat: float = 1e-10
    eta_theta: object = 0.05
    eta_q: object = 0.05
    eta_delta: object = 0.005
    t3: int = 2
    eta_delta_inner: float = 0.02
    eta_q_inner: float = 0.2
    batch_size: int = 8
    lambda_plane: float = 10.0
    max_planes: int = 64
    inner_sign: float = 1.0
    align_only_f1: bool = False
    update_order: str = "jacobi"
    groupdro_eta: float = 0.05
    probe_epochs: int = 300
    probe_lr: float = 0.5

    def sla_config(self, seed):
        return SLAConfig(
            t1_total=self.t1_total, warmup=self.warmup, plane_cadence=self.plane_cadence,
            epsilon_h=self.epsilon_h, epsilon_stat=self.epsilon_stat,
            eta_theta=self.eta_theta, eta_q=self.eta_q, eta_delta=self.eta_delta,
            t3=self.t3, eta_delta_inner=self.eta_delta_inner, eta_q_inner=self.eta_q_inner,
            batch_size=self.batch_size, seed=seed, lambda_plane=self.lambda_plane,
            max_planes=self.max_planes, update_order=self.update_order,
        )

    def augmentation(self, seed):
        return AugmentationSpec(kind=self.aug_kind, magnitude=self.aug_magnitude,
                                seed=derive_seed(seed, "train_aug"))


@dataclass(frozen=True)
class LodoReport:
    method: str
    config_hash: str
    target_domains: tuple            # domain ids in fold order
    per_seed: dict                   # domain_id -> list of per-seed accuracies
    per_domain_mean: dict            # domain_id -> mean accuracy
    per_domain_std: dict             # domain_id -> std over seeds
    mean_accuracy: float
    seeds: tuple

    def row_iter(self):
        for d in self.target_domains:
            yield d, self.per_domain_mean[d], self.per_domain_std[d], self.per_seed[d]


def config_hash(settings: BenchSettings, dataset: DomainDataset, seeds, base_seed=0) -> str:
    payload = {
        "settings": asdict(settings),
        "dataset_meta": dataset.meta,
        "domains": dataset.domain_ids,
        "n_classes": dataset.n_classes,
        "window_shape": list(dataset.window_shape),
        "seeds": list(seeds),
        "base_seed": int(base_seed),
    }
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _baseline_train(arch, domain_windows, settings: BenchSettings, seed, reweight):
    """Shared ERM / GroupDRO loop: q-weighted contrastive descent, delta = 0."""
    from .sla import EpochSampler

    params = init_params(arch, seed)
    aug = settings.augmentation(seed)
    k = len(domain_windows)
    samplers = [
        EpochSampler(len(w), settings.batch_size, derive_rng(seed, "minibatch", i))
        for i, w in enumerate(domain_windows)
    ]
    q = uniform_prior(k)
    delta = np.zeros(arch.input_dim)
    eta = float(settings.eta_theta)
    for _t in range(settings.t1_total):
        losses = np.empty(k)
        g_theta = np.zeros(params.n_params)
        grads = []
        for i, (w, s) in enumerate(zip(domain_windows, samplers)):
            batch = w[s.next_indices()]
            out = contrastive_loss(params, batch, delta, aug, settings.lam)
            losses[i] = out.value
            grads.append(out.grad_theta)
        if reweight:
            q = groupdro_step(losses, q, settings.groupdro_eta)
        for i in range(k):
            g_theta += q[i] * grads[i]
        params = params.with_theta(params.theta - eta * g_theta)
    return params


def _ttso_train(arch, domain_windows, settings: BenchSettings, seed):
    params = init_params(arch, seed)
    k = len(domain_windows)
    group = GroupState(q=uniform_prior(k), p=uniform_prior(k), tau=settings.tau,
                       lambdas=settings.group_lambdas)
    cfg = settings.sla_config(seed)
    bundle = TrilevelBundle(
        params, domain_windows, settings.augmentation(seed), lam=settings.lam,
        group=group, config=cfg, perturb_mode=settings.perturb_mode,
        n_components=settings.n_components, c1=settings.c1, c2=settings.c2,
        rho=settings.rho, sigma_init=settings.sigma_init,
        align_only_f1=settings.align_only_f1, inner_sign=settings.inner_sign,
    )
    result = sla_run(cfg, bundle)
    from .sla import STATUS_NUMERICAL_ERROR

    if result.trace.status == STATUS_NUMERICAL_ERROR:
        raise NumericalError(
            "trilevel training diverged; lower the step sizes or penalty weights",
            iteration=result.trace.stop_index,
        )
    final_q = simplex_project(result.q)  # feasibility restored once, post-run
    return params.with_theta(result.theta), final_q, result.trace


def train_representation(method, arch, domain_windows, settings, seed):
    if method == "erm":
        return _baseline_train(arch, domain_windows, settings, seed, reweight=False)
    if method == "groupdro":
        return _baseline_train(arch, domain_windows, settings, seed, reweight=True)
    if method == "ttso":
        return _ttso_train(arch, domain_windows, settings, seed)[0]
    raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")


def run_lodo(dataset: DomainDataset, method, settings: BenchSettings, seeds,
             base_seed=0) -> LodoReport:
    """Hold out each domain in turn: train the representation on the rest,
    fit a probe on the source windows, score on the held-out domain.

    Standardization is per domain with each domain's own statistics, the
    held-out one included. Every fold stream derives from
    (base_seed, repetition seed, target domain), so reports are functions of
    the configuration alone.
    """
    method = str(method).lower()
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    if len(dataset.domains) < 2:
        raise InputError("leave-one-domain-out needs at least 2 domains")
    seeds = tuple(int(s) for s in seeds)

    std_domains = [
        (d.domain_id, standardize_domain(d.windows), d.labels) for d in dataset.domains
    ]
    per_seed = {d.domain_id: [] for d in dataset.domains}
    for seed in seeds:
        for held_out in range(len(std_domains)):
            target_id, target_windows, target_labels = std_domains[held_out]
            sources = [std_domains[i] for i in range(len(std_domains)) if i != held_out]
            source_windows = [w for _, w, _ in sources]
            fold_seed = derive_seed(base_seed, "rep", seed, "fold", target_id)
            params = train_representation(method, settings.arch, source_windows, settings, fold_seed)
            train_x = np.concatenate(source_windows)
            train_y = np.concatenate([labels for _, _, labels in sources])
            head = train_probe(params, train_x, train_y, dataset.n_classes,
                               epochs=settings.probe_epochs, lr=settings.probe_lr,
                               seed=fold_seed)
            acc = evaluate_accuracy(params, head, target_windows, target_labels)
            per_seed[target_id].append(acc)

    per_mean = {d: float(np.mean(v)) for d, v in per_seed.items()}
    per_std = {d: float(np.std(v)) for d, v in per_seed.items()}
    return LodoReport(
        method=method,
        config_hash=config_hash(settings, dataset, seeds, base_seed),
        target_domains=tuple(dataset.domain_ids),
        per_seed=per_seed,
        per_domain_mean=per_mean,
        per_domain_std=per_std,
        mean_accuracy=float(np.mean(list(per_mean.values()))),
        seeds=seeds,
    )
