"""Representation-learning losses with gradients in theta and delta.

The contrastive objective compares two views of each window: view A is the
window shifted by the shared perturbation template ``delta`` (the quantity
the innermost solver level optimizes), view B is the window under a fixed
additive augmentation. Alignment pulls the views together; the pairwise
Gaussian regularizer keeps representations from collapsing.
"""

from dataclasses import dataclass

import numpy as np

from .encoders import EncoderParams, batch_vjp, forward_batch_cached
from .errors import DimensionError, InputError
from .seeding import derive_rng

AUG_KINDS = ("jitter", "scale", "shift")


@dataclass(frozen=True)
class AugmentationSpec:
    """Additive augmentation template: deterministic per (kind, magnitude, seed, shape).

    jitter -- elementwise Gaussian noise
    scale  -- slow sinusoidal amplitude modulation with seeded per-feature phase
    shift  -- constant per-feature baseline offset
    """

    kind: str
    magnitude: float
    seed: int

    def __post_init__(self):
        if self.kind not in AUG_KINDS:
            raise InputError(f"unknown augmentation kind {self.kind!r}; expected one of {AUG_KINDS}")
        if not np.isfinite(self.magnitude):
            raise InputError("augmentation magnitude must be finite")

    def template(self, window_len: int, n_features: int) -> np.ndarray:
        """The additive template delta_a for windows of the given shape."""
        rng = derive_rng(self.seed, "augmentation", self.kind, window_len, n_features)
        if self.kind == "jitter":
            base = rng.standard_normal((window_len, n_features))
        elif self.kind == "scale":
            phases = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
            t = np.arange(window_len)[:, None] / window_len
            base = np.sin(2.0 * np.pi * t + phases[None, :])
        else:  # shift
            offsets = rng.standard_normal(n_features)
            base = np.tile(offsets, (window_len, 1))
        return self.magnitude * base


@dataclass(frozen=True)
class LossValueGrad:
    value: float
    grad_theta: np.ndarray
    grad_delta: np.ndarray

    def scaled(self, c):
        return LossValueGrad(c * self.value, c * self.grad_theta, c * self.grad_delta)

    def plus(self, other, weight=1.0):
        return LossValueGrad(
            self.value + weight * other.value,
            self.grad_theta + weight * other.grad_theta,
            self.grad_delta + weight * other.grad_delta,
        )


def _as_batch(params, batch):
    batch = np.asarray(batch, dtype=np.float64)
    arch = params.arch
    if batch.ndim == 2:
        batch = batch[None]
    if batch.ndim != 3 or batch.shape[1:] != (arch.input_window_len, arch.n_features):
        raise DimensionError(
            f"batch shape {batch.shape} does not match (B, {arch.input_window_len}, {arch.n_features})"
        )
    if batch.shape[0] == 0:
        raise InputError("empty batch")
    return batch


def _as_delta(params, delta):
    arch = params.arch
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if delta.shape[0] != arch.input_dim:
        raise DimensionError(f"delta length {delta.shape[0]} != {arch.input_dim}")
    return delta.reshape(arch.input_window_len, arch.n_features)


def _contrastive_parts(params: EncoderParams, batch, delta, aug: AugmentationSpec):
    """Alignment and regularizer terms with shared batched forward caches."""
    batch = _as_batch(params, batch)
    d2 = _as_delta(params, delta)
    B = batch.shape[0]
    arch = params.arch
    aug_t = aug.template(arch.input_window_len, arch.n_features)

    reps_a, cache_a = forward_batch_cached(params, batch + d2)
    reps_b, cache_b = forward_batch_cached(params, batch + aug_t)

    # alignment: mean squared distance between the two views
    diff = reps_a - reps_b
    align_value = float(np.mean(np.sum(diff**2, axis=1)))
    up = 2.0 * diff / B
    gt_a, gx_a = batch_vjp(params, cache_a, up)
    gt_b, _ = batch_vjp(params, cache_b, up)
    align = LossValueGrad(align_value, gt_a - gt_b, gx_a.sum(axis=0).reshape(-1))

    if B < 2:
        return align, None

    # regularizer: mean over distinct pairs of exp(-||R_i - R_j||^2) on view A
    n_pairs = B * (B - 1) // 2
    pair_diff = reps_a[:, None, :] - reps_a[None, :, :]          # (B, B, M)
    sq = np.sum(pair_diff**2, axis=2)
    weights = np.exp(-sq)
    iu = np.triu_indices(B, k=1)
    reg_value = float(weights[iu].sum() / n_pairs)
    # dvalue/dR_i = sum_{j != i} -2 w_ij (R_i - R_j) / n_pairs
    dR = -2.0 * np.sum(weights[:, :, None] * pair_diff, axis=1) / n_pairs
    gt_r, gx_r = batch_vjp(params, cache_a, dR)
    reg = LossValueGrad(reg_value, gt_r, gx_r.sum(axis=0).reshape(-1))
    return align, reg


def alignment_loss(params, batch, delta, aug) -> LossValueGrad:
    """Mean ||r(x + delta) - r(a(x))||^2 over the batch."""
    align, _ = _contrastive_parts(params, batch, delta, aug)
    return align


def reg_loss(params, batch, delta, aug) -> LossValueGrad:
    """Pairwise Gaussian anti-collapse term on the delta-view representations."""
    batch = _as_batch(params, batch)
    if batch.shape[0] < 2:
        raise InputError("regularizer needs a batch of at least 2 windows")
    _, reg = _contrastive_parts(params, batch, delta, aug)
    return reg


def contrastive_loss(params, batch, delta, aug, lam: float) -> LossValueGrad:
    """alignment + lam * regularizer, gradients combined linearly."""
    if lam < 0 or not np.isfinite(lam):
        raise InputError(f"lam must be finite and nonnegative, got {lam}")
    if lam == 0.0:
        return alignment_loss(params, batch, delta, aug)
    batch = _as_batch(params, batch)
    if batch.shape[0] < 2:
        raise InputError("contrastive loss with lam > 0 needs a batch of at least 2 windows")
    align, reg = _contrastive_parts(params, batch, delta, aug)
    return align.plus(reg, weight=lam)


def ar_loss_estimate(params, batch, aug_set) -> float:
    """Worst-case alignment over the finite augmentation set.

    Mean over the batch of the max over ordered augmentation pairs (a, a')
    of ||r(a(x)) - r(a'(x))||^2.
    """
    batch = _as_batch(params, batch)
    aug_set = list(aug_set)
    if not aug_set:
        raise InputError("aug_set must be nonempty")
    arch = params.arch
    templates = [a.template(arch.input_window_len, arch.n_features) for a in aug_set]
    all_reps = np.stack([forward_batch_cached(params, batch + t)[0] for t in templates])
    # (n_aug, n_aug, B): squared distances for every ordered template pair
    sq = np.sum((all_reps[:, None, :, :] - all_reps[None, :, :, :]) ** 2, axis=3)
    return float(np.mean(sq.max(axis=(0, 1))))


def cross_entropy_loss(logits, label):
    """Softmax cross-entropy value and gradient in the logits."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    C = logits.shape[0]
    if C < 2:
        raise InputError("need at least 2 classes")
    label = int(label)
    if not 0 <= label < C:
        raise InputError(f"label {label} out of range [0, {C})")
    z = logits - logits.max()
    log_probs = z - np.log(np.sum(np.exp(z)))
    probs = np.exp(log_probs)
    grad = probs.copy()
    grad[label] -= 1.0
    return -float(log_probs[label]), grad
