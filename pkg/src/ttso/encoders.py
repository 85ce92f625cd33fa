"""Differentiable time-series encoders over a flat parameter vector.

Three encoder families map a window ``x`` of shape (T_w, F) to an M-vector
representation:

* ``linear``      -- single affine map on the flattened window
* ``mlp``         -- tanh multilayer perceptron on the flattened window
* ``dilated_conv``-- causal dilated 1-D convolution stack (dilation of layer
                     k is ``dilation_base**k``), mean-pooled over time

All parameters live in one flat float64 vector ``theta`` with an explicit
layout table, so solvers can treat the encoder as a point in R^N.
``backward`` returns vector-Jacobian products with respect to both theta and
the input; the input gradient is what the perturbation level of the solver
consumes.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, InputError
from .seeding import derive_rng

KINDS = ("linear", "mlp", "dilated_conv")


@dataclass(frozen=True)
class Architecture:
    """Static description of an encoder; immutable after construction."""

    kind: str
    input_window_len: int
    n_features: int
    repr_dim: int
    hidden_dims: tuple = ()       # mlp only
    n_layers: int = 4             # dilated_conv only
    kernel_size: int = 3          # dilated_conv only
    dilation_base: int = 2        # dilated_conv only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        positives = {
            "input_window_len": self.input_window_len,
            "n_features": self.n_features,
            "repr_dim": self.repr_dim,
        }
        if self.kind == "mlp":
            for i, d in enumerate(self.hidden_dims):
                positives[f"hidden_dims[{i}]"] = d
        if self.kind == "dilated_conv":
            positives.update(
                n_layers=self.n_layers, kernel_size=self.kernel_size, dilation_base=self.dilation_base
            )
        for name, value in positives.items():
            if int(value) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")

    @property
    def input_dim(self):
        return self.input_window_len * self.n_features

    def layer_shapes(self):
        """Ordered (name, shape) pairs of the tensors packed into theta."""
        shapes = []
        if self.kind == "linear":
            shapes.append(("W0", (self.repr_dim, self.input_dim)))
            shapes.append(("b0", (self.repr_dim,)))
        elif self.kind == "mlp":
            dims = [self.input_dim, *self.hidden_dims, self.repr_dim]
            for k in range(len(dims) - 1):
                shapes.append((f"W{k}", (dims[k + 1], dims[k])))
                shapes.append((f"b{k}", (dims[k + 1],)))
        else:
            for k in range(self.n_layers):
                c_in = self.n_features if k == 0 else self.repr_dim
                shapes.append((f"W{k}", (self.repr_dim, c_in, self.kernel_size)))
                shapes.append((f"b{k}", (self.repr_dim,)))
        return shapes

    def dilation(self, k):
        return self.dilation_base**k

    @property
    def n_params(self):
        return sum(int(np.prod(shape)) for _, shape in self.layer_shapes())

    def to_dict(self):
        return {
            "kind": self.kind,
            "input_window_len": self.input_window_len,
            "n_features": self.n_features,
            "repr_dim": self.repr_dim,
            "hidden_dims": list(self.hidden_dims),
            "n_layers": self.n_layers,
            "kernel_size": self.kernel_size,
            "dilation_base": self.dilation_base,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            input_window_len=int(d["input_window_len"]),
            n_features=int(d["n_features"]),
            repr_dim=int(d["repr_dim"]),
            hidden_dims=tuple(d.get("hidden_dims", ())),
            n_layers=int(d.get("n_layers", 4)),
            kernel_size=int(d.get("kernel_size", 3)),
            dilation_base=int(d.get("dilation_base", 2)),
        )


def build_layout(arch: Architecture):
    """Offset table mapping each layer tensor into the flat vector."""
    layout = []
    offset = 0
    for name, shape in arch.layer_shapes():
        size = int(np.prod(shape))
        layout.append((name, offset, shape))
        offset += size
    return tuple(layout)


@dataclass(frozen=True)
class EncoderParams:
    """Flat parameter vector plus the architecture that interprets it."""

    theta: np.ndarray
    arch: Architecture
    layout: tuple = field(default=())

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1:
            raise DimensionError("theta must be a flat vector")
        expected = self.arch.n_params
        if theta.shape[0] != expected:
            raise DimensionError(f"theta has {theta.shape[0]} entries, architecture needs {expected}")
        if not np.all(np.isfinite(theta)):
            raise InputError("theta contains non-finite entries")
        layout = self.layout or build_layout(self.arch)
        theta = theta.copy()
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "layout", layout)

    @property
    def n_params(self):
        return self.theta.shape[0]

    def tensor(self, name):
        for lname, offset, shape in self.layout:
            if lname == name:
                size = int(np.prod(shape))
                return self.theta[offset : offset + size].reshape(shape)
        raise KeyError(name)

    def tensors(self):
        return [self.theta[o : o + int(np.prod(s))].reshape(s) for _, o, s in self.layout]

    def with_theta(self, theta):
        """New params sharing this architecture and layout."""
        return EncoderParams(theta=theta, arch=self.arch, layout=self.layout)


def init_params(arch: Architecture, seed: int) -> EncoderParams:
    """Seeded init: weights uniform on +-1/sqrt(fan_in), biases zero."""
    rng = derive_rng(seed, "encoder_init", arch.kind)
    chunks = []
    for name, shape in arch.layer_shapes():
        if name.startswith("b"):
            chunks.append(np.zeros(int(np.prod(shape))))
        else:
            if len(shape) == 2:
                fan_in = shape[1]
            else:  # conv kernel (c_out, c_in, ks)
                fan_in = shape[1] * shape[2]
            scale = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-scale, scale, size=int(np.prod(shape))))
    return EncoderParams(theta=np.concatenate(chunks), arch=arch)


def _check_input(arch, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_window_len, arch.n_features):
        raise DimensionError(
            f"window shape {x.shape} does not match ({arch.input_window_len}, {arch.n_features})"
        )
    if not np.all(np.isfinite(x)):
        raise InputError("window contains non-finite entries")
    return x


def _shift_down(x, s):
    """Rows t of the result hold x[t - s]; the first s rows are zero."""
    if s == 0:
        return x
    out = np.zeros_like(x)
    out[s:] = x[:-s]
    return out


def _shift_up(x, s):
    """Rows t of the result hold x[t + s]; the last s rows are zero."""
    if s == 0:
        return x
    out = np.zeros_like(x)
    out[:-s] = x[s:]
    return out


def forward_cached(params: EncoderParams, x):
    """Representation plus the activation cache backward() needs."""
    arch = params.arch
    x = _check_input(arch, x)
    tensors = params.tensors()
    if arch.kind == "linear":
        W, b = tensors
        flat = x.reshape(-1)
        rep = W @ flat + b
        return rep, (x,)
    if arch.kind == "mlp":
        a = x.reshape(-1)
        acts = [a]
        n_layers = len(tensors) // 2
        for k in range(n_layers):
            W, b = tensors[2 * k], tensors[2 * k + 1]
            z = W @ a + b
            a = np.tanh(z) if k < n_layers - 1 else z
            acts.append(a)
        return acts[-1], (x, acts)
    # dilated_conv: h is (T, channels) throughout
    h = x
    acts = [h]
    n_layers = arch.n_layers
    for k in range(n_layers):
        W, b = tensors[2 * k], tensors[2 * k + 1]
        z = np.zeros((h.shape[0], arch.repr_dim))
        dil = arch.dilation(k)
        for j in range(arch.kernel_size):
            z += _shift_down(h, (arch.kernel_size - 1 - j) * dil) @ W[:, :, j].T
        z += b
        h = np.tanh(z) if k < n_layers - 1 else z
        acts.append(h)
    rep = acts[-1].mean(axis=0)
    return rep, (x, acts)


def forward(params: EncoderParams, x):
    """Encode a (T_w, F) window to an M-vector. Pure and deterministic."""
    rep, _ = forward_cached(params, x)
    return rep


def _check_batch(arch, xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[1:] != (arch.input_window_len, arch.n_features):
        raise DimensionError(
            f"batch shape {xs.shape} does not match (B, {arch.input_window_len}, {arch.n_features})"
        )
    if not np.all(np.isfinite(xs)):
        raise InputError("batch contains non-finite entries")
    return xs


def _shift_down_b(x, s):
    if s == 0:
        return x
    out = np.zeros_like(x)
    out[:, s:] = x[:, :-s]
    return out


def _shift_up_b(x, s):
    if s == 0:
        return x
    out = np.zeros_like(x)
    out[:, :-s] = x[:, s:]
    return out


def forward_batch_cached(params: EncoderParams, xs):
    """Batched twin of forward_cached: (B, T_w, F) -> ((B, M), cache)."""
    arch = params.arch
    xs = _check_batch(arch, xs)
    tensors = params.tensors()
    B = xs.shape[0]
    if arch.kind == "linear":
        W, b = tensors
        flat = xs.reshape(B, -1)
        return flat @ W.T + b, (xs,)
    if arch.kind == "mlp":
        a = xs.reshape(B, -1)
        acts = [a]
        n_layers = len(tensors) // 2
        for k in range(n_layers):
            W, bias = tensors[2 * k], tensors[2 * k + 1]
            z = a @ W.T + bias
            a = np.tanh(z) if k < n_layers - 1 else z
            acts.append(a)
        return acts[-1], (xs, acts)
    h = xs  # (B, T, channels)
    acts = [h]
    for k in range(arch.n_layers):
        W, bias = tensors[2 * k], tensors[2 * k + 1]
        z = np.zeros((B, h.shape[1], arch.repr_dim))
        dil = arch.dilation(k)
        for j in range(arch.kernel_size):
            z += _shift_down_b(h, (arch.kernel_size - 1 - j) * dil) @ W[:, :, j].T
        z += bias
        h = np.tanh(z) if k < arch.n_layers - 1 else z
        acts.append(h)
    return acts[-1].mean(axis=1), (xs, acts)


def forward_batch(params: EncoderParams, xs):
    reps, _ = forward_batch_cached(params, xs)
    return reps


def batch_vjp(params: EncoderParams, cache, upstreams):
    """Batched VJP: upstreams (B, M) -> (sum-over-batch grad_theta, per-sample grad_x).

    Equivalent to accumulating backward() over the batch, in a handful of
    matrix products.
    """
    arch = params.arch
    upstreams = np.asarray(upstreams, dtype=np.float64)
    tensors = params.tensors()
    grad_chunks = [np.zeros_like(t) for t in tensors]

    if arch.kind == "linear":
        (xs,) = cache
        B = xs.shape[0]
        W = tensors[0]
        flat = xs.reshape(B, -1)
        grad_chunks[0] = upstreams.T @ flat
        grad_chunks[1] = upstreams.sum(axis=0)
        grad_x = (upstreams @ W).reshape(xs.shape)
    elif arch.kind == "mlp":
        xs, acts = cache
        n_layers = len(tensors) // 2
        da = upstreams
        for k in range(n_layers - 1, -1, -1):
            a_out, a_in = acts[k + 1], acts[k]
            dz = da if k == n_layers - 1 else da * (1.0 - a_out**2)
            grad_chunks[2 * k] = dz.T @ a_in
            grad_chunks[2 * k + 1] = dz.sum(axis=0)
            da = dz @ tensors[2 * k]
        grad_x = da.reshape(xs.shape)
    else:
        xs, acts = cache
        T = xs.shape[1]
        dh = np.repeat(upstreams[:, None, :] / T, T, axis=1)
        for k in range(arch.n_layers - 1, -1, -1):
            h_out, h_in = acts[k + 1], acts[k]
            dz = dh if k == arch.n_layers - 1 else dh * (1.0 - h_out**2)
            W = tensors[2 * k]
            dW = np.zeros_like(W)
            dh_in = np.zeros_like(h_in)
            dil = arch.dilation(k)
            for j in range(arch.kernel_size):
                s = (arch.kernel_size - 1 - j) * dil
                shifted = _shift_down_b(h_in, s)
                dW[:, :, j] = np.tensordot(dz, shifted, axes=([0, 1], [0, 1]))
                dh_in += _shift_up_b(dz, s) @ W[:, :, j]
            grad_chunks[2 * k] = dW
            grad_chunks[2 * k + 1] = dz.sum(axis=(0, 1))
            dh = dh_in
        grad_x = dh

    grad_theta = np.concatenate([g.reshape(-1) for g in grad_chunks])
    return grad_theta, grad_x


def backward_cached(params: EncoderParams, cache, upstream):
    """VJP from a forward_cached() cache: d(upstream . rep)/d(theta, x)."""
    arch = params.arch
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (arch.repr_dim,):
        raise DimensionError(f"upstream shape {upstream.shape} != ({arch.repr_dim},)")
    tensors = params.tensors()
    grad_chunks = [np.zeros_like(t) for t in tensors]

    if arch.kind == "linear":
        (x,) = cache
        W = tensors[0]
        grad_chunks[0] = np.outer(upstream, x.reshape(-1))
        grad_chunks[1] = upstream.copy()
        grad_x = (upstream @ W).reshape(x.shape)
    elif arch.kind == "mlp":
        x, acts = cache
        n_layers = len(tensors) // 2
        da = upstream
        for k in range(n_layers - 1, -1, -1):
            a_out, a_in = acts[k + 1], acts[k]
            dz = da if k == n_layers - 1 else da * (1.0 - a_out**2)
            grad_chunks[2 * k] = np.outer(dz, a_in)
            grad_chunks[2 * k + 1] = dz
            da = tensors[2 * k].T @ dz
        grad_x = da.reshape(x.shape)
    else:
        x, acts = cache
        T = x.shape[0]
        dh = np.tile(upstream / T, (T, 1))
        for k in range(arch.n_layers - 1, -1, -1):
            h_out, h_in = acts[k + 1], acts[k]
            dz = dh if k == arch.n_layers - 1 else dh * (1.0 - h_out**2)
            W = tensors[2 * k]
            dW = np.zeros_like(W)
            dh_in = np.zeros_like(h_in)
            dil = arch.dilation(k)
            for j in range(arch.kernel_size):
                s = (arch.kernel_size - 1 - j) * dil
                dW[:, :, j] = dz.T @ _shift_down(h_in, s)
                dh_in += _shift_up(dz, s) @ W[:, :, j]
            grad_chunks[2 * k] = dW
            grad_chunks[2 * k + 1] = dz.sum(axis=0)
            dh = dh_in
        grad_x = dh

    grad_theta = np.concatenate([g.reshape(-1) for g in grad_chunks])
    return grad_theta, grad_x


def backward(params: EncoderParams, x, upstream):
    """Gradients of upstream . forward(params, x) w.r.t. theta and x."""
    _, cache = forward_cached(params, x)
    return backward_cached(params, cache, upstream)


def save_checkpoint(params: EncoderParams, directory):
    """theta as flat little-endian float64 bytes plus a JSON layout sidecar."""
    import json
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "theta.bin").write_bytes(params.theta.astype("<f8").tobytes())
    sidecar = {
        "architecture": params.arch.to_dict(),
        "layout": [[name, offset, list(shape)] for name, offset, shape in params.layout],
        "n_params": params.n_params,
    }
    (directory / "theta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return directory / "theta.bin", directory / "theta.json"


def load_checkpoint(directory) -> EncoderParams:
    import json
    from pathlib import Path

    directory = Path(directory)
    sidecar = json.loads((directory / "theta.json").read_text())
    arch = Architecture.from_dict(sidecar["architecture"])
    theta = np.frombuffer((directory / "theta.bin").read_bytes(), dtype="<f8")
    if theta.shape[0] != sidecar["n_params"]:
        raise DimensionError("checkpoint length does not match its sidecar")
    return EncoderParams(theta=theta.copy(), arch=arch)
