"""Cutting planes over the stacked (theta, q, delta) space.

Each plane is the affine minorant of the convex surrogate h at an infeasible
iterate, shifted by the tolerance: points with h <= eps always satisfy it,
while the generating point violates it by exactly h - eps. The penalized
objective F adds a squared hinge per plane, so its gradient is continuous.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, InputError
from .group import h_value_grads


@dataclass(frozen=True)
class CuttingPlane:
    a: np.ndarray   # coefficients over theta
    b: np.ndarray   # coefficients over q
    c: np.ndarray   # coefficients over delta
    d: float
    lam: float      # penalty weight, > 0
    born_at: int    # iteration index of creation

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise InputError(f"plane coefficient {name} contains non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (np.isfinite(self.d) and np.isfinite(self.lam)):
            raise InputError("plane scalar coefficients must be finite")
        if self.lam <= 0:
            raise InputError("plane penalty weight must be positive")

    def evaluate(self, theta, q, delta):
        """Raw affine value a.theta + b.q + c.delta + d (negative: satisfied)."""
        return float(self.a @ theta + self.b @ q + self.c @ delta + self.d)


@dataclass(frozen=True)
class PlaneSet:
    """Ordered plane collection; prune_planes restores the size bound after adds."""

    planes: tuple = ()
    max_planes: int = 64

    def __post_init__(self):
        if self.max_planes < 1:
            raise InputError("max_planes must be >= 1")
        object.__setattr__(self, "planes", tuple(self.planes))

    def __len__(self):
        return len(self.planes)

    def add(self, plane: CuttingPlane):
        return PlaneSet(planes=self.planes + (plane,), max_planes=self.max_planes)


def generate_plane(anchor, theta, q, delta, epsilon, lambda_new, born_at=0) -> CuttingPlane:
    """Cut off the current iterate.

    Coefficients are the h-gradients at the point, with the offset chosen so
    the plane value there equals h - eps. Caller must have checked h > eps.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    h, g_theta, g_q, g_delta = h_value_grads(anchor, theta, q, delta)
    if h <= epsilon:
        raise ContractError(f"plane requested at a feasible point: h={h} <= eps={epsilon}")
    d = h - g_theta @ theta - g_q @ q - g_delta @ delta - epsilon
    return CuttingPlane(a=g_theta, b=g_q, c=g_delta, d=float(d), lam=float(lambda_new), born_at=born_at)


def plane_violation(plane: CuttingPlane, theta, q, delta) -> float:
    return max(0.0, plane.evaluate(theta, q, delta))


def F_value(f1_value, plane_set: PlaneSet, theta, q, delta) -> float:
    """f1 plus the squared-hinge penalties of every plane."""
    if not np.isfinite(f1_value):
        raise InputError("f1 must be finite")
    total = float(f1_value)
    for plane in plane_set.planes:
        v = plane_violation(plane, theta, q, delta)
        total += plane.lam * v * v
    return total


def F_grads(f1_grads, plane_set: PlaneSet, theta, q, delta):
    """Gradient blocks of F: f1 gradients plus 2 lam v (a, b, c) per plane."""
    g_theta, g_q, g_delta = (np.asarray(g, dtype=np.float64).copy() for g in f1_grads)
    for plane in plane_set.planes:
        if plane.a.shape != g_theta.shape or plane.b.shape != g_q.shape or plane.c.shape != g_delta.shape:
            raise DimensionError("plane coefficients do not match gradient block sizes")
        v = plane_violation(plane, theta, q, delta)
        if v > 0.0:
            w = 2.0 * plane.lam * v
            g_theta += w * plane.a
            g_q += w * plane.b
            g_delta += w * plane.c
    return g_theta, g_q, g_delta


def save_planes(plane_set: PlaneSet, directory):
    """Coefficients as one flat little-endian f64 array plus a JSON manifest."""
    import json
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    chunks, entries, offset = [], [], 0
    for plane in plane_set.planes:
        flat = np.concatenate([plane.a, plane.b, plane.c, [plane.d]])
        chunks.append(flat)
        entries.append({
            "offset": offset,
            "n_theta": plane.a.size,
            "n_q": plane.b.size,
            "n_delta": plane.c.size,
            "lam": plane.lam,
            "born_at": plane.born_at,
        })
        offset += flat.size
    blob = np.concatenate(chunks) if chunks else np.empty(0)
    (directory / "planes.bin").write_bytes(blob.astype("<f8").tobytes())
    manifest = {"max_planes": plane_set.max_planes, "planes": entries}
    (directory / "planes.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory / "planes.bin", directory / "planes.json"


def load_planes(directory) -> PlaneSet:
    import json
    from pathlib import Path

    directory = Path(directory)
    manifest = json.loads((directory / "planes.json").read_text())
    blob = np.frombuffer((directory / "planes.bin").read_bytes(), dtype="<f8")
    planes = []
    for entry in manifest["planes"]:
        o, n, k, d = entry["offset"], entry["n_theta"], entry["n_q"], entry["n_delta"]
        a = blob[o : o + n]
        b = blob[o + n : o + n + k]
        c = blob[o + n + k : o + n + k + d]
        dval = float(blob[o + n + k + d])
        planes.append(CuttingPlane(a=a.copy(), b=b.copy(), c=c.copy(), d=dval,
                                   lam=entry["lam"], born_at=entry["born_at"]))
    return PlaneSet(planes=tuple(planes), max_planes=manifest["max_planes"])


def prune_planes(plane_set: PlaneSet, theta=None, q=None, delta=None) -> PlaneSet:
    """Enforce the size bound: drop oldest zero-violation planes first, then
    oldest overall. Without a point, all planes count as zero-violation."""
    planes = list(plane_set.planes)
    if len(planes) <= plane_set.max_planes:
        return plane_set
    if theta is not None:
        violated = [plane_violation(pl, theta, q, delta) > 0.0 for pl in planes]
    else:
        violated = [False] * len(planes)
    # stable order: age within each class; satisfied planes go first
    order = sorted(range(len(planes)), key=lambda i: (violated[i], planes[i].born_at, i))
    drop = set(order[: len(planes) - plane_set.max_planes])
    kept = [pl for i, pl in enumerate(planes) if i not in drop]
    return PlaneSet(planes=tuple(kept), max_planes=plane_set.max_planes)
