"""Grid norms, modulus-of-continuity estimates and distributional distances."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lo and hi must be nonempty and of equal length")
        if not np.all(lo < hi):
            raise ValueError("box needs lo < hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, d: int, lo: float = 0.0, hi: float = 1.0) -> "Box":
        return cls(np.full(d, lo), np.full(d, hi))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def midpoint_grid(self, pts_per_dim: int) -> np.ndarray:
        """Cell midpoints of the uniform grid, shape (pts_per_dim**d, d)."""
        axes = [
            lo + (hi - lo) * (np.arange(pts_per_dim) + 0.5) / pts_per_dim
            for lo, hi in zip(self.lo, self.hi)
        ]
        return _mesh(axes)

    def lattice(self, pts_per_dim: int) -> np.ndarray:
        """Uniform lattice including the faces, shape (pts_per_dim**d, d)."""
        axes = [np.linspace(lo, hi, pts_per_dim) for lo, hi in zip(self.lo, self.hi)]
        return _mesh(axes)

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def _mesh(axes) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def evaluate(f: Callable, x: np.ndarray) -> np.ndarray:
    """Evaluate a vectorised callable on (n, d) points and return (n, m)."""
    y = np.asarray(f(x), dtype=float)
    if y.ndim == 1:
        y = y.reshape(x.shape[0], -1)
    return y


def sup_norm_gap(f, g, box: Box, pts_per_dim: int = 100, exclude=None) -> float:
    """Max over the midpoint grid of ||f(x) - g(x)||_max.

    ``exclude`` may be an :class:`~leakynet.coding.ExclusionReport` (or any
    object with a ``mask(points) -> bool array`` method); flagged points are
    left out.
    """
    x = box.midpoint_grid(pts_per_dim)
    if exclude is not None:
        x = x[~exclude.mask(x)]
    fx, gx = evaluate(f, x), evaluate(g, x)
    if fx.shape != gx.shape:
        raise ValueError(f"output dims differ: {fx.shape[1:]} vs {gx.shape[1:]}")
    if x.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(fx - gx)))


def lp_norm_gap(f, g, box: Box, p: float = 2.0, pts_per_dim: int = 100, exclude=None) -> float:
    """Midpoint-rule estimate of (int ||f - g||_p^p dx)^(1/p) over the box."""
    if p < 1:
        raise ValueError("p must be at least 1")
    x = box.midpoint_grid(pts_per_dim)
    cell = box.volume / x.shape[0]
    if exclude is not None:
        x = x[~exclude.mask(x)]
    fx, gx = evaluate(f, x), evaluate(g, x)
    if fx.shape != gx.shape:
        raise ValueError(f"output dims differ: {fx.shape[1:]} vs {gx.shape[1:]}")
    if np.isinf(p):
        return float(np.max(np.abs(fx - gx))) if x.shape[0] else 0.0
    return float((cell * np.sum(np.abs(fx - gx) ** p)) ** (1.0 / p))


def modulus_estimate(f, box: Box, r: float, pts_per_dim: int | None = None, safety: float = 1.1) -> float:
    """Grid estimate of the modulus of continuity omega_f(r), times ``safety``.

    Distances are measured in the max-norm on inputs and outputs. The search
    radius is rounded up to the next multiple of the grid spacing, so the
    window always covers pairs at distance r. When ``pts_per_dim`` is omitted a
    spacing of about r/8 per axis is used (capped to keep the grid manageable).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    d = box.dim
    width = box.hi - box.lo
    if pts_per_dim is None:
        cap = {1: 200_001, 2: 1025, 3: 129}.get(d, 33)
        pts_per_dim = int(min(cap, max(33, np.ceil(8 * width.max() / r) + 1)))
    x = box.lattice(pts_per_dim)
    y = evaluate(f, x)
    m = y.shape[1]
    vals = y.reshape(*([pts_per_dim] * d), m)
    h = width / (pts_per_dim - 1)
    reach = [int(min(pts_per_dim - 1, np.ceil(r / hi - 1e-9))) for hi in h]
    best = 0.0
    for off in itertools.product(*[range(0, k + 1) if i == 0 else range(-k, k + 1) for i, k in enumerate(reach)]):
        if all(o == 0 for o in off):
            continue
        if off[0] == 0 and next(o for o in off if o != 0) < 0:
            continue  # each unordered pair once
        a_idx, b_idx = [], []
        for o in off:
            if o >= 0:
                a_idx.append(slice(0, pts_per_dim - o))
                b_idx.append(slice(o, pts_per_dim))
            else:
                a_idx.append(slice(-o, pts_per_dim))
                b_idx.append(slice(0, pts_per_dim + o))
        diff = np.abs(vals[tuple(b_idx)] - vals[tuple(a_idx)])
        if diff.size:
            best = max(best, float(diff.max()))
    return safety * best


def ks_statistic(samples, target_cdf: Callable) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF and ``target_cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise ValueError("need at least one sample")
    cdf = np.asarray(target_cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def _mean_pair_distance(a: np.ndarray, b: np.ndarray, chunk: int = 512) -> float:
    total = 0.0
    for i in range(0, a.shape[0], chunk):
        blk = a[i : i + chunk]
        diff = blk[:, None, :] - b[None, :, :]
        total += float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).sum())
    return total / (a.shape[0] * b.shape[0])


def energy_distance(a, b, seed: int = 0, subsample: int = 2000) -> float:
    """Energy distance between random subsamples of two sample sets.

    Both inputs are subsampled (without replacement) to ``subsample`` points
    and the exact energy distance between the two empirical measures is
    returned: 2 E|A-B| - E|A-A'| - E|B-B'| with all pairs, diagonals included.
    That is the V-statistic form, which is always nonnegative.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample dimensions differ")
    # both sets use the same seeded index draw, so identical inputs give exactly 0
    if a.shape[0] > subsample:
        a = a[np.random.default_rng(seed).choice(a.shape[0], subsample, replace=False)]
    if b.shape[0] > subsample:
        b = b[np.random.default_rng(seed).choice(b.shape[0], subsample, replace=False)]
    ab = _mean_pair_distance(a, b)
    aa = _mean_pair_distance(a, a)
    bb = _mean_pair_distance(b, b)
    return float(max(2.0 * ab - aa - bb, 0.0))
