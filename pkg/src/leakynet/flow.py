"""Leaky networks as normalizing flows.

Exact inversion and log-determinants for square invertible leaky networks,
push-forward sampling, closed-form triangular transports used as targets, and
the distributional approximation demo in one and two dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from . import coding, lu, metrics
from .metrics import Box
from .netcore import Layer, Network, layer, network
from .plc import fit_monotone_grid, synthesize_plcsm

KINK_NUDGE = 1e-12


class NotInvertible(ValueError):
    pass


# ---------------------------------------------------------------------------
# inversion and log-determinants


def _layer_inverse(W: np.ndarray) -> np.ndarray:
    try:
        return lu.lu_decompose(W).inverse()
    except lu.NotDecomposable:
        # inverses of LU matrices need not be LU (e.g. [[1, 1], [1, 0]])
        return np.linalg.solve(W, np.eye(W.shape[0]))


def _check_invertible(net: Network) -> None:
    d = net.input_dim
    for i, lay in enumerate(net.layers):
        if lay.weight.shape != (d, d):
            raise NotInvertible(f"layer {i} is not square {d}x{d}")
        if np.any(lay.alphas <= 0.0):
            raise NotInvertible(f"layer {i} has a ReLU unit (alpha = 0)")
        if np.linalg.matrix_rank(lay.weight) < d:
            raise NotInvertible(f"layer {i} has a singular weight matrix")


def invert_lu_network(net: Network) -> Network:
    """Leaky network computing the inverse of ``net``.

    Uses the reflection identity sigma_{1/a}(y) = -(1/a) sigma_a(-y): every
    inverse activation becomes a slope-a leaky unit between two affine maps,
    and adjacent affine maps are merged. For N layers the result has N + 1
    layers, all slopes lie in (0, 1], and the last layer is affine.
    """
    _check_invertible(net)
    d = net.input_dim
    eye = np.eye(d)
    layers = [Layer(-eye, np.zeros(d), net.layers[-1].alphas)]
    for k in range(net.depth - 1, -1, -1):
        lay = net.layers[k]
        Winv = _layer_inverse(lay.weight)
        A = Winv / lay.alphas[None, :]  # W^{-1} D^{-1}
        c = Winv @ lay.bias
        if k > 0:
            layers.append(Layer(A, c, net.layers[k - 1].alphas))
        else:
            layers.append(Layer(-A, -c, np.ones(d)))
    return Network(tuple(layers), d)


def _layer_logabsdet(W: np.ndarray) -> float:
    try:
        return lu.lu_decompose(W).logabsdet()
    except lu.NotDecomposable:
        sign, val = np.linalg.slogdet(W)
        if sign == 0:
            raise NotInvertible("singular layer")
        return float(val)


def forward_logdet_batch(net: Network, x) -> tuple[np.ndarray, np.ndarray]:
    """Outputs and log |det J| for a batch of points, shape (n, d) and (n,)."""
    _check_invertible(net)
    h = np.asarray(x, dtype=float)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ValueError(f"expected points of dimension {net.input_dim}")
    logdet = np.zeros(h.shape[0])
    for lay in net.layers:
        z = lay.pre_activation(h)
        z = np.where(z == 0.0, KINK_NUDGE, z)  # the Jacobian exists almost everywhere
        neg = z < 0.0
        logdet += _layer_logabsdet(lay.weight)
        logdet += np.sum(np.where(neg, np.log(lay.alphas)[None, :], 0.0), axis=1)
        h = np.where(neg, lay.alphas * z, z)
    return h, logdet


def forward_logdet(net: Network, x) -> tuple[list, float]:
    """Output and log |det J| at a single point."""
    arr = np.asarray(x, dtype=float).reshape(1, -1)
    y, ld = forward_logdet_batch(net, arr)
    return y[0].tolist(), float(ld[0])


def fd_jacobian(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a batch map at one point."""
    x = np.asarray(x, dtype=float)
    d = x.size
    pts = np.vstack([x + h * e for e in np.eye(d)] + [x - h * e for e in np.eye(d)])
    vals = np.asarray(f(pts), dtype=float)
    return ((vals[:d] - vals[d:]) / (2 * h)).T


def random_lu_network(d: int, depth: int, rng, alpha_range=(0.3, 0.95)) -> Network:
    """Random square network with LU-decomposable, well-conditioned weights."""
    rng = np.random.default_rng(rng)
    layers = []
    for _ in range(depth):
        L = np.eye(d) + np.tril(rng.normal(0.0, 0.5, (d, d)), -1)
        U = np.triu(rng.normal(0.0, 0.5, (d, d)), 1)
        U += np.diag(rng.choice([-1.0, 1.0], d) * rng.uniform(0.5, 1.5, d))
        layers.append(Layer(L @ U, rng.normal(0.0, 0.5, d), rng.uniform(*alpha_range, d)))
    return Network(tuple(layers), d)


# ---------------------------------------------------------------------------
# sampling


def standard_normal(n: int, d: int, seed) -> np.ndarray:
    """Seeded N(0, I) draws from a counter-based generator."""
    if n < 1:
        raise ValueError("n must be positive")
    return np.random.Generator(np.random.Philox(seed)).standard_normal((n, d))


def push_forward(net: Network, n: int, seed=0) -> np.ndarray:
    """Apply ``net`` to n standard-normal draws."""
    return net.forward(standard_normal(n, net.input_dim, seed))


# ---------------------------------------------------------------------------
# transport maps


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Increasing triangular map pushing N(0, I) onto a target law."""

    dim: int
    forward: Callable
    kind: str
    target_cdf: Callable | None = None
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return np.asarray(self.forward(x), dtype=float).reshape(-1, self.dim)

    def sample(self, n: int, seed) -> np.ndarray:
        return self(standard_normal(n, self.dim, seed))

    def is_increasing_triangular(self, box: Box, n: int = 200, seed=0, h: float = 1e-5) -> bool:
        """Sampled finite-difference check of the triangular structure."""
        rng = np.random.default_rng(seed)
        x = box.lo + (box.hi - box.lo) * rng.random((n, self.dim))
        base = self(x)
        for j in range(self.dim):
            step = np.zeros(self.dim)
            step[j] = h
            diff = self(x + step) - base
            if np.any(diff[:, j] <= 0.0):
                return False
            upper = diff[:, :j]  # components before j must not move
            if upper.size and np.max(np.abs(upper)) > 1e-12 * (1.0 + np.max(np.abs(base))):
                return False
        return True


def rosenblatt_1d(target_cdf: Callable, target_quantile: Callable, name: str = "") -> TransportMap:
    """T = quantile o Phi, which pushes N(0, 1) onto the target law."""
    u = np.linspace(1e-6, 1.0 - 1e-6, 1001)
    q = np.asarray(target_quantile(u), dtype=float)
    if not np.all(np.diff(q) > 0):
        raise ValueError("target quantile is not strictly increasing")
    if np.max(np.abs(np.asarray(target_cdf(q)) - u)) > 1e-8:
        raise ValueError("target cdf and quantile are not inverse to each other")

    def forward(x):
        x = np.asarray(x, dtype=float)
        # upper tail through the survival function keeps precision for x > 0
        u = np.where(x > 0, 1.0 - norm.sf(x), norm.cdf(x))
        return target_quantile(np.clip(u, 1e-300, 1.0 - 2.0**-53))

    return TransportMap(1, forward, "cdf_1d", target_cdf, name)


def rosenblatt_gaussian2d(cov) -> TransportMap:
    """Lower-triangular linear map N(0, I) -> N(0, cov)."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
        raise ValueError("cov must be a symmetric 2x2 matrix")
    if not (cov[0, 0] > 0 and np.linalg.det(cov) > 0):
        raise ValueError("cov must be positive definite")
    a = np.sqrt(cov[0, 0])
    T = np.array([[a, 0.0], [cov[0, 1] / a, np.sqrt(cov[1, 1] - cov[0, 1] ** 2 / cov[0, 0])]])

    def forward(x):
        return np.asarray(x, dtype=float) @ T.T

    tm = TransportMap(2, forward, "closed_form_gaussian", None, "gauss2d")
    object.__setattr__(tm, "matrix", T)
    return tm


@dataclass(frozen=True)
class GaussianMixture1D:
    means: tuple
    sds: tuple
    weights: tuple

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * norm.cdf(x, m, s) for m, s, w in zip(self.means, self.sds, self.weights))

    def quantile(self, u, iters: int = 200):
        """Vectorised bisection on the cdf."""
        u = np.asarray(u, dtype=float)
        lo = np.full(u.shape, min(self.means) - 40.0 * max(self.sds))
        hi = np.full(u.shape, max(self.means) + 40.0 * max(self.sds))
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)


MIX2 = GaussianMixture1D((-2.0, 2.0), (0.5, 0.5), (0.5, 0.5))
GAUSS_CORR_COV = np.array([[1.0, 0.8], [0.8, 1.0]])


def builtin_transport(name: str) -> TransportMap:
    if name == "mix2":
        return rosenblatt_1d(MIX2.cdf, MIX2.quantile, "mix2")
    if name == "gauss1":
        return rosenblatt_1d(norm.cdf, norm.ppf, "gauss1")
    if name == "identity1":
        return TransportMap(1, lambda x: np.asarray(x, dtype=float), "cdf_1d", norm.cdf, "identity1")
    if name == "gauss-corr-2d":
        return rosenblatt_gaussian2d(GAUSS_CORR_COV)
    if name == "identity2":
        return rosenblatt_gaussian2d(np.eye(2))
    raise KeyError(f"unknown transport target {name!r}")


# ---------------------------------------------------------------------------
# demo


@dataclass
class FlowReport:
    metric_name: str
    value: float
    n_samples: int
    seed: int
    baseline: float | None = None
    clip_fraction: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric_name not in ("ks", "energy"):
            raise ValueError("metric_name must be 'ks' or 'energy'")
        if not (np.isfinite(self.value) and self.value >= 0):
            raise ValueError("value must be finite and nonnegative")

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "value": self.value,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "baseline": self.baseline,
            "clip_fraction": self.clip_fraction,
            **self.extra,
        }


def _clip(z: np.ndarray, box: Box):
    inside = box.contains(z)
    return np.clip(z, box.lo, box.hi), float(1.0 - inside.mean())


def duap_demo(
    target: TransportMap,
    params: coding.CodingParams | None,
    box: Box,
    n: int,
    seed=0,
    grid: int = 512,
    gamma: float = 1e-4,
    eps_budget: float = 2.0**-8,
    replicates: int = 4,
    subsample: int = 2000,
) -> tuple[Network, FlowReport]:
    """Fit a leaky network to ``target`` and measure how well it transports N(0, I).

    In one dimension the map is interpolated on ``grid`` knots over the box and
    realised exactly as a width-1 chain; the score is the KS distance to the
    target law. In two dimensions the map is compiled with the coding
    construction, converted to LU form and scored by the energy distance to
    independent target samples. The baseline is the energy distance between
    two independent target sample sets built from the same source draws, and
    both numbers are averaged over ``replicates`` subsample seeds.
    """
    d = target.dim
    if d not in (1, 2):
        raise ValueError("the demo supports dimensions 1 and 2")
    if box.dim != d:
        raise ValueError("box dimension does not match the target")
    z_raw = standard_normal(n, d, seed)
    z, clip_fraction = _clip(z_raw, box)
    if d == 1:
        plc = fit_monotone_grid(lambda x: target(x).reshape(-1), (box.lo[0], box.hi[0]), grid - 1)
        net = synthesize_plcsm(plc)
        y = net.forward(z)
        if target.target_cdf is None:
            raise ValueError("1D targets need a cdf")
        ks = metrics.ks_statistic(y[:, 0], target.target_cdf)
        return net, FlowReport("ks", ks, n, int(seed), None, clip_fraction, {"depth": net.depth, "knots": grid})

    if params is None:
        raise ValueError("2D demo needs coding parameters")
    compiled, rep = coding.compile(
        target, box, params, eps_budget=eps_budget, gamma=gamma, seed=0, centered=True, measure=False
    )
    net = lu.to_lu_network(compiled, box, eps=1e-6 * float(np.max(box.hi - box.lo)))
    y = net.forward(z)
    ref_same = target(z_raw)
    ref = target.sample(n, [seed, 1] if np.isscalar(seed) else seed)
    vals, base = [], []
    for r in range(replicates):
        vals.append(metrics.energy_distance(y, ref, seed=r, subsample=subsample))
        base.append(metrics.energy_distance(ref_same, ref, seed=r, subsample=subsample))
    report = FlowReport(
        "energy",
        float(np.mean(vals)),
        n,
        int(seed),
        float(np.mean(base)),
        clip_fraction,
        {"K": params.K, "M": params.M, "depth": net.depth, "bound": rep.bound},
    )
    return net, report
