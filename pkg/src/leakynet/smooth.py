"""Mollified leaky ReLUs and smooth networks built from them.

The bump kernel p(x) = c exp(1/(x^2 - 1)) on (-1, 1) is rescaled to
p_n(x) = n p(n x), which has support [-1/n, 1/n] and unit mass. Writing
P(s) and Q(s) for the integrals of p(t) and t p(t) over [-1, s], the
convolution of the leaky ReLU with p_n has the closed form

    (sigma_a * p_n)(x) = a x + (1 - a) G(n x) / n,   G(s) = s P(s) - Q(s),

with derivative a + (1 - a) P(n x). P and Q are tabulated once by
Gauss-Legendre panels and interpolated with cubic Hermite splines, so the
vectorised evaluation is fast; the scalar functions below use adaptive
quadrature directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .netcore import Network

N_KNOTS = 4096
_GL_NODES = 10


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 / (t[inside] ** 2 - 1.0))
    return out


@lru_cache(maxsize=None)
def mollifier_constant() -> float:
    """c with c * int exp(1/(x^2 - 1)) dx = 1 over (-1, 1)."""
    val, _ = quad(lambda t: float(_bump(t)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / val


def _p(t):
    return mollifier_constant() * _bump(t)


def mollifier_eval(n: int, x):
    """p_n(x) = n p(n x); zero outside (-1/n, 1/n)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return n * _p(n * np.asarray(x, dtype=float))


@lru_cache(maxsize=None)
def _tables():
    """Cubic Hermite splines for P and Q on [-1, 1]."""
    knots = np.linspace(-1.0, 1.0, N_KNOTS)
    nodes, weights = np.polynomial.legendre.leggauss(_GL_NODES)
    a, b = knots[:-1], knots[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = mid[:, None] + half[:, None] * nodes[None, :]
    pt = _p(t)
    P = np.concatenate([[0.0], np.cumsum(half * (pt @ weights))])
    Q = np.concatenate([[0.0], np.cumsum(half * ((t * pt) @ weights))])
    # impose the symmetries P(-s) = 1 - P(s) and Q(-s) = Q(s) of the even kernel
    P = P / P[-1]
    P = 0.5 * (P + 1.0 - P[::-1])
    Q = 0.5 * (Q + Q[::-1])
    pk = _p(knots)
    return CubicHermiteSpline(knots, P, pk), CubicHermiteSpline(knots, Q, knots * pk)


def kernel_cdf(s):
    """P(s): mass of the unit bump on [-1, s]."""
    s = np.asarray(s, dtype=float)
    P, _ = _tables()
    inner = np.clip(P(np.clip(s, -1.0, 1.0)), 0.0, 1.0)  # spline overshoot is rounding-level
    return np.where(s <= -1.0, 0.0, np.where(s >= 1.0, 1.0, inner))


def _G(s):
    """G(s) = s P(s) - Q(s); equals max(s, 0) for |s| >= 1."""
    s = np.asarray(s, dtype=float)
    P, Q = _tables()
    sc = np.clip(s, -1.0, 1.0)
    inner = sc * P(sc) - Q(sc)
    return np.where(s >= 1.0, s, np.where(s <= -1.0, 0.0, inner))


@dataclass(frozen=True)
class SmoothedActivation:
    """sigma_alpha convolved with p_n."""

    alpha: float
    n: int

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        _tables()  # build the shared tables up front

    def __call__(self, x):
        return smoothed_values(self.alpha, self.n, x)

    def deriv(self, x):
        return smoothed_derivs(self.alpha, self.n, x)

    def inverse(self, y):
        return smoothed_inverse(self.alpha, self.n, y)


def smoothed_values(alpha, n: int, x):
    """Vectorised (sigma_alpha * p_n)(x); ``alpha`` may broadcast against x."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    s = n * x
    inner = alpha * x + (1.0 - alpha) * _G(s) / n
    return np.where(s >= 1.0, x, np.where(s <= -1.0, alpha * x, inner))


def smoothed_derivs(alpha, n: int, x):
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return alpha + (1.0 - alpha) * kernel_cdf(n * x)


def smoothed_inverse(alpha, n: int, y, tol: float = 1e-13):
    """Vectorised inverse of the smoothed unit by bisection and Newton steps.

    Off the window the inverse is exact: x = y for y >= 1/n and x = y/alpha
    for y <= -alpha/n. Inside, the root lies in [-1/n, 1/n].
    """
    y = np.asarray(y, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), y.shape)
    out = np.where(y >= 1.0 / n, y, y / alpha)
    mid_mask = (y < 1.0 / n) & (y > -alpha / n)
    if not np.any(mid_mask):
        return out
    yy, aa = y[mid_mask], alpha[mid_mask]
    lo = np.full(yy.shape, -1.0 / n)
    hi = np.full(yy.shape, 1.0 / n)
    for _ in range(30):
        m = 0.5 * (lo + hi)
        below = smoothed_values(aa, n, m) < yy
        lo = np.where(below, m, lo)
        hi = np.where(below, hi, m)
    x = 0.5 * (lo + hi)
    for _ in range(8):
        r = smoothed_values(aa, n, x) - yy
        x = np.clip(x - r / smoothed_derivs(aa, n, x), lo, hi)
        if np.all(np.abs(r) <= tol / n):
            break
    out = out.copy()
    out[mid_mask] = x
    return out


# scalar reference paths ------------------------------------------------------


def smoothed_lrelu_eval(act: SmoothedActivation, x: float) -> float:
    """Scalar evaluation by adaptive quadrature (exact off the window)."""
    x = float(x)
    n, a = act.n, act.alpha
    if x >= 1.0 / n:
        return x
    if x <= -1.0 / n:
        return a * x
    # a x + (1 - a) * int max(x + t, 0) p_n(t) dt
    lo = max(-x, -1.0 / n)
    val, _ = quad(lambda t: (x + t) * float(mollifier_eval(n, t)), lo, 1.0 / n, epsabs=1e-13, epsrel=1e-13, limit=200)
    return a * x + (1.0 - a) * val


def smoothed_lrelu_deriv(act: SmoothedActivation, x: float) -> float:
    """alpha + (1 - alpha) P_n(x) from the tabulated kernel cdf."""
    return float(smoothed_derivs(act.alpha, act.n, float(x)))


def invert_smoothed_scalar(act: SmoothedActivation, y: float) -> float:
    return float(smoothed_inverse(act.alpha, act.n, np.array([float(y)]))[0])


# networks ---------------------------------------------------------------------


class SmoothNetwork:
    """Evaluation-only network whose leaky units are replaced by smoothed ones."""

    def __init__(self, net: Network, n: int):
        alphas = net.alphas()
        if np.any(alphas <= 0.0) or np.any(alphas >= 1.0):
            raise ValueError("every slope must lie in (0, 1); substitute identity units first")
        if int(n) != n or n < 1:
            raise ValueError("n must be a positive integer")
        self.net = net
        self.n = int(n)
        _tables()

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    @property
    def output_dim(self) -> int:
        return self.net.output_dim

    def forward(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ValueError(f"expected points of dimension {self.input_dim}")
        for lay in self.net.layers:
            h = smoothed_values(lay.alphas[None, :], self.n, lay.pre_activation(h))
        return h

    __call__ = forward

    def inverse(self, y) -> np.ndarray:
        """Layer-by-layer inverse; requires square invertible weights."""
        h = np.asarray(y, dtype=float)
        for lay in reversed(self.net.layers):
            if lay.weight.shape[0] != lay.weight.shape[1]:
                raise ValueError("inverse needs square layers")
            z = smoothed_inverse(np.broadcast_to(lay.alphas, h.shape), self.n, h)
            h = np.linalg.solve(lay.weight, (z - lay.bias).T).T
        return h

    def layer_gap(self, alphas) -> float:
        """sup |sigma_a - smoothed| for the given slopes: (1 - a) E|T| / (2 n)."""
        return float(np.max(1.0 - np.asarray(alphas))) * mean_abs_kernel() / (2.0 * self.n)

    def composition_bound(self) -> float:
        """Max-norm bound on |smooth(x) - net(x)| from per-layer gaps and row-sum norms."""
        total = 0.0
        for lay in self.net.layers:
            total = np.max(np.sum(np.abs(lay.weight), axis=1)) * total + self.layer_gap(lay.alphas)
        return float(total)

    def to_dict(self) -> dict:
        from .netcore import serialize
        import json

        return {"n": self.n, "network": json.loads(serialize(self.net))}


@lru_cache(maxsize=None)
def mean_abs_kernel() -> float:
    """E|T| for T with density p."""
    val, _ = quad(lambda t: abs(t) * float(_p(t)), -1.0, 1.0, points=[0.0], epsabs=1e-15, limit=200)
    return val


def smooth_network(net: Network, n: int) -> SmoothNetwork:
    return SmoothNetwork(net, n)
