"""Level-set obstruction to uniform approximation by width-d invertible networks.

A continuous map f on a ball K whose first coordinate reaches a level y1 only
in the interior of K cannot be approximated uniformly by bijections better
than epsilon = inf over the boundary of |f_1 - y1| / 2. The helpers here
build two such maps with known epsilon and measure the first-coordinate sup
gap of candidate invertible networks on a grid plus boundary samples.

This is a demonstration on sampled candidates, not a certificate: the
obstruction holds for every width-d network with monotone activations, and
no finite experiment can check all of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .netcore import Layer, Network
from .plc import fit_points, synthesize_plcsm


@dataclass(frozen=True, eq=False)
class Counterexample:
    """Map f on the closed ball of ``radius`` about 0 with a known lower bound."""

    dim: int
    f: Callable
    level: float
    radius: float
    epsilon: float
    name: str = ""
    epsilon_sampled: float = float("nan")

    def __post_init__(self):
        if not self.epsilon > 1e-6:
            raise ValueError("epsilon must be positive")

    def first(self, x) -> np.ndarray:
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)[:, 0]

    def boundary(self, m: int = 1000, seed: int = 0) -> np.ndarray:
        return sphere_points(self.dim, self.radius, m, seed)

    def interior(self, grid: int) -> np.ndarray:
        axis = np.linspace(-self.radius, self.radius, grid)
        pts = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), -1).reshape(-1, self.dim)
        return pts[np.linalg.norm(pts, axis=1) <= self.radius * (1 + 1e-12)]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "level": self.level,
            "radius": self.radius,
            "epsilon": self.epsilon,
            "epsilon_sampled": self.epsilon_sampled,
        }


def sphere_points(d: int, r: float, m: int, seed: int = 0) -> np.ndarray:
    """Points on the sphere of radius r: an angular grid for d <= 2, seeded draws otherwise."""
    if d == 1:
        return np.array([[-r], [r]])
    if d == 2:
        t = 2 * np.pi * np.arange(m) / m
        return r * np.column_stack([np.cos(t), np.sin(t)])
    g = np.random.default_rng(seed).standard_normal((m, d))
    return r * g / np.linalg.norm(g, axis=1, keepdims=True)


def gaussian_density(x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]
    return (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * np.sum(x * x, axis=1))


def gaussian_counterexample(d: int, r: float, n_boundary: int = 1000) -> Counterexample:
    """f(x) = (N(x; 0, I), x_2, ..., x_d) on the ball of radius r.

    The density peaks at c = (2 pi)^(-d/2) only at the origin and equals
    c exp(-r^2/2) on the sphere, so epsilon = c (1 - exp(-r^2/2)) / 2.
    """
    if d < 2:
        raise ValueError("the Gaussian construction needs d >= 2")
    if not r > 0:
        raise ValueError("radius must be positive")

    def f(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([gaussian_density(x), x[:, 1:]])

    c = (2 * np.pi) ** (-d / 2)
    eps = 0.5 * c * (-np.expm1(-0.5 * r * r))
    bd = sphere_points(d, r, n_boundary)
    eps_sampled = 0.5 * float(np.min(np.abs(f(bd)[:, 0] - c)))
    return Counterexample(d, f, c, float(r), float(eps), f"gaussian{d}", eps_sampled)


def square_counterexample_1d() -> Counterexample:
    """f(x) = x^2 on [-1, 1]: level 0 at the centre, value 1 on the boundary."""

    def f(x):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        return x**2

    bd = np.array([[-1.0], [1.0]])
    eps_sampled = 0.5 * float(np.min(np.abs(f(bd)[:, 0])))
    return Counterexample(1, f, 0.0, 1.0, 0.5, "square1", eps_sampled)


def check_gap(ce: Counterexample, net: Network, grid: int = 101, n_boundary: int = 1000):
    """First-coordinate sup gap of ``net`` against ``ce.f`` on grid and boundary points."""
    if net.input_dim != ce.dim or net.output_dim != ce.dim:
        raise ValueError(f"network must map R^{ce.dim} to R^{ce.dim}")
    x = np.vstack([ce.interior(grid), ce.boundary(n_boundary)])
    gap = float(np.max(np.abs(ce.first(x) - net.forward(x)[:, 0])))
    return gap, gap >= ce.epsilon - 1e-9


# ---------------------------------------------------------------------------
# candidate bijections


def random_candidate(d: int, depth: int, rng) -> Network:
    """Random invertible leaky net of width d with LU-factored weights."""
    from .flow import random_lu_network

    return random_lu_network(d, depth, rng, alpha_range=(0.05, 0.99))


def _unpack(theta: np.ndarray, d: int, depth: int) -> Network:
    layers = []
    per = d * d + 2 * d
    for k in range(depth):
        t = theta[k * per : (k + 1) * per]
        M = t[: d * d].reshape(d, d)
        L = np.eye(d) + np.tril(M, -1)
        U = np.triu(M)
        b = t[d * d : d * d + d]
        a = np.clip(t[d * d + d :], 0.01, 1.0)
        layers.append(Layer(L @ U, b, a))
    return Network(tuple(layers), d)


def _initial_theta(d: int, depth: int, rng) -> np.ndarray:
    parts = []
    for _ in range(depth):
        M = np.eye(d) + 0.3 * rng.normal(size=(d, d))
        parts += [M.ravel(), 0.1 * rng.normal(size=d), rng.uniform(0.2, 0.9, d)]
    return np.concatenate(parts)


def fitted_candidate(
    ce: Counterexample, depth: int, rng, n_fit: int = 400, sweeps: int = 30
) -> Network:
    """Invertible net fitted to ``ce.f`` by coordinate-descent least squares.

    Each sweep tries a step of +/- h on every parameter, keeps any step that
    lowers the squared error on ``n_fit`` points of the ball, and halves h for
    parameters that did not improve. Diagonal entries of U are kept away from
    zero so every iterate stays invertible.
    """
    rng = np.random.default_rng(rng)
    d = ce.dim
    g = rng.standard_normal((n_fit, d))
    rad = ce.radius * rng.random(n_fit) ** (1.0 / d)
    x = g / np.linalg.norm(g, axis=1, keepdims=True) * rad[:, None]
    x = np.vstack([x, ce.boundary(64)])
    y = np.asarray(ce.f(x), dtype=float)
    scale = np.maximum(np.std(y, axis=0), 1e-12)

    def loss(theta):
        out = _unpack(theta, d, depth).forward(x)
        return float(np.mean(((out - y) / scale) ** 2))

    theta = _initial_theta(d, depth, rng)
    per = d * d + 2 * d
    diag_idx = {k * per + i * d + i for k in range(depth) for i in range(d)}
    step = np.full(theta.size, 0.25)
    best = loss(theta)
    for _ in range(sweeps):
        for j in range(theta.size):
            improved = False
            for sgn in (1.0, -1.0):
                trial = theta.copy()
                trial[j] += sgn * step[j]
                if j in diag_idx and abs(trial[j]) < 1e-3:
                    continue
                val = loss(trial)
                if val < best:
                    theta, best, improved = trial, val, True
                    break
            if not improved:
                step[j] *= 0.5
    return _unpack(theta, d, depth)


def monotone_triple_candidates(b_grid, slope_grid):
    """All two-slope strictly monotone PLC maps phi(x) = b + s1 x (x<0), b + s2 x (x>=0).

    Returns the sup gap of each against x^2 on the probe triple {-1, 0, 1}.
    The slopes s1, s2 range over ``slope_grid`` and its negation (same sign).
    """
    b = np.asarray(b_grid, dtype=float)[:, None, None]
    s = np.asarray(slope_grid, dtype=float)
    if np.any(s <= 0):
        raise ValueError("slope grid must be positive")
    gaps = []
    for sign in (1.0, -1.0):
        s1 = sign * s[None, :, None]
        s2 = sign * s[None, None, :]
        g = np.maximum(np.maximum(np.abs(1.0 - (b - s1)), np.abs(b)), np.abs(1.0 - (b + s2)))
        gaps.append(g.ravel())
    return np.concatenate(gaps)


def exhaustive_1d_check(n_b: int = 201, n_s: int = 100) -> dict:
    """Enumerate monotone two-slope candidates on the probe triple; the minimum gap is 1/2."""
    gaps = monotone_triple_candidates(np.linspace(-2.0, 2.0, n_b), np.geomspace(1e-3, 4.0, n_s))
    return {"n_candidates": int(gaps.size), "min_gap": float(gaps.min())}


def plcsm_probe_gap(values) -> float:
    """Gap on {-1, 0, 1} against x^2 of the exact width-1 net interpolating ``values`` there."""
    xs = np.array([-1.0, 0.0, 1.0])
    f = fit_points(np.column_stack([xs, values]))
    net = synthesize_plcsm(f)
    out = net.forward(xs[:, None])[:, 0]
    return float(np.max(np.abs(out - xs**2)))


def run_candidates(ce: Counterexample, n_random: int, n_fitted: int, seed: int = 0, grid: int = 101) -> dict:
    """Gap statistics over random and fitted candidate bijections."""
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(n_random):
        net = random_candidate(ce.dim, int(rng.integers(1, 7)), rng)
        gaps.append(check_gap(ce, net, grid)[0])
    fitted = []
    for _ in range(n_fitted):
        net = fitted_candidate(ce, int(rng.integers(1, 4)), rng)
        fitted.append(check_gap(ce, net, grid)[0])
    all_gaps = np.array(gaps + fitted)
    return {
        "epsilon": ce.epsilon,
        "n_candidates": int(all_gaps.size),
        "min_gap": float(all_gaps.min()) if all_gaps.size else None,
        "min_gap_random": float(min(gaps)) if gaps else None,
        "min_gap_fitted": float(min(fitted)) if fitted else None,
        "all_pass": bool(np.all(all_gaps >= ce.epsilon - 1e-9)),
    }
