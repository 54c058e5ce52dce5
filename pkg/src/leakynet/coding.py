"""Binary coding scheme and its compilation into minimal-width leaky-ReLU networks.

A target ``f: [0,1]^dx -> [0,1]^dy`` is approximated by

* an encoder that quantizes every coordinate to K bits and packs the digits
  into one scalar code in [0, 1),
* a memorizer, a scalar piecewise-linear map sending each input code to the
  code of the quantized target value,
* a decoder that unpacks an output code into dy coordinates with M bits each.

Each stage has an exact arithmetic form and a network form. :func:`compile`
chains the network forms between two affine rescalings and returns a network
of width max(2, dx, dy) with a scalar bottleneck.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import metrics
from .metrics import Box
from .netcore import (
    Layer,
    Network,
    compose_all,
    layer,
    network,
    parallel,
    substitute_identity,
    width_stats,
)
from .plc import fit_points, synthesize_plc, synthesize_plcsm

IDENTITY_ALPHA = 1.0 - 2.0**-20


class InfeasibleBudget(RuntimeError):
    """The requested accuracy cannot be met in 64-bit arithmetic."""


@dataclass(frozen=True)
class CodingParams:
    K: int
    M: int
    dx: int = 1
    dy: int = 1

    def __post_init__(self):
        for name in ("K", "M", "dx", "dy"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.K * self.dx > 52 or self.M * self.dy > 52:
            raise ValueError("codes need K*dx <= 52 and M*dy <= 52 bits to stay exact")


@dataclass(frozen=True)
class ExclusionReport:
    """Strips around the grid points where the quantizer network ramps.

    ``strips`` are half-open intervals [a, b) in normalized coordinates. A point
    is excluded when any of its coordinates (after mapping ``box`` onto the unit
    cube) falls in a strip.
    """

    gamma: float
    beta: float
    strips: tuple
    dims: int = 1
    box: Box | None = None

    @property
    def strip_measure(self) -> float:
        """Lebesgue measure of the strips inside [0, 1] (one coordinate)."""
        return float(sum(min(b, 1.0) - max(a, 0.0) for a, b in self.strips))

    @property
    def measure(self) -> float:
        """Measure of the excluded set inside the unit cube."""
        return 1.0 - (1.0 - self.strip_measure) ** self.dims

    def mask(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.box is not None:
            x = (x - self.box.lo) / (self.box.hi - self.box.lo)
        lo = np.array([a for a, _ in self.strips])
        hi = np.array([b for _, b in self.strips])
        idx = np.searchsorted(lo, x, side="right") - 1
        inside = (idx >= 0) & (x < hi[np.clip(idx, 0, None)])
        return np.any(inside, axis=1)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "measure": self.measure,
            "strips": [[a, b] for a, b in self.strips],
        }


# ---------------------------------------------------------------------------
# exact arithmetic form


def grid(n: int) -> np.ndarray:
    """C_n = {0, 2^-n, ..., 1 - 2^-n}."""
    return np.arange(2**n) / 2.0**n


def quantize(x, n: int, return_flag: bool = False):
    """Largest element of C_n not exceeding x; inputs outside [0,1] are clamped."""
    x = np.asarray(x, dtype=float)
    outside = (x < 0.0) | (x > 1.0)
    q = np.floor(np.clip(x, 0.0, 1.0) * 2.0**n) / 2.0**n
    q = np.minimum(q, 1.0 - 2.0**-n)
    if return_flag:
        return q, bool(np.any(outside))
    return q


def encode_exact(x, K: int) -> np.ndarray | float:
    """sum_i 2^{-(i-1)K} q_K(x_i); ``x`` has shape (dx,) or (n, dx)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    weights = 2.0 ** (-K * np.arange(x.shape[1]))
    codes = quantize(x, K) @ weights
    return float(codes[0]) if single else codes


def decode_exact(c, M: int, dy: int) -> np.ndarray:
    """Inverse of :func:`encode_exact` on C_{M*dy}; returns shape (dy,) or (n, dy)."""
    c = np.asarray(c, dtype=float)
    single = c.ndim == 0
    c = np.atleast_1d(c)
    scale = 2.0 ** (M * dy)
    k = np.rint(c * scale)
    if np.any(np.abs(c * scale - k) > 4.0 * np.finfo(float).eps * scale) or np.any(k < 0) or np.any(k >= scale):
        raise ValueError("code is not on the grid C_{M*dy}")
    k = k.astype(np.int64)
    out = np.empty((c.size, dy))
    mask = (1 << M) - 1
    for i in range(dy):
        shift = M * (dy - 1 - i)
        out[:, i] = ((k >> shift) & mask) / 2.0**M
    return out[0] if single else out


def _as_batch_fn(fstar: Callable, dx: int, dy: int) -> Callable:
    def g(u):
        y = np.asarray(fstar(np.asarray(u, dtype=float).reshape(-1, dx)), dtype=float)
        return y.reshape(-1, dy)

    return g


def memorize_exact(c, fstar: Callable, K: int, M: int, dx: int = 1, dy: int | None = None):
    """Code of q_M(f(grid point)) for the grid point with code ``c``."""
    c_arr = np.asarray(c, dtype=float)
    pts = decode_exact(np.atleast_1d(c_arr), K, dx)
    y = np.asarray(fstar(pts), dtype=float).reshape(pts.shape[0], -1)
    codes = encode_exact(quantize(y, M), M)
    return float(codes[0]) if c_arr.ndim == 0 else codes


def coding_scheme_exact(x, fstar: Callable, params: CodingParams) -> np.ndarray:
    """decode(memorize(encode(x))) for points ``x`` in [0,1]^dx."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    c = np.atleast_1d(encode_exact(x, params.K))
    m = memorize_exact(c, fstar, params.K, params.M, params.dx)
    out = decode_exact(np.atleast_1d(m), params.M, params.dy)
    return out[0] if single else out


def accuracy_bound(omega_hat: Callable, K: int, M: int) -> float:
    """omega(2^-K) + 2^-M."""
    return float(omega_hat(2.0**-K)) + 2.0**-M


# ---------------------------------------------------------------------------
# network form


def quantizer_breakpoints(K: int, eps: float, gamma: float):
    """(points, alpha, beta) of the monotone ramp function approximating q_K."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    h = 2.0**-K
    beta = gamma * h / 2.0
    alpha = min(eps, h - beta) / 2.0
    if not (alpha > 0 and beta > 0) or alpha < 1e-14 * h:
        raise InfeasibleBudget(f"quantizer parameters underflow (alpha={alpha:g}, beta={beta:g})")
    n = 2**K
    xs = np.empty(2 * n + 1)
    ys = np.empty(2 * n + 1)
    xs[0] = ys[0] = 0.0
    for i in range(1, n + 1):
        xs[2 * i - 1] = i * h - beta
        ys[2 * i - 1] = (i - 1) * h + alpha
        xs[2 * i] = ys[2 * i] = i * h
    return np.column_stack([xs, ys]), alpha, beta


def build_quantizer_net(K: int, eps: float, gamma: float):
    """Width-1 chain equal to q_K on C_K and within ``eps`` of q_K off the strips."""
    pts, alpha, beta = quantizer_breakpoints(K, eps, gamma)
    f = fit_points(pts)
    h = 2.0**-K
    strips = tuple((i * h - beta, i * h) for i in range(1, 2**K + 1))
    return synthesize_plcsm(f), ExclusionReport(gamma, beta, strips, 1)


def build_encoder_net(K: int, dx: int, eps: float, gamma: float):
    """Quantizer chains side by side followed by the packing row (1, 2^-K, ...).

    Each coordinate uses strips of total length gamma/(2*dx), so the excluded
    set of the cube has measure below gamma.
    """
    chain, rep = build_quantizer_net(K, eps, gamma / dx)
    chains = parallel([chain] * dx) if dx > 1 else chain
    row = layer([2.0 ** (-K * np.arange(dx))], [0.0], 1.0)
    net = Network(chains.layers + (row,), dx)
    return net, ExclusionReport(gamma, rep.beta, rep.strips, dx)


def memorizer_table(fstar: Callable, K: int, M: int, dx: int, dy: int):
    codes = grid(K * dx)
    values = memorize_exact(codes, fstar, K, M, dx)
    return codes, np.asarray(values, dtype=float)


def build_memorizer_net(fstar: Callable, K: int, M: int, dx: int, dy: int, margin: float = 1.0) -> Network:
    """Width-2 network matching the memorizer on every code of C_{K*dx}.

    The strand outputs are kept nonnegative on the encoder range [0, 2).
    """
    codes, values = memorizer_table(fstar, K, M, dx, dy)
    if codes.size == 1:
        f = fit_points([(0.0, values[0]), (1.0, values[0])])
    else:
        f = fit_points(np.column_stack([codes, values]))
    return synthesize_plc(f, margin=margin, nonneg_on=(0.0, 2.0))


def _extractor_layers(M: int, delta: float, n_carry: int) -> list[Layer]:
    """ReLU layers mapping (carry..., x) to (carry..., q_M(x), 2^M (x - q_M(x)))."""
    if not 0.0 < delta < 2.0**-M:
        raise ValueError("delta must lie in (0, 2^-M)")
    h = 2.0**-M
    s = h / delta
    nsteps = 2**M - 1

    def c(l):  # h_l(z) = s*z + c(l)
        return -s * (l * h - delta) + (l - 1) * h

    core: list[tuple[np.ndarray, np.ndarray]] = [
        (np.array([[1.0]]), np.array([0.0])),  # u1 = relu(x)
        (np.array([[-1.0]]), np.array([1.0])),  # u2 = relu(1 - u1), z = 1 - u2
        # (z, acc - h_1(z)) with acc = 0, written in terms of u2
        (np.array([[-1.0], [s]]), np.array([1.0, -s - c(1)])),
    ]
    for l in range(1, nsteps + 1):
        # min step: (z, l h - h_l(z) - r1)
        core.append((np.array([[1.0, 0.0], [-s, -1.0]]), np.array([0.0, l * h - c(l)])))
        if l < nsteps:
            # max step for l+1: (z, l h - r2 - h_{l+1}(z))
            core.append((np.array([[1.0, 0.0], [-s, -1.0]]), np.array([0.0, l * h - c(l + 1)])))
    top = nsteps * h
    scale = 2.0**M
    core.append((np.array([[0.0, -1.0], [scale, scale]]), np.array([top, -scale * top])))
    out = []
    for w, b in core:
        if n_carry:
            w = np.block(
                [
                    [np.eye(n_carry), np.zeros((n_carry, w.shape[1]))],
                    [np.zeros((w.shape[0], n_carry)), w],
                ]
            )
            b = np.concatenate([np.zeros(n_carry), b])
        out.append(layer(w, b, 0.0))
    return out


def build_bit_extract_net(M: int, delta: float) -> Network:
    """ReLU network x -> (q_M(x), 2^M (x - q_M(x))) off the strips (i 2^-M - delta, i 2^-M)."""
    return network(_extractor_layers(M, delta, 0), 1)


def decoder_delta(M: int, dy: int) -> float:
    return 2.0 ** (-M * dy) / 2.0


def build_decoder_net_relu(M: int, dy: int, delta: float | None = None) -> Network:
    """ReLU network equal to :func:`decode_exact` on C_{M*dy}."""
    if delta is None:
        delta = decoder_delta(M, dy)
    if dy == 1:
        return network([layer([[1.0]], [0.0], 0.0)], 1)
    layers: list[Layer] = []
    for stage in range(dy - 1):
        layers.extend(_extractor_layers(M, delta, stage))
    return network(layers, 1)


def relu_to_leaky(net: Network, probe, delta: float, max_rounds: int = 40) -> Network:
    """Replace ReLU units by leaky units whose negative branch stays below ``delta``.

    For each layer r is the most negative pre-activation over the probe set;
    the slope starts at delta / (L * max(|r|, 1)) with L the number of layers
    holding ReLU units, so the per-unit deviations summed over the depth stay
    below delta. Downstream layers can amplify those deviations, so the slopes
    are then shrunk until the measured sup gap on the probe set is below delta.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    probe = np.asarray(probe, dtype=float).reshape(-1, net.input_dim)
    relu_layers = [i for i, l in enumerate(net.layers) if np.any(l.alphas == 0.0)]
    if not relu_layers:
        return net
    pre = net.trace(probe)
    n_relu = len(relu_layers)
    slopes = {}
    for i in relu_layers:
        r = float(pre[i].min()) if probe.size else 0.0
        slopes[i] = min(0.5, delta / (n_relu * max(-r, 1.0)))
    reference = net.forward(probe)

    def build(shrink):
        layers = []
        for i, lay in enumerate(net.layers):
            if i in slopes:
                a = np.where(lay.alphas == 0.0, slopes[i] * shrink, lay.alphas)
                layers.append(Layer(lay.weight, lay.bias, a))
            else:
                layers.append(lay)
        return Network(tuple(layers), net.input_dim)

    shrink = 1.0
    for _ in range(max_rounds):
        out = build(shrink)
        gap = float(np.max(np.abs(out.forward(probe) - reference))) if probe.size else 0.0
        if gap < delta:
            return out
        shrink *= min(0.5, 0.5 * delta / gap)
    raise InfeasibleBudget(f"leaky substitution could not reach probe gap {delta:g}")


# ---------------------------------------------------------------------------
# compile


@dataclass
class CompileReport:
    bound: float
    grid_gap_lp: float
    grid_gap_sup_offstrips: float
    gamma: float
    strips: ExclusionReport
    p: float = 2.0
    eps_quantizer: float = 0.0
    decoder_probe_gap: float = 0.0
    range_lo: list = field(default_factory=list)
    range_hi: list = field(default_factory=list)
    width: int = 0
    d_min: int = 0
    depth: int = 0
    centered: bool = False

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "grid_gap_lp": self.grid_gap_lp,
            "grid_gap_sup_offstrips": self.grid_gap_sup_offstrips,
            "gamma": self.gamma,
            "strips": self.strips.to_dict(),
            "p": self.p,
            "eps_quantizer": self.eps_quantizer,
            "decoder_probe_gap": self.decoder_probe_gap,
            "range_lo": list(self.range_lo),
            "range_hi": list(self.range_hi),
            "width": self.width,
            "d_min": self.d_min,
            "depth": self.depth,
            "centered": self.centered,
        }


def estimate_range(fstar: Callable, domain: Box, dy: int, seed: int = 0, n_target: int = 20000):
    """Range box of ``fstar`` over ``domain`` from a lattice plus jittered points, 5% margin."""
    d = domain.dim
    per_dim = max(3, int(round(n_target ** (1.0 / d))))
    pts = [domain.lattice(per_dim)]
    rng = np.random.default_rng(seed)
    pts.append(domain.lo + (domain.hi - domain.lo) * rng.random((n_target // 4, d)))
    x = np.vstack(pts)
    y = np.asarray(fstar(x), dtype=float).reshape(x.shape[0], dy)
    lo, hi = y.min(axis=0), y.max(axis=0)
    span = hi - lo
    flat = span <= 1e-12 * (1.0 + np.abs(lo))
    lo = np.where(flat, 0.5 * (lo + hi) - 0.5, lo - 0.05 * span)
    hi = np.where(flat, lo + 1.0, hi + 0.05 * span)
    return lo, hi


def _diag_layer(scale, shift) -> Layer:
    scale = np.asarray(scale, dtype=float)
    return layer(np.diag(scale), shift, 1.0)


def compile(
    fstar: Callable,
    domain: Box,
    params: CodingParams,
    eps_budget: float = 2.0**-8,
    gamma: float = 0.05,
    seed: int = 0,
    centered: bool = False,
    identity_alpha: float = IDENTITY_ALPHA,
    p: float = 2.0,
    measure: bool = True,
    pts_per_dim: int | None = None,
):
    """Compile ``fstar`` on ``domain`` into a leaky-ReLU network.

    The returned network computes W(decoder(memorizer(encoder(V(x))))) where V
    maps the domain onto [0,1]^dx and W maps [0,1]^dy onto an estimated range
    box. Identity units are finally replaced by leaky units with slope
    ``identity_alpha``.

    ``centered=True`` samples the target at cell midpoints and offsets the
    output grid by half a cell, which halves both error terms; the default
    follows the plain floor quantization.
    """
    dx, dy, K, M = params.dx, params.dy, params.K, params.M
    if domain.dim != dx:
        raise ValueError("domain dimension does not match params.dx")
    if not eps_budget > 0:
        raise ValueError("eps_budget must be positive")
    f = _as_batch_fn(fstar, dx, dy)
    y_lo, y_hi = estimate_range(f, domain, dy, seed)
    span = y_hi - y_lo
    width_in = domain.hi - domain.lo
    s_in = 2.0 ** (-K - 1) if centered else 0.0
    s_out = 2.0 ** (-M - 1) if centered else 0.0
    kappa = 1.0 - 2.0**-M if centered else 1.0

    def gstar(u):
        x = domain.lo + width_in * (np.asarray(u, dtype=float) + s_in)
        return np.clip((f(x) - y_lo) / span * kappa, 0.0, 1.0)

    # accuracy propagation: the memorizer has slopes up to 2^{K dx} and the
    # decoder ramps amplify by up to 2^{M dy + 1}
    eps_q = eps_budget * 2.0 ** (-(K * dx + M * dy + 2))
    enc, excl = build_encoder_net(K, dx, eps_q, gamma)
    mem = build_memorizer_net(gstar, K, M, dx, dy)
    dec_relu = build_decoder_net_relu(M, dy)
    codes = grid(M * dy).reshape(-1, 1)
    dec = relu_to_leaky(dec_relu, codes, eps_budget / 4.0)
    dec_gap = float(np.max(np.abs(dec.forward(codes) - dec_relu.forward(codes)))) if codes.size else 0.0

    v_layer = _diag_layer(1.0 / width_in, -domain.lo / width_in)
    w_layer = _diag_layer(span / kappa, y_lo + span * s_out / kappa)
    head = network([v_layer], dx)
    tail = network([w_layer], dy)
    net = compose_all(head, enc, mem, dec, tail)
    net = substitute_identity(net, identity_alpha)
    if np.any(net.alphas() <= 0.0) or np.any(net.alphas() >= 1.0):
        raise InfeasibleBudget("compiled network has activations outside (0, 1)")

    excl = ExclusionReport(excl.gamma, excl.beta, excl.strips, dx, domain)
    stats = width_stats(net)
    report = CompileReport(
        bound=float("nan"),
        grid_gap_lp=float("nan"),
        grid_gap_sup_offstrips=float("nan"),
        gamma=gamma,
        strips=excl,
        p=p,
        eps_quantizer=eps_q,
        decoder_probe_gap=dec_gap,
        range_lo=y_lo.tolist(),
        range_hi=y_hi.tolist(),
        width=stats.w_max,
        d_min=stats.d_min,
        depth=stats.depth,
        centered=centered,
    )
    unit = Box.cube(dx)
    r = 2.0**-K / (2.0 if centered else 1.0)
    omega = metrics.modulus_estimate(lambda u: (f(domain.lo + width_in * u) - y_lo) / span * kappa, unit, r)
    cell_out = 2.0**-M / (2.0 if centered else 1.0)
    report.bound = float(np.max(span / kappa) * (omega + cell_out))
    if measure:
        if pts_per_dim is None:
            pts_per_dim = 100 if dx <= 2 else 22
        report.grid_gap_lp = metrics.lp_norm_gap(net.forward, f, domain, p, pts_per_dim)
        report.grid_gap_sup_offstrips = metrics.sup_norm_gap(net.forward, f, domain, pts_per_dim, exclude=excl)
    return net, report
