"""Continuous piecewise-linear scalar functions and their width-1 network form.

A :class:`PlcFunction` is stored as sorted kinks, one slope per piece and an
anchor point, so continuity holds by construction. Strictly monotone ones
(:class:`PlcsmFunction`) can be realised exactly by a chain of scalar
leaky-ReLU layers (:func:`synthesize_plcsm`); general ones are split into a
decreasing and an increasing part first (:func:`monotone_decompose`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .netcore import Layer, Network, fan_parallel, layer, network

INCREASING = "increasing"
DECREASING = "decreasing"


class NotMonotoneError(ValueError):
    pass


def _canonical(kinks, slopes, values):
    """Drop kinks that separate two equal slopes."""
    kinks = np.asarray(kinks, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if kinks.size == 0:
        return kinks, slopes, values
    keep = slopes[1:] != slopes[:-1]
    if np.all(keep):
        return kinks, slopes, values
    new_slopes = np.concatenate([slopes[:1], slopes[1:][keep]])
    new_values = None if values is None else np.asarray(values)[keep]
    return kinks[keep], new_slopes, new_values


@dataclass(frozen=True, eq=False)
class PlcFunction:
    """Continuous piecewise-linear function on the real line.

    ``slopes[0]`` applies left of ``kinks[0]`` and ``slopes[-1]`` right of the
    last kink. ``anchor = (x0, y0)`` fixes the value at one point.
    """

    kinks: np.ndarray
    slopes: np.ndarray
    anchor: tuple
    knot_values: np.ndarray | None = None

    def __post_init__(self):
        k = np.asarray(self.kinks, dtype=float).reshape(-1)
        s = np.asarray(self.slopes, dtype=float).reshape(-1)
        if s.size != k.size + 1:
            raise ValueError("need exactly one more slope than kinks")
        if k.size > 1 and not np.all(np.diff(k) > 0):
            raise ValueError("kinks must be strictly increasing")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(s))):
            raise ValueError("kinks and slopes must be finite")
        values = self.knot_values
        k, s, values = _canonical(k, s, values)
        if values is None:
            values = _integrate_knots(k, s, float(self.anchor[0]), float(self.anchor[1]))
        values = np.asarray(values, dtype=float)
        for arr in (k, s, values):
            arr.setflags(write=False)
        object.__setattr__(self, "kinks", k)
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "anchor", (float(self.anchor[0]), float(self.anchor[1])))
        object.__setattr__(self, "knot_values", values)

    @property
    def n_pieces(self) -> int:
        return self.slopes.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kinks.size == 0:
            x0, y0 = self.anchor
            return y0 + self.slopes[0] * (x - x0)
        p = np.searchsorted(self.kinks, x, side="right")
        left = np.maximum(p - 1, 0)
        ref_x = self.kinks[left]
        ref_y = self.knot_values[left]
        return ref_y + self.slopes[p] * (x - ref_x)

    def shifted(self, c: float) -> "PlcFunction":
        """Same function plus the constant ``c``."""
        return type(self)(
            self.kinks, self.slopes, (self.anchor[0], self.anchor[1] + c), self.knot_values + c
        )

    def scaled(self, c: float) -> "PlcFunction":
        return PlcFunction(self.kinks, c * self.slopes, (self.anchor[0], c * self.anchor[1]), c * self.knot_values)


def _integrate_knots(kinks, slopes, x0, y0):
    """Values at the kinks obtained by integrating slopes away from the anchor."""
    m = kinks.size
    v = np.empty(m)
    if m == 0:
        return v
    j0 = int(np.searchsorted(kinks, x0, side="right"))  # piece holding the anchor
    if j0 < m:
        v[j0] = y0 + slopes[j0] * (kinks[j0] - x0)
        for j in range(j0 + 1, m):
            v[j] = v[j - 1] + slopes[j] * (kinks[j] - kinks[j - 1])
    if j0 > 0:
        v[j0 - 1] = y0 - slopes[j0] * (x0 - kinks[j0 - 1])
        for j in range(j0 - 2, -1, -1):
            v[j] = v[j + 1] - slopes[j + 1] * (kinks[j + 1] - kinks[j])
    return v


@dataclass(frozen=True, eq=False)
class PlcsmFunction(PlcFunction):
    """Strictly monotone continuous piecewise-linear function."""

    def __post_init__(self):
        super().__post_init__()
        if not (np.all(self.slopes > 0) or np.all(self.slopes < 0)):
            raise NotMonotoneError("slopes must be all positive or all negative")

    @property
    def direction(self) -> str:
        return INCREASING if self.slopes[0] > 0 else DECREASING


def as_plcsm(f: PlcFunction) -> PlcsmFunction:
    if isinstance(f, PlcsmFunction):
        return f
    return PlcsmFunction(f.kinks, f.slopes, f.anchor, f.knot_values)


def eval_plc(f: PlcFunction, x: float) -> float:
    return float(f(float(x)))


def fit_points(points) -> PlcFunction:
    """Interpolate points with secant pieces; the outer pieces extend the outer secants.

    Returns a :class:`PlcsmFunction` when the ordinates are strictly monotone.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    xs, ys = pts[:, 0], pts[:, 1]
    dx = np.diff(xs)
    if not np.all(dx > 0):
        raise ValueError("abscissae must be strictly increasing (duplicates are not allowed)")
    slopes = np.diff(ys) / dx
    f = PlcFunction(xs[1:-1], slopes, (xs[0], ys[0]), ys[1:-1])
    dy = np.diff(ys)
    if np.all(dy > 0) or np.all(dy < 0):
        return as_plcsm(f)
    return f


def monotone_decompose(f: PlcFunction, margin: float = 1.0):
    """Split ``f`` into a strictly decreasing and a strictly increasing part.

    Negative slopes go to the decreasing part (shifted by ``-margin``) and the
    others to the increasing part (shifted by ``+margin``); the complementary
    part receives the constant slope ``-margin`` or ``+margin``. Both parts take
    the value f(x1)/2 at the first kink x1.
    """
    if not margin > 0:
        raise ValueError("margin must be positive")
    a = f.slopes
    neg = a < 0
    dec_slopes = np.where(neg, a - margin, -margin)
    inc_slopes = np.where(neg, margin, a + margin)
    x1 = f.kinks[0] if f.kinks.size else f.anchor[0]
    half = 0.5 * float(f(x1))
    dec = PlcsmFunction(f.kinks, dec_slopes, (x1, half))
    inc = PlcsmFunction(f.kinks, inc_slopes, (x1, half))
    return dec, inc


def scaled_lrelu(a: float, b: float) -> Network:
    """Width-1 network for x -> a*x (x < 0), b*x (x >= 0) with a, b > 0, a != b."""
    if not (a > 0 and b > 0):
        raise ValueError("both slopes must be positive")
    if a == b:
        raise ValueError("equal slopes: use a plain affine layer")
    if a < b:
        return network([layer([[1.0]], [0.0], a / b), layer([[b]], [0.0], 1.0)])
    return network([layer([[-1.0]], [0.0], b / a), layer([[-a]], [0.0], 1.0)])


def synthesize_plcsm(f: PlcFunction) -> Network:
    """Exact width-1 leaky-ReLU chain for a strictly monotone PLC function.

    The chain is built from the right-most piece outwards: start from the last
    affine piece and, for each kink from right to left, bend the slope with a
    leaky unit centred at the kink value. Ratios below one use the leaky slope
    directly; ratios above one use the reflected form -r*sigma_{1/r}(-t).
    Consecutive affine maps are folded, so the depth equals the number of pieces.
    """
    f = as_plcsm(f)
    sign = 1.0
    if f.direction == DECREASING:
        f = f.scaled(-1.0)
        sign = -1.0
    a = f.slopes
    kinks = f.kinks
    vals = f.knot_values
    if kinks.size == 0:
        x0, y0 = f.anchor
        return network([layer([[sign * a[0]]], [sign * (y0 - a[0] * x0)], 1.0)])
    layers: list[Layer] = []
    # pending affine map (w, b) applied to the previous layer's output
    w = a[-1]
    b = vals[-1] - a[-1] * kinks[-1]
    for k in range(kinks.size - 1, -1, -1):
        c = vals[k]
        ratio = a[k] / a[k + 1]
        if ratio < 1.0:
            layers.append(layer([[w]], [b - c], ratio))
            w, b = 1.0, c
        else:
            layers.append(layer([[-w]], [c - b], 1.0 / ratio))
            w, b = -ratio, c
    layers.append(layer([[sign * w]], [sign * b], 1.0))
    return network(layers)


def synthesize_plc(f: PlcFunction, margin: float = 1.0, nonneg_on: tuple | None = None) -> Network:
    """Width-2 network for a general PLC function via monotone decomposition.

    With ``nonneg_on=(lo, hi)`` each strand is shifted by a constant so that its
    output is nonnegative on [lo, hi]; the shifts cancel in the summing layer.
    This keeps the identity units at the strand ends exact under later
    identity-to-leaky substitution for inputs in that interval.
    """
    dec, inc = monotone_decompose(f, margin)
    shifts = [0.0, 0.0]
    if nonneg_on is not None:
        lo, hi = nonneg_on
        for i, g in enumerate((dec, inc)):
            low = float(min(g(lo), g(hi)))
            shifts[i] = max(0.0, -low) + 1.0
        dec, inc = dec.shifted(shifts[0]), inc.shifted(shifts[1])
    strands = fan_parallel([synthesize_plcsm(dec), synthesize_plcsm(inc)])
    total = layer([[1.0, 1.0]], [-(shifts[0] + shifts[1])], 1.0)
    return Network(strands.layers + (total,), 1)


def fit_monotone_grid(g: Callable, interval: Sequence[float], n: int) -> PlcsmFunction:
    """Interpolate ``g`` on the uniform grid with step (b-a)/n (n+1 knots)."""
    a, b = float(interval[0]), float(interval[1])
    if not (b > a):
        raise ValueError("interval must satisfy a < b")
    if n < 1:
        raise ValueError("n must be positive")
    xs = np.linspace(a, b, n + 1)
    try:
        ys = np.asarray(g(xs), dtype=float).reshape(-1)
        if ys.shape != xs.shape:
            raise ValueError
    except (TypeError, ValueError):
        ys = np.array([float(g(x)) for x in xs])
    d = np.diff(ys)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise NotMonotoneError("sampled values are not strictly monotone")
    return as_plcsm(fit_points(np.column_stack([xs, ys])))
