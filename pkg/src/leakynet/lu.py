"""LU factorization without pivoting and LU-decomposable networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import Box
from .netcore import Layer, Network

PIVOT_RTOL = 1e-12
# pivots below this are treated as zero whatever the row scale, so divisions cannot overflow
PIVOT_FLOOR = np.finfo(float).tiny / np.finfo(float).eps


class NotDecomposable(ValueError):
    """A leading principal minor is zero (or numerically zero).

    ``index`` is the 1-based order of the first offending minor.
    """

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"leading principal minor {index} is (numerically) zero")


@dataclass(frozen=True, eq=False)
class LuFactors:
    lower: np.ndarray
    upper: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def product(self) -> np.ndarray:
        return self.lower @ self.upper

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for a vector or for each column of a matrix."""
        from scipy.linalg import solve_triangular

        y = solve_triangular(self.lower, b, lower=True, unit_diagonal=True)
        return solve_triangular(self.upper, y, lower=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))

    def logabsdet(self) -> float:
        return float(np.sum(np.log(np.abs(np.diag(self.upper)))))


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def _det_expand(A: np.ndarray) -> float:
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    if n == 2:
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    total = 0.0
    for j in range(n):
        if A[0, j] != 0.0:
            minor = np.delete(A[1:], j, axis=1)
            total += (-1.0) ** j * A[0, j] * _det_expand(minor)
    return total


def leading_minors(A) -> np.ndarray:
    """Determinants of the leading k x k blocks, k = 1..d."""
    A = _square(A)
    out = np.empty(A.shape[0])
    for k in range(1, A.shape[0] + 1):
        block = A[:k, :k]
        out[k - 1] = _det_expand(block) if k <= 4 else float(np.linalg.det(block))
    return out


def _doolittle(A: np.ndarray):
    """Doolittle elimination; returns (L, U, failing_row or None)."""
    n = A.shape[0]
    L = np.eye(n)
    U = np.zeros((n, n))
    row_scale = np.max(np.abs(A), axis=1)
    for k in range(n):
        U[k, k:] = A[k, k:] - L[k, :k] @ U[:k, k:]
        # a pivot left after cancelling terms of size ``update`` carries rounding of that size
        update = np.abs(L[k, :k]) @ np.abs(U[:k, k]) if k else 0.0
        if not abs(U[k, k]) > max(PIVOT_RTOL * max(row_scale[k], update), PIVOT_FLOOR):
            return L, U, k
        if k + 1 < n:
            L[k + 1 :, k] = (A[k + 1 :, k] - L[k + 1 :, :k] @ U[:k, k]) / U[k, k]
    return L, U, None


def lu_decompose(A) -> LuFactors:
    """A = L U with L unit lower triangular; raises :class:`NotDecomposable`.

    A pivot counts as zero when its magnitude is at most 1e-12 times the
    larger of the biggest entry in its row of A and the size of the
    elimination update that produced it.
    """
    A = _square(A)
    L, U, fail = _doolittle(A)
    if fail is not None:
        raise NotDecomposable(fail + 1)
    return LuFactors(L, U)


def is_lu_decomposable(A) -> bool:
    try:
        lu_decompose(A)
    except NotDecomposable:
        return False
    return True


def opnorm_power(E, iters: int = 50) -> float:
    """Spectral norm by power iteration on E^T E from a fixed start vector."""
    E = np.asarray(E, dtype=float)
    if not np.any(E):
        return 0.0
    v = np.ones(E.shape[1]) + 0.1 * np.arange(E.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = E.T @ (E @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # start vector in the null space; restart along the largest column
            v = np.zeros(E.shape[1])
            v[int(np.argmax(np.linalg.norm(E, axis=0)))] = 1.0
            continue
        v = w / nrm
        sigma = np.linalg.norm(E @ v)
    return float(sigma)


def nearest_lu(A, eps: float) -> np.ndarray:
    """A matrix within operator-norm distance ``eps`` of A with an LU factorization.

    Walk the leading blocks; at the first numerically singular one (order k+1),
    add delta * v to the first k+1 entries of row k, where v is a unit vector
    orthogonal to the first k rows of that block. Each row moves by at most
    delta in the Euclidean norm, and delta = eps / (2 sqrt(d) d), so the
    perturbation has operator norm at most eps / (2 d) < eps.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    B = _square(A).copy()
    d = B.shape[0]
    delta = 0.5 * eps / (np.sqrt(d) * d)
    for _ in range(d + 1):
        L, U, k = _doolittle(B)
        if k is None:
            return B
        top = B[:k, : k + 1]
        if k == 0:
            v = np.array([1.0])
        else:
            v = np.linalg.svd(top)[2][-1]
        best = None
        for sgn in (1.0, -1.0):
            trial = B.copy()
            trial[k, : k + 1] += sgn * delta * v
            _, Ut, kt = _doolittle(trial)
            piv = abs(Ut[k, k])
            if best is None or piv > best[0]:
                best = (piv, trial)
        B = best[1]
    L, U, k = _doolittle(B)
    if k is not None:
        raise ValueError("eps is too small relative to the matrix scale to reach a usable pivot")
    return B


# ---------------------------------------------------------------------------
# networks


def pad_layer(lay: Layer, d: int) -> Layer:
    """Zero-pad a layer to d x d; padded units copy the slope of unit 0."""
    if lay.d_in > d or lay.d_out > d:
        raise ValueError(f"layer of shape {lay.weight.shape} exceeds width {d}")
    W = np.zeros((d, d))
    W[: lay.d_out, : lay.d_in] = lay.weight
    b = np.zeros(d)
    b[: lay.d_out] = lay.bias
    a = np.full(d, lay.alphas[0])
    a[: lay.d_out] = lay.alphas
    return Layer(W, b, a)


def is_lu_network(net: Network) -> bool:
    d = net.input_dim
    return all(l.weight.shape == (d, d) and is_lu_decomposable(l.weight) for l in net.layers)


def to_lu_network(net: Network, domain: Box, eps: float, probe: int = 20, max_rounds: int = 8) -> Network:
    """Turn a network of width at most d = input dim = output dim into an LU network.

    Every weight is zero-padded to d x d and, when needed, moved to a nearby
    LU-decomposable matrix. The per-layer budget starts at eps divided by the
    number of perturbed layers and is tightened until the sup gap on the
    ``probe``^d lattice over ``domain`` is below eps.
    """
    d = net.input_dim
    if net.output_dim != d:
        raise ValueError("input and output dimensions must agree")
    if any(l.d_out > d for l in net.layers):
        raise ValueError(f"network width exceeds {d}")
    padded = [pad_layer(l, d) for l in net.layers]
    needs = [not is_lu_decomposable(l.weight) for l in padded]
    n_fix = max(1, sum(needs))
    x = domain.lattice(probe)
    reference = net.forward(x)
    budget = eps / n_fix
    gap = float("nan")
    for _ in range(max_rounds):
        layers = []
        for lay, fix in zip(padded, needs):
            if fix:
                layers.append(Layer(nearest_lu(lay.weight, budget), lay.bias, lay.alphas))
            else:
                layers.append(lay)
        out = Network(tuple(layers), d)
        gap = float(np.max(np.abs(out.forward(x) - reference)))
        if gap < eps:
            return out
        budget *= min(0.1, 0.5 * eps / gap)
    from .coding import InfeasibleBudget

    raise InfeasibleBudget(f"LU conversion gap {gap:g} still above {eps:g} after {max_rounds} rounds")
