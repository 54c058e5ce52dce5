"""Built-in target functions on the unit cube (vectorised over rows)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Target:
    name: str
    dx: int
    dy: int
    fn: Callable

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dx)
        return np.asarray(self.fn(x), dtype=float).reshape(-1, self.dy)


def _identity(x):
    return x.copy()


def _swap2(x):
    return x[:, ::-1].copy()


def _sine2(x):
    return (np.sin(np.pi * x) + 1.0) / 2.0


def _sawtooth1(x):
    t = np.mod(3.0 * x[:, 0], 1.0)
    return (1.0 - np.abs(2.0 * t - 1.0)).reshape(-1, 1)


def _const2(x):
    return np.full((x.shape[0], 2), 0.5)


def smooth_target(dx: int, dy: int) -> Target:
    """Generic smooth map [0,1]^dx -> [0,1]^dy used for the width checks."""
    w = 1.0 + 0.5 * np.arange(dx)

    def fn(x):
        cols = [(1.0 + np.sin(np.pi * (x @ (w / dx)) + 0.7 * j)) / 2.0 for j in range(dy)]
        return np.column_stack(cols)

    return Target(f"smooth{dx}x{dy}", dx, dy, fn)


ZOO = {
    "identity1": Target("identity1", 1, 1, _identity),
    "identity2": Target("identity2", 2, 2, _identity),
    "identity3": Target("identity3", 3, 3, _identity),
    "swap2": Target("swap2", 2, 2, _swap2),
    "sine2": Target("sine2", 2, 2, _sine2),
    "sawtooth1": Target("sawtooth1", 1, 1, _sawtooth1),
    "const2": Target("const2", 2, 2, _const2),
}


def get_target(name: str, dx: int | None = None, dy: int | None = None) -> Target:
    if name == "smooth":
        return smooth_target(dx or 1, dy or 1)
    if name not in ZOO:
        raise KeyError(f"unknown target {name!r}; choose from {sorted(ZOO) + ['smooth']}")
    t = ZOO[name]
    if (dx is not None and dx != t.dx) or (dy is not None and dy != t.dy):
        raise ValueError(f"target {name} has dx={t.dx}, dy={t.dy}")
    return t
