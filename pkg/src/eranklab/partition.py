"""Partition-of-unity construction functions and uniform domain decompositions.

Two construction-function kinds are supported on the cell-local coordinate
x_tilde = (x - x_n) / r_n, where r_n is the cell half-width so each cell maps
onto [-1, 1]:

* characteristic: 1 on [-1, 1), 0 elsewhere (rightmost cell closed at 1 so
  the domain endpoint is covered);
* sine blend: piecewise (1 + sin(2 pi x))/2 on [-5/4, -3/4), 1 on
  [-3/4, 3/4), (1 - sin(2 pi x))/2 on [3/4, 5/4), 0 elsewhere. Neighboring
  blends are exact complements when centers are 2 r apart, so interior sums
  telescope to 1.

Edge cells of the sine blend drop the outward-facing blend (the ramp is
replaced by 1), otherwise the sum over cells would fall below 1 within 1/4
cell of the domain boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "PartitionKind",
    "Partition",
    "uniform_partition",
    "psi_a",
    "psi_b",
    "psi_b_d1",
    "psi_b_d2",
]


class PartitionKind(str, Enum):
    CHARACTERISTIC = "a"
    SINE_BLEND = "b"


def psi_a(x_tilde):
    """Characteristic construction function: 1 on [-1, 1), else 0."""
    x = np.asarray(x_tilde, dtype=float)
    out = np.where((x >= -1.0) & (x < 1.0), 1.0, 0.0)
    return out if out.ndim else float(out)


def _blend_masks(x):
    left = (x >= -1.25) & (x < -0.75)
    flat = (x >= -0.75) & (x < 0.75)
    right = (x >= 0.75) & (x < 1.25)
    return left, flat, right


def psi_b(x_tilde):
    """Sine-blend construction function (C^1, supported on [-5/4, 5/4))."""
    x = np.atleast_1d(np.asarray(x_tilde, dtype=float))
    left, flat, right = _blend_masks(x)
    out = np.zeros_like(x)
    out[left] = 0.5 * (1.0 + np.sin(2.0 * np.pi * x[left]))
    out[flat] = 1.0
    out[right] = 0.5 * (1.0 - np.sin(2.0 * np.pi * x[right]))
    return out if np.ndim(x_tilde) else float(out[0])


def psi_b_d1(x_tilde):
    """First derivative of :func:`psi_b` w.r.t. x_tilde (right-limit at breaks)."""
    x = np.atleast_1d(np.asarray(x_tilde, dtype=float))
    left, _, right = _blend_masks(x)
    out = np.zeros_like(x)
    out[left] = np.pi * np.cos(2.0 * np.pi * x[left])
    out[right] = -np.pi * np.cos(2.0 * np.pi * x[right])
    return out if np.ndim(x_tilde) else float(out[0])


def psi_b_d2(x_tilde):
    """Second derivative of :func:`psi_b` w.r.t. x_tilde (right-limit at breaks)."""
    x = np.atleast_1d(np.asarray(x_tilde, dtype=float))
    left, _, right = _blend_masks(x)
    out = np.zeros_like(x)
    out[left] = -2.0 * np.pi**2 * np.sin(2.0 * np.pi * x[left])
    out[right] = 2.0 * np.pi**2 * np.sin(2.0 * np.pi * x[right])
    return out if np.ndim(x_tilde) else float(out[0])


def _psi1d(x, kind, is_left, is_right, order):
    """1-d construction function of one cell, with boundary extension.

    ``order`` selects value (0), first (1) or second (2) derivative w.r.t.
    the local coordinate. Half-open piece masks give the right-limit at
    exact breakpoints.
    """
    x = np.asarray(x, dtype=float)
    if kind is PartitionKind.CHARACTERISTIC:
        if order > 0:
            # Piecewise-constant convention: derivative taken as 0 everywhere.
            return np.zeros_like(x)
        inside = (x >= -1.0) & (x <= 1.0 if is_right else x < 1.0)
        return np.where(inside, 1.0, 0.0)

    left, flat, right = _blend_masks(x)
    out = np.zeros_like(x)
    if order == 0:
        out[flat] = 1.0
        if is_left:
            out[left] = 1.0
        else:
            out[left] = 0.5 * (1.0 + np.sin(2.0 * np.pi * x[left]))
        if is_right:
            out[right] = 1.0
        else:
            out[right] = 0.5 * (1.0 - np.sin(2.0 * np.pi * x[right]))
    elif order == 1:
        if not is_left:
            out[left] = np.pi * np.cos(2.0 * np.pi * x[left])
        if not is_right:
            out[right] = -np.pi * np.cos(2.0 * np.pi * x[right])
    elif order == 2:
        if not is_left:
            out[left] = -2.0 * np.pi**2 * np.sin(2.0 * np.pi * x[left])
        if not is_right:
            out[right] = 2.0 * np.pi**2 * np.sin(2.0 * np.pi * x[right])
    else:
        raise ValueError(f"unsupported derivative order {order}")
    return out


@dataclass(frozen=True)
class Partition:
    """Uniform tensor-product partition of a box domain.

    ``centers_1d[k]`` and ``radii_1d[k]`` hold the cell centers and the
    common half-width along dimension k; cells are enumerated in C order
    over the per-dimension index grid.
    """

    domain: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    kind: PartitionKind
    centers_1d: tuple[np.ndarray, ...]
    radii_1d: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def count(self) -> int:
        return int(np.prod(self.counts))

    @property
    def centers(self) -> np.ndarray:
        """(M_p, d) array of cell centers."""
        combos = list(itertools.product(*[c for c in self.centers_1d]))
        return np.array(combos, dtype=float)

    @property
    def radii(self) -> np.ndarray:
        """(M_p, d) array of cell half-widths."""
        return np.tile(np.array(self.radii_1d, dtype=float), (self.count, 1))

    def cell_index(self, n: int) -> tuple[int, ...]:
        """Per-dimension indices of flat cell n (C order)."""
        if not 0 <= n < self.count:
            raise IndexError(f"cell index {n} out of range [0, {self.count})")
        return np.unravel_index(n, self.counts)

    def local_coords(self, n: int, x: np.ndarray) -> np.ndarray:
        """(x - x_n) / r_n for cell n; x has shape (N, d)."""
        idx = self.cell_index(n)
        center = np.array([self.centers_1d[k][idx[k]] for k in range(self.dim)])
        radius = np.array(self.radii_1d)
        return (np.atleast_2d(np.asarray(x, dtype=float)) - center) / radius

    def _edge_flags(self, n: int) -> list[tuple[bool, bool]]:
        idx = self.cell_index(n)
        return [
            (idx[k] == 0, idx[k] == self.counts[k] - 1) for k in range(self.dim)
        ]

    def _factors(self, n: int, x: np.ndarray, order: int) -> np.ndarray:
        """Per-dimension 1-d construction values/derivatives, shape (d, N)."""
        xt = self.local_coords(n, x)
        flags = self._edge_flags(n)
        return np.stack(
            [
                _psi1d(xt[:, k], self.kind, flags[k][0], flags[k][1], order)
                for k in range(self.dim)
            ]
        )

    def psi(self, n: int, x: np.ndarray) -> np.ndarray:
        """psi_n(x) = prod_k psi(x_tilde_k), shape (N,)."""
        return self._factors(n, x, 0).prod(axis=0)

    def psi_grad(self, n: int, x: np.ndarray) -> np.ndarray:
        """Gradient of psi_n w.r.t. x, shape (N, d); chain factor 1/r per dim."""
        vals = self._factors(n, x, 0)
        d1 = self._factors(n, x, 1)
        out = np.empty((vals.shape[1], self.dim))
        for j in range(self.dim):
            others = np.prod(np.delete(vals, j, axis=0), axis=0) if self.dim > 1 else 1.0
            out[:, j] = others * d1[j] / self.radii_1d[j]
        return out

    def psi_hess_diag(self, n: int, x: np.ndarray) -> np.ndarray:
        """Pure second derivatives of psi_n per dimension, shape (N, d)."""
        vals = self._factors(n, x, 0)
        d2 = self._factors(n, x, 2)
        out = np.empty((vals.shape[1], self.dim))
        for j in range(self.dim):
            others = np.prod(np.delete(vals, j, axis=0), axis=0) if self.dim > 1 else 1.0
            out[:, j] = others * d2[j] / self.radii_1d[j] ** 2
        return out

    def sum_psi(self, x: np.ndarray) -> np.ndarray:
        """Sum of all construction functions at x; 1 on the domain."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape[0])
        for n in range(self.count):
            total += self.psi(n, x)
        return total

    def breakpoints_1d(self, k: int) -> np.ndarray:
        """Physical coordinates along dim k where pieces of psi change."""
        centers = self.centers_1d[k]
        r = self.radii_1d[k]
        if self.kind is PartitionKind.CHARACTERISTIC:
            offsets = np.array([-1.0, 1.0])
        else:
            offsets = np.array([-1.25, -0.75, 0.75, 1.25])
        return np.unique((centers[:, None] + offsets[None, :] * r).ravel())


def uniform_partition(domain, counts, kind=PartitionKind.SINE_BLEND) -> Partition:
    """Tile a box domain with equal cells: x_n = lo + (2n - 1) r, r = (hi - lo) / (2 M_p).

    ``domain`` is (lo, hi) in 1-d or a sequence of per-dimension intervals;
    ``counts`` is an int or a per-dimension sequence.
    """
    kind = PartitionKind(kind)
    dom = np.asarray(domain, dtype=float)
    if dom.ndim == 1:
        dom = dom[None, :]
    if dom.ndim != 2 or dom.shape[1] != 2:
        raise ValueError(f"domain must be (lo, hi) pairs, got {domain!r}")
    if np.isscalar(counts):
        counts = [int(counts)] * dom.shape[0]
    counts = tuple(int(c) for c in counts)
    if len(counts) != dom.shape[0]:
        raise ValueError("one cell count per dimension is required")
    centers_1d = []
    radii_1d = []
    for (lo, hi), m in zip(dom, counts):
        if not hi > lo:
            raise ValueError(f"degenerate interval [{lo}, {hi}]")
        if m < 1:
            raise ValueError(f"cell count must be >= 1, got {m}")
        r = (hi - lo) / (2.0 * m)
        centers_1d.append(lo + (2.0 * np.arange(1, m + 1) - 1.0) * r)
        radii_1d.append(r)
    return Partition(
        domain=tuple((float(lo), float(hi)) for lo, hi in dom),
        counts=counts,
        kind=kind,
        centers_1d=tuple(centers_1d),
        radii_1d=tuple(radii_1d),
    )
