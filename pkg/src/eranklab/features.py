"""Random-feature models: activations, operator application, basis and kernel assembly.

The model is

    u(x) = (1/sqrt(M)) * sum_n psi_n(x) * sum_k a_{nk} * sigma(w_{nk} . (y_n, 1)),

with y_n = (x - x_n) / r_n the cell-local coordinate, so the variance-scaling
range R_m of the inner weights is dimensionless relative to [-1, 1] cell
coordinates and composes with the partition of unity.

Derivatives in x pick up one 1/r factor per order, both through psi's
argument and through the rescaled feature input; everything here is closed
form, no automatic differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import sym_eigendecomp
from .partition import Partition, PartitionKind, uniform_partition

__all__ = [
    "Activation",
    "get_activation",
    "OperatorSpec",
    "RandomFeatureModel",
    "init_model",
    "uniform_grid",
    "basis_matrix",
    "kernel_ga",
    "kernel_gw",
    "halfcell_spectral_gap",
    "ModelGridCache",
]


def _tanh_tables(z, max_order):
    t = np.tanh(z)
    out = [t]
    if max_order >= 1:
        s = 1.0 - t * t
        out.append(s)
    if max_order >= 2:
        out.append(-2.0 * t * s)
    if max_order >= 3:
        out.append(s * (6.0 * t * t - 2.0))
    return out


def _sin_tables(z, max_order):
    out = [np.sin(z)]
    if max_order >= 1:
        out.append(np.cos(z))
    if max_order >= 2:
        out.append(-out[0])
    if max_order >= 3:
        out.append(-out[1])
    return out


def _relu3_tables(z, max_order):
    m = np.maximum(z, 0.0)
    out = [m**3]
    if max_order >= 1:
        out.append(3.0 * m * m)
    if max_order >= 2:
        out.append(6.0 * m)
    if max_order >= 3:
        out.append(np.where(z > 0.0, 6.0, 0.0))
    return out


_ACTIVATION_TABLES = {
    "tanh": _tanh_tables,
    "sin": _sin_tables,
    "relu3": _relu3_tables,
}


@dataclass(frozen=True)
class Activation:
    """Closed-form activation with derivatives up to third order.

    The third derivative is only exercised when inner weights are trained
    under a second-order differential operator.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in _ACTIVATION_TABLES:
            raise ValueError(
                f"unknown activation {self.kind!r}; choose from {sorted(_ACTIVATION_TABLES)}"
            )

    def tables(self, z, max_order: int):
        """[sigma(z), sigma'(z), ...] up to ``max_order``, one pass over z."""
        return _ACTIVATION_TABLES[self.kind](np.asarray(z, dtype=float), max_order)

    def value(self, z):
        return self.tables(z, 0)[0]

    def d1(self, z):
        return self.tables(z, 1)[1]

    def d2(self, z):
        return self.tables(z, 2)[2]

    def d3(self, z):
        return self.tables(z, 3)[3]


def get_activation(name) -> Activation:
    if isinstance(name, Activation):
        return name
    return Activation(str(name))


@dataclass(frozen=True)
class OperatorSpec:
    """Linear differential operator c0*u + sum_j c1[j]*du/dx_j + sum_j c2[j]*d2u/dx_j2.

    ``nonlinear`` may be "burgers" for the steady Burgers residual
    r(u) = -u'' + u'*u - f, valid in one dimension only; the linear
    coefficients are ignored in that case.
    """

    c0: float = 0.0
    c1: tuple[float, ...] = ()
    c2: tuple[float, ...] = ()
    nonlinear: str | None = None

    def __post_init__(self):
        if self.nonlinear not in (None, "burgers"):
            raise ValueError(f"unknown nonlinearity {self.nonlinear!r}")

    @classmethod
    def identity(cls) -> "OperatorSpec":
        return cls(c0=1.0)

    @classmethod
    def burgers_steady(cls) -> "OperatorSpec":
        return cls(nonlinear="burgers")

    @property
    def is_linear(self) -> bool:
        return self.nonlinear is None

    def coeffs(self, dim: int) -> tuple[float, np.ndarray, np.ndarray]:
        """(c0, c1[dim], c2[dim]) with missing entries zero-filled."""
        c1 = np.zeros(dim)
        c2 = np.zeros(dim)
        c1[: len(self.c1)] = self.c1
        c2[: len(self.c2)] = self.c2
        return float(self.c0), c1, c2

    def max_order(self, dim: int) -> int:
        _, c1, c2 = self.coeffs(dim)
        if np.any(c2):
            return 2
        if np.any(c1):
            return 1
        return 0


@dataclass
class RandomFeatureModel:
    """Shallow network with per-cell random features under a partition of unity.

    ``weights`` has shape (M_p, J_n, d+1) with the bias in the last slot;
    ``coeffs`` has shape (M_p, J_n). Output scale is 1/sqrt(M) with
    M = M_p * J_n. When ``trainable_inner`` is false only ``coeffs`` are
    free (random feature mode).
    """

    partition: Partition
    activation: Activation
    weights: np.ndarray
    coeffs: np.ndarray
    r_m: float
    trainable_inner: bool = False
    seed: int | None = None

    @property
    def dim(self) -> int:
        return self.partition.dim

    @property
    def j_n(self) -> int:
        return self.weights.shape[1]

    @property
    def m_total(self) -> int:
        return self.weights.shape[0] * self.weights.shape[1]

    @property
    def out_scale(self) -> float:
        return 1.0 / np.sqrt(self.m_total)

    def _as_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        return x

    def value(self, x) -> np.ndarray:
        """u(x) for points of shape (N, d)."""
        x = self._as_points(x)
        out = np.zeros(x.shape[0])
        for n in range(self.partition.count):
            z = self.partition.local_coords(n, x) @ self.weights[n, :, : self.dim].T
            z += self.weights[n, :, self.dim]
            s0 = self.activation.tables(z, 0)[0]
            out += self.partition.psi(n, x) * (s0 @ self.coeffs[n])
        return out * self.out_scale

    def gradient(self, x) -> np.ndarray:
        """du/dx_j, shape (N, d)."""
        x = self._as_points(x)
        out = np.zeros((x.shape[0], self.dim))
        for n in range(self.partition.count):
            y = self.partition.local_coords(n, x)
            z = y @ self.weights[n, :, : self.dim].T + self.weights[n, :, self.dim]
            s0, s1 = self.activation.tables(z, 1)
            p0 = self.partition.psi(n, x)
            p1 = self.partition.psi_grad(n, x)
            cell = s0 @ self.coeffs[n]
            for j in range(self.dim):
                kr = self.weights[n, :, j] / self.partition.radii_1d[j]
                out[:, j] += p1[:, j] * cell + p0 * ((s1 * kr) @ self.coeffs[n])
        return out * self.out_scale

    def hess_diag(self, x) -> np.ndarray:
        """Pure second derivatives d2u/dx_j2, shape (N, d)."""
        x = self._as_points(x)
        out = np.zeros((x.shape[0], self.dim))
        for n in range(self.partition.count):
            y = self.partition.local_coords(n, x)
            z = y @ self.weights[n, :, : self.dim].T + self.weights[n, :, self.dim]
            s0, s1, s2 = self.activation.tables(z, 2)
            p0 = self.partition.psi(n, x)
            p1 = self.partition.psi_grad(n, x)
            p2 = self.partition.psi_hess_diag(n, x)
            cell = s0 @ self.coeffs[n]
            for j in range(self.dim):
                kr = self.weights[n, :, j] / self.partition.radii_1d[j]
                out[:, j] += (
                    p2[:, j] * cell
                    + 2.0 * p1[:, j] * ((s1 * kr) @ self.coeffs[n])
                    + p0 * ((s2 * kr * kr) @ self.coeffs[n])
                )
        return out * self.out_scale

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "mp_per_dim": list(self.partition.counts),
            "mp_total": self.partition.count,
            "jn": self.j_n,
            "m_total": self.m_total,
            "rm": self.r_m,
            "activation": self.activation.kind,
            "pou_kind": self.partition.kind.value,
            "domain": [list(iv) for iv in self.partition.domain],
            "trainable_inner": self.trainable_inner,
            "seed": self.seed,
        }


def init_model(
    seed: int,
    domain,
    mp,
    jn: int,
    r_m: float,
    activation="tanh",
    kind=PartitionKind.SINE_BLEND,
    trainable_inner: bool = False,
) -> RandomFeatureModel:
    """Seeded model construction; identical (seed, config) gives bit-identical arrays.

    Inner weights (including biases) are i.i.d. U(-R_m, R_m). Outer
    coefficients are U(-1, 1) when the inner layer is trainable and zero in
    random-feature mode, where they are set by the direct solve. The weight
    array is drawn before the coefficient array.
    """
    if jn < 1:
        raise ValueError(f"neurons per cell must be >= 1, got {jn}")
    if not r_m > 0:
        raise ValueError(f"initialization half-range must be positive, got {r_m}")
    part = uniform_partition(domain, mp, kind)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-r_m, r_m, size=(part.count, jn, part.dim + 1))
    if trainable_inner:
        coeffs = rng.uniform(-1.0, 1.0, size=(part.count, jn))
    else:
        coeffs = np.zeros((part.count, jn))
    return RandomFeatureModel(
        partition=part,
        activation=get_activation(activation),
        weights=weights,
        coeffs=coeffs,
        r_m=float(r_m),
        trainable_inner=trainable_inner,
        seed=seed,
    )


def uniform_grid(domain, n_per_dim, partition: Partition | None = None) -> np.ndarray:
    """Uniform tensor grid with endpoints included, shape (prod(n), d).

    Points that land exactly on a sine-blend breakpoint of ``partition``
    are nudged one ulp toward the domain interior so operator rows never
    sample the one-sided second-derivative jump.
    """
    dom = np.asarray(domain, dtype=float)
    if dom.ndim == 1:
        dom = dom[None, :]
    if np.isscalar(n_per_dim):
        n_per_dim = [int(n_per_dim)] * dom.shape[0]
    axes = []
    for k, ((lo, hi), n) in enumerate(zip(dom, n_per_dim)):
        ax = np.linspace(lo, hi, int(n))
        if partition is not None and partition.kind is PartitionKind.SINE_BLEND:
            mid = 0.5 * (lo + hi)
            for bp in partition.breakpoints_1d(k):
                hit = ax == bp
                if np.any(hit):
                    ax[hit] = np.nextafter(bp, hi if bp < mid else lo)
        axes.append(ax)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


class ModelGridCache:
    """Grid-dependent scratch space for repeated evaluation on a fixed grid.

    Partition values and local coordinates depend only on the grid, so they
    are computed once; activation tables are refreshed whenever the inner
    weights change. Per-row summation order is fixed, so results do not
    depend on how callers parallelize over grids.
    """

    def __init__(self, model: RandomFeatureModel, x):
        self.model = model
        self.x = model._as_points(x)
        self.n_points = self.x.shape[0]
        part = model.partition
        self.static = []
        for n in range(part.count):
            y = part.local_coords(n, self.x)
            self.static.append(
                {
                    "y": y,
                    "yaug": np.concatenate([y, np.ones((self.n_points, 1))], axis=1),
                    "p0": part.psi(n, self.x),
                    "p1": part.psi_grad(n, self.x),
                    "p2": part.psi_hess_diag(n, self.x),
                }
            )
        self._feats: list[list[np.ndarray]] | None = None
        self._feat_order = -1
        # Basis blocks depend only on the weights, so they can be reused
        # between epochs while the inner layer is frozen.
        self._block_memo: dict = {}

    def _recompute(self, max_order: int):
        model = self.model
        d = model.dim
        feats = []
        for n in range(model.partition.count):
            z = self.static[n]["y"] @ model.weights[n, :, :d].T + model.weights[n, :, d]
            feats.append(model.activation.tables(z, max_order))
        self._feats = feats
        self._feat_order = max_order

    def refresh(self, max_order: int):
        """Recompute activation tables after the inner weights changed."""
        self._recompute(max_order)
        self._block_memo = {}

    def _need(self, max_order: int):
        # Extending the table order does not invalidate cached blocks; only
        # a weight update (refresh) does.
        if self._feats is None or self._feat_order < max_order:
            self._recompute(max_order)
        return self._feats

    def _kr(self, n: int) -> np.ndarray:
        """Per-dimension chain factors k_j / r_j for cell n, shape (d, J)."""
        model = self.model
        return np.stack(
            [
                model.weights[n, :, j] / model.partition.radii_1d[j]
                for j in range(model.dim)
            ]
        )

    def basis_blocks(self, op: OperatorSpec) -> list[np.ndarray]:
        """Per-cell (N, J_n) blocks of L applied to the modified basis, incl. 1/sqrt(M)."""
        model = self.model
        if not op.is_linear:
            raise ValueError("nonlinear residuals are handled in training, not here")
        key = (op.c0, op.c1, op.c2)
        if key in self._block_memo:
            return self._block_memo[key]
        d = model.dim
        c0, c1, c2 = op.coeffs(d)
        order = op.max_order(d)
        feats = self._need(order)
        blocks = []
        for n in range(model.partition.count):
            st = self.static[n]
            s = feats[n]
            kr = self._kr(n)
            b = c0 * st["p0"][:, None] * s[0] if c0 else np.zeros((self.n_points, model.j_n))
            for j in range(d):
                if c1[j]:
                    b = b + c1[j] * (
                        st["p1"][:, j, None] * s[0] + st["p0"][:, None] * s[1] * kr[j]
                    )
                if c2[j]:
                    b = b + c2[j] * (
                        st["p2"][:, j, None] * s[0]
                        + 2.0 * st["p1"][:, j, None] * s[1] * kr[j]
                        + st["p0"][:, None] * s[2] * kr[j] ** 2
                    )
            blocks.append(b * model.out_scale)
        self._block_memo[key] = blocks
        return blocks

    def op_values(self, op: OperatorSpec, blocks=None) -> np.ndarray:
        """(L u)(x_i) on the grid."""
        blocks = blocks if blocks is not None else self.basis_blocks(op)
        out = np.zeros(self.n_points)
        for n, b in enumerate(blocks):
            out += b @ self.model.coeffs[n]
        return out

    def weight_jacobian_blocks(self, op: OperatorSpec) -> list[np.ndarray]:
        """Per-cell (N, J_n, d+1) blocks of d(L u)/d w_{nkm}.

        Derived by pushing L through d(psi * sigma)/dw = psi * sigma' * (y, 1):
        the bias column is L applied to psi*sigma' via the chain rule; weight
        column m adds the terms from x-derivatives of y_m itself.
        """
        model = self.model
        if not op.is_linear:
            raise ValueError("nonlinear residuals are handled in training, not here")
        d = model.dim
        c0, c1, c2 = op.coeffs(d)
        order = op.max_order(d)
        feats = self._need(order + 1)
        blocks = []
        for n in range(model.partition.count):
            st = self.static[n]
            s = feats[n]
            kr = self._kr(n)
            p0 = st["p0"][:, None]
            # L applied to psi * sigma' (the bias sensitivity).
            base = c0 * p0 * s[1] if c0 else np.zeros((self.n_points, model.j_n))
            for j in range(d):
                if c1[j]:
                    base = base + c1[j] * (
                        st["p1"][:, j, None] * s[1] + p0 * s[2] * kr[j]
                    )
                if c2[j]:
                    base = base + c2[j] * (
                        st["p2"][:, j, None] * s[1]
                        + 2.0 * st["p1"][:, j, None] * s[2] * kr[j]
                        + p0 * s[3] * kr[j] ** 2
                    )
            block = np.empty((self.n_points, model.j_n, d + 1))
            for m in range(d):
                r_m = model.partition.radii_1d[m]
                extra = np.zeros((self.n_points, model.j_n))
                if c1[m]:
                    extra += c1[m] * p0 * s[1] / r_m
                if c2[m]:
                    extra += (
                        2.0
                        * c2[m]
                        * (st["p1"][:, m, None] * s[1] + p0 * s[2] * kr[m])
                        / r_m
                    )
                block[:, :, m] = base * st["y"][:, m, None] + extra
            block[:, :, d] = base
            blocks.append(block * (model.out_scale * model.coeffs[n][None, :, None]))
        return blocks


def basis_matrix(model: RandomFeatureModel, x, op: OperatorSpec | None = None) -> np.ndarray:
    """N x M matrix of the operator applied to each modified basis function.

    Columns are grouped by cell, so with characteristic construction
    functions the matrix is block diagonal after grouping rows by cell
    membership. With the identity operator this is the plain feature matrix
    sigma(w_k . x_i) / sqrt(M) localized by psi.
    """
    op = op if op is not None else OperatorSpec.identity()
    cache = ModelGridCache(model, x)
    return np.concatenate(cache.basis_blocks(op), axis=1)


def kernel_ga(phi: np.ndarray) -> np.ndarray:
    """Outer-coefficient kernel G = Phi Phi^T (Phi already carries 1/sqrt(M))."""
    return phi @ phi.T


def kernel_gw(model: RandomFeatureModel, x, op: OperatorSpec | None = None) -> np.ndarray:
    """Inner-weight kernel (1/M) sum_k a_k^2 (L sigma')(z_i) (L sigma')(z_j) (x_i . x_j).

    Feature arguments and the augmented dot product use the cell-local
    coordinates (y_n, 1); each neuron's factor is localized by its cell's
    construction value. L acts on sigma' as a scalar function through the
    chain rule, matching the factored kernel of the gradient-flow analysis.
    """
    op = op if op is not None else OperatorSpec.identity()
    if not op.is_linear:
        raise ValueError("inner-weight kernel is defined for linear operators")
    x = model._as_points(x)
    d = model.dim
    c0, c1, c2 = op.coeffs(d)
    order = op.max_order(d)
    cache = ModelGridCache(model, x)
    feats = cache._need(order + 1)
    n_pts = x.shape[0]
    g = np.zeros((n_pts, n_pts))
    for n in range(model.partition.count):
        st = cache.static[n]
        s = feats[n]
        kr = cache._kr(n)
        lsig = c0 * s[1] if c0 else np.zeros((n_pts, model.j_n))
        for j in range(d):
            if c1[j]:
                lsig = lsig + c1[j] * s[2] * kr[j]
            if c2[j]:
                lsig = lsig + c2[j] * s[3] * kr[j] ** 2
        e = st["p0"][:, None] * lsig * np.abs(model.coeffs[n])[None, :]
        g += (e @ e.T) * (st["yaug"] @ st["yaug"].T)
    return g / model.m_total


def halfcell_spectral_gap(
    n: int,
    m: int,
    seed: int,
    activation="tanh",
    shared_weights: bool = False,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Eigenvalue gap between the two blocks of a two-cell characteristic PoU.

    Splits an N-point grid and M neurons over two mirrored half-cells; both
    halves see the identical local coordinates, so the blocks
    Phi^L (Phi^L)^T and Phi^R (Phi^R)^T differ only through the weight draw.
    Returns (gap, bound, lambda^L, lambda^R) with
    gap = (sum_j |lambda_j^L - lambda_j^R|^2)^(1/2) and the concentration
    bound sqrt(2) N / sqrt(M). With ``shared_weights`` both halves reuse one
    draw and the gap is exactly zero.
    """
    if n % 2 or m % 2:
        raise ValueError("grid size and neuron count must both be even")
    act = get_activation(activation)
    rng = np.random.default_rng(seed)
    y = np.linspace(-1.0, 1.0, n // 2)
    yaug = np.stack([y, np.ones_like(y)], axis=1)
    w_left = rng.uniform(-1.0, 1.0, size=(m // 2, 2))
    w_right = w_left if shared_weights else rng.uniform(-1.0, 1.0, size=(m // 2, 2))
    scale = 1.0 / np.sqrt(m)
    lams = []
    for w in (w_left, w_right):
        phi = scale * act.tables(yaug @ w.T, 0)[0]
        lams.append(sym_eigendecomp(phi @ phi.T).eigenvalues)
    gap = float(np.sqrt(np.sum((lams[0] - lams[1]) ** 2)))
    bound = float(np.sqrt(2.0) * n / np.sqrt(m))
    return gap, bound, lams[0], lams[1]
