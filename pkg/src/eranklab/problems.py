"""Concrete regression/PDE problems with exact solutions and manufactured forcings.

Every forcing is derived from the stated exact solution under the problem's
operator, so prediction errors can be measured exactly. ``self_check``
verifies that consistency at random points and should be ~1e-12 for all
problems here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .features import OperatorSpec, uniform_grid
from .partition import Partition

__all__ = [
    "Problem",
    "regression_target",
    "regression",
    "helmholtz1d",
    "helmholtz2d",
    "burgers_steady1d",
    "elliptic_ritz1d",
    "PROBLEMS",
    "error_metrics",
]


@dataclass(frozen=True)
class Problem:
    """A training task: operator, exact solution, forcing, boundary data.

    ``loss`` selects the training functional: "supervised" (plain fit of the
    exact values), "pinn" (collocation residual + gamma-weighted boundary
    mismatch) or "ritz" (variational energy with natural boundary
    conditions). ``boundary_op`` is the trace operator B (identity for
    Dirichlet, first derivative for Neumann).
    """

    name: str
    domain: tuple[tuple[float, float], ...]
    operator: OperatorSpec
    loss: str
    exact: Callable[[np.ndarray], np.ndarray]
    exact_grad: Callable[[np.ndarray], np.ndarray]
    exact_hess: Callable[[np.ndarray], np.ndarray]
    forcing: Callable[[np.ndarray], np.ndarray]
    gamma: float = 0.0
    boundary_op: OperatorSpec = field(default_factory=OperatorSpec.identity)
    n_interior: tuple[int, ...] = (256,)
    n_boundary: int = 2

    @property
    def dim(self) -> int:
        return len(self.domain)

    def interior_grid(self, n=None, partition: Partition | None = None) -> np.ndarray:
        """Collocation grid. Supervised/Ritz grids include the endpoints
        (the fit and the trapezoid integral cover the closed domain); PINN
        interiors exclude them, boundary points are separate."""
        n = tuple(n) if n is not None else self.n_interior
        if self.loss == "pinn":
            closed = uniform_grid(self.domain, [c + 2 for c in n], partition)
            mesh_shape = tuple(c + 2 for c in n)
            keep = np.ones(mesh_shape, dtype=bool)
            for axis in range(self.dim):
                idx = [slice(None)] * self.dim
                idx[axis] = 0
                keep[tuple(idx)] = False
                idx[axis] = -1
                keep[tuple(idx)] = False
            return closed[keep.ravel()]
        return uniform_grid(self.domain, n, partition)

    def boundary_points(self, n=None) -> np.ndarray:
        if self.loss != "pinn":
            return np.empty((0, self.dim))
        if self.dim == 1:
            (lo, hi), = self.domain
            return np.array([[lo], [hi]])
        n_edge = int(n) if n is not None else self.n_boundary // 4
        (x_lo, x_hi), (y_lo, y_hi) = self.domain
        xs = np.linspace(x_lo, x_hi, n_edge)
        ys = np.linspace(y_lo, y_hi, n_edge)
        edges = [
            np.stack([xs, np.full(n_edge, y_lo)], axis=1),
            np.stack([xs, np.full(n_edge, y_hi)], axis=1),
            np.stack([np.full(n_edge, x_lo), ys], axis=1),
            np.stack([np.full(n_edge, x_hi), ys], axis=1),
        ]
        return np.concatenate(edges, axis=0)

    def boundary_values(self, points: np.ndarray) -> np.ndarray:
        """Trace data B u* on the given boundary points."""
        bmax = self.boundary_op.max_order(self.dim)
        if bmax == 0:
            return self.boundary_op.c0 * self.exact(points)
        _, c1, _ = self.boundary_op.coeffs(self.dim)
        grad = self.exact_grad(points)
        vals = self.boundary_op.c0 * self.exact(points) if self.boundary_op.c0 else 0.0
        return vals + grad @ c1

    def eval_grid(self, factor: int = 4) -> np.ndarray:
        """Finer uniform grid for error measurement (default 4x resolution)."""
        n = [factor * (c + 2) + 1 for c in self.n_interior]
        return uniform_grid(self.domain, n)

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Operator applied to the exact solution minus the forcing."""
        u = self.exact(x)
        grad = self.exact_grad(x)
        hess = self.exact_hess(x)
        if self.operator.nonlinear == "burgers":
            lu = -hess[:, 0] + grad[:, 0] * u
        else:
            c0, c1, c2 = self.operator.coeffs(self.dim)
            lu = c0 * u + grad @ c1 + hess @ c2
        return lu - self.forcing(x)

    def self_check(self, n: int = 1000, seed: int = 0) -> float:
        """Max manufactured-solution residual at random interior points."""
        rng = np.random.default_rng(seed)
        dom = np.asarray(self.domain)
        x = rng.uniform(dom[:, 0], dom[:, 1], size=(n, self.dim))
        return float(np.abs(self.residual(x)).max())


def regression_target(m: float, x) -> np.ndarray:
    """(1 - x^2/2) * cos(m (x + x^3/2)) on [-1, 1]."""
    x = np.asarray(x, dtype=float)
    return (1.0 - 0.5 * x**2) * np.cos(m * (x + 0.5 * x**3))


def regression(m: float = 30.0) -> Problem:
    """Supervised fit of the oscillatory target with frequency parameter m."""

    def u(x):
        return regression_target(m, x[:, 0])

    def du(x):
        t = x[:, 0]
        g = m * (t + 0.5 * t**3)
        dg = m * (1.0 + 1.5 * t**2)
        amp = 1.0 - 0.5 * t**2
        return (-t * np.cos(g) - amp * np.sin(g) * dg)[:, None]

    def d2u(x):
        t = x[:, 0]
        g = m * (t + 0.5 * t**3)
        dg = m * (1.0 + 1.5 * t**2)
        d2g = 3.0 * m * t
        amp = 1.0 - 0.5 * t**2
        val = (
            -np.cos(g)
            + 2.0 * t * np.sin(g) * dg
            - amp * (np.cos(g) * dg**2 + np.sin(g) * d2g)
        )
        return val[:, None]

    return Problem(
        name="regression",
        domain=((-1.0, 1.0),),
        operator=OperatorSpec.identity(),
        loss="supervised",
        exact=u,
        exact_grad=du,
        exact_hess=d2u,
        forcing=u,
        gamma=0.0,
    )


def _multiscale_parts():
    def f0(t):
        return np.sin(4 * t) / 4 - np.sin(8 * t) / 8 + np.sin(24 * t) / 36

    def df0(t):
        return np.cos(4 * t) - np.cos(8 * t) + (2.0 / 3.0) * np.cos(24 * t)

    def d2f0(t):
        return -4 * np.sin(4 * t) + 8 * np.sin(8 * t) - 16 * np.sin(24 * t)

    return f0, df0, d2f0


def helmholtz1d(k: float = 10.0, gamma: float = 100.0) -> Problem:
    """u_xx + k^2 u = f on (-1, 1) with Dirichlet data and a multiscale solution.

    The exact solution is f0(x) + c1 x + c0 with the slope/offset chosen so
    the boundary values vanish; f0 is odd, so c0 = 0.
    """
    f0, df0, d2f0 = _multiscale_parts()
    c1 = float((f0(-1.0) - f0(1.0)) / 2.0)
    c0 = float(-(f0(-1.0) + f0(1.0)) / 2.0)

    def u(x):
        t = x[:, 0]
        return f0(t) + c1 * t + c0

    def du(x):
        return (df0(x[:, 0]) + c1)[:, None]

    def d2u(x):
        return d2f0(x[:, 0])[:, None]

    def f(x):
        return d2u(x)[:, 0] + k**2 * u(x)

    return Problem(
        name="helmholtz1d",
        domain=((-1.0, 1.0),),
        operator=OperatorSpec(c0=k**2, c2=(1.0,)),
        loss="pinn",
        exact=u,
        exact_grad=du,
        exact_hess=d2u,
        forcing=f,
        gamma=gamma,
    )


def helmholtz2d(gamma: float = 100.0) -> Problem:
    """Laplacian + k^2 with k^2 = 125 on (-1, 1)^2, u = sin(pi x) sin(4 pi y)."""
    a1, a2, ksq = 1.0, 4.0, 125.0
    w1, w2 = a1 * np.pi, a2 * np.pi

    def u(x):
        return np.sin(w1 * x[:, 0]) * np.sin(w2 * x[:, 1])

    def du(x):
        return np.stack(
            [
                w1 * np.cos(w1 * x[:, 0]) * np.sin(w2 * x[:, 1]),
                w2 * np.sin(w1 * x[:, 0]) * np.cos(w2 * x[:, 1]),
            ],
            axis=1,
        )

    def d2u(x):
        base = u(x)
        return np.stack([-(w1**2) * base, -(w2**2) * base], axis=1)

    def q(x):
        return (ksq - w1**2 - w2**2) * u(x)

    return Problem(
        name="helmholtz2d",
        domain=((-1.0, 1.0), (-1.0, 1.0)),
        operator=OperatorSpec(c0=ksq, c2=(1.0, 1.0)),
        loss="pinn",
        exact=u,
        exact_grad=du,
        exact_hess=d2u,
        forcing=q,
        gamma=gamma,
        n_interior=(64, 64),
        n_boundary=256,
    )


def burgers_steady1d(gamma: float = 100.0) -> Problem:
    """Steady Burgers -u'' + u' u = f on (0, 8), Dirichlet ends.

    Exact solution sin(3 pi x + 3 pi/20) cos(2 pi x + pi/10) + 2; the
    oscillation is zero mean over the domain, so the solution level is 2.
    """

    def parts(t):
        a = 3 * np.pi * t + 3 * np.pi / 20
        b = 2 * np.pi * t + np.pi / 10
        return np.sin(a), np.cos(a), np.sin(b), np.cos(b)

    def u(x):
        sa, _, _, cb = parts(x[:, 0])
        return sa * cb + 2.0

    def du(x):
        sa, ca, sb, cb = parts(x[:, 0])
        return (3 * np.pi * ca * cb - 2 * np.pi * sa * sb)[:, None]

    def d2u(x):
        sa, ca, sb, cb = parts(x[:, 0])
        return (-13 * np.pi**2 * sa * cb - 12 * np.pi**2 * ca * sb)[:, None]

    def f(x):
        return -d2u(x)[:, 0] + du(x)[:, 0] * u(x)

    return Problem(
        name="burgers1d",
        domain=((0.0, 8.0),),
        operator=OperatorSpec.burgers_steady(),
        loss="pinn",
        exact=u,
        exact_grad=du,
        exact_hess=d2u,
        forcing=f,
        gamma=gamma,
    )


def elliptic_ritz1d() -> Problem:
    """-u'' + u = f on (-1, 1), natural Neumann conditions u'(+-1) = 0.

    The multiscale profile is used with its linear part chosen to zero the
    endpoint slopes (f0' is even, so one slope fits both ends); this is what
    makes the exact solution the minimizer of the energy functional over H^1
    without any boundary penalty.
    """
    f0, df0, d2f0 = _multiscale_parts()
    slope = float(df0(1.0))

    def u(x):
        t = x[:, 0]
        return f0(t) - slope * t

    def du(x):
        return (df0(x[:, 0]) - slope)[:, None]

    def d2u(x):
        return d2f0(x[:, 0])[:, None]

    def f(x):
        return -d2u(x)[:, 0] + u(x)

    return Problem(
        name="ritz1d",
        domain=((-1.0, 1.0),),
        operator=OperatorSpec(c0=1.0, c2=(-1.0,)),
        loss="ritz",
        exact=u,
        exact_grad=du,
        exact_hess=d2u,
        forcing=f,
        gamma=0.0,
        boundary_op=OperatorSpec(c1=(1.0,)),
    )


PROBLEMS: dict[str, Callable[[], Problem]] = {
    "regression": regression,
    "helmholtz1d": helmholtz1d,
    "helmholtz2d": helmholtz2d,
    "burgers1d": burgers_steady1d,
    "ritz1d": elliptic_ritz1d,
}


def _trapezoid_weights(domain, shape) -> np.ndarray:
    w = np.ones(1)
    for (lo, hi), n in zip(domain, shape):
        h = (hi - lo) / (n - 1)
        axis = np.full(n, h)
        axis[[0, -1]] = h / 2
        w = np.multiply.outer(w, axis)
    return w.ravel()


def error_metrics(model, problem: Problem, grid: np.ndarray | None = None) -> dict:
    """Linf / relative L2 / relative H1 prediction errors on an evaluation grid.

    The H1 metric is the full-norm ratio and uses the model's analytic
    gradient. Norms use composite trapezoid quadrature on the grid.
    """
    x = grid if grid is not None else problem.eval_grid()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("empty evaluation grid")
    shape = [len(np.unique(x[:, k])) for k in range(problem.dim)]
    w = _trapezoid_weights(problem.domain, shape)
    err = model.value(x) - problem.exact(x)
    grad_err = model.gradient(x) - problem.exact_grad(x)
    u_sq = w @ problem.exact(x) ** 2
    du_sq = sum(w @ problem.exact_grad(x)[:, j] ** 2 for j in range(problem.dim))
    err_sq = w @ err**2
    derr_sq = sum(w @ grad_err[:, j] ** 2 for j in range(problem.dim))
    return {
        "linf": float(np.abs(err).max()),
        "rel_l2": float(np.sqrt(err_sq / u_sq)),
        "rel_h1": float(np.sqrt((err_sq + derr_sq) / (u_sq + du_sq))),
    }
