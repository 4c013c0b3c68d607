"""Gradient-descent training, the RFM direct solve, and kernel diagnostics.

All gradients are closed form (see features); the optimizer is plain
full-batch gradient descent. Losses are sums, not means, matching the
collocation form residual^2 + gamma * boundary^2, and a run is fully
determined by the model seed and the configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import ModelGridCache, OperatorSpec, RandomFeatureModel, kernel_gw
from .linalg import effective_rank, least_squares_solve, sym_eigendecomp
from .problems import Problem, error_metrics

__all__ = [
    "TrainConfig",
    "KernelSnapshot",
    "TrainingRecord",
    "DivergenceError",
    "supervised_loss_grad",
    "pinn_loss_grad",
    "ritz_loss_grad",
    "gd_train",
    "rfm_solve",
    "kernel_snapshot",
    "make_spectrum",
    "diag_toy_run",
    "DiagToyResult",
]

MODES = ("rfm", "full")


@dataclass(frozen=True)
class TrainConfig:
    """Settings for one gradient-descent run.

    ``lr=None`` picks 0.5 / lambda_max of the kernel at initialization,
    which keeps the quadratic outer-only losses monotone. Snapshot epochs
    always include the first and last epoch.
    """

    epochs: int
    lr: float | None = None
    gamma: float | None = None
    mode: str = "rfm"
    seed: int = 0
    snapshot_epochs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr is not None and not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def schedule(self) -> list[int]:
        eps = {0, self.epochs} | {int(e) for e in self.snapshot_epochs}
        return sorted(e for e in eps if 0 <= e <= self.epochs)


@dataclass(frozen=True)
class KernelSnapshot:
    """Spectrum of the active training kernel at one epoch."""

    epoch: int
    eigenvalues: np.ndarray
    erank: float

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])


@dataclass
class TrainingRecord:
    losses: np.ndarray
    snapshots: list[KernelSnapshot] = field(default_factory=list)
    metrics: dict[int, dict] = field(default_factory=dict)
    projected_residuals: dict[int, np.ndarray] = field(default_factory=dict)
    lr: float = 0.0


class DivergenceError(RuntimeError):
    """Loss became non-finite; the learning rate is too large."""

    def __init__(self, epoch: int, last_loss: float):
        super().__init__(
            f"loss became non-finite at epoch {epoch} (last finite loss {last_loss:.6e})"
        )
        self.epoch = epoch
        self.last_loss = last_loss


class _Objective:
    """Loss, gradient and kernel assembly for one (model, problem) pair.

    Grid-static quantities (partition values, local coordinates, targets)
    are precomputed once; in outer-only mode the basis matrices are fixed
    too, so each epoch reduces to a few mat-vecs.
    """

    def __init__(self, model: RandomFeatureModel, problem: Problem, gamma=None):
        self.model = model
        self.problem = problem
        self.gamma = float(problem.gamma if gamma is None else gamma)
        self.x = problem.interior_grid(partition=model.partition)
        self.cache = ModelGridCache(model, self.x)
        self.kind = problem.loss
        self.burgers = problem.operator.nonlinear == "burgers"
        if self.kind == "supervised":
            self.targets = problem.exact(self.x)
        else:
            self.targets = problem.forcing(self.x)
        self.xb = problem.boundary_points()
        if self.xb.shape[0]:
            self.cache_b = ModelGridCache(model, self.xb)
            self.gb = problem.boundary_values(self.xb)
        else:
            self.cache_b = None
            self.gb = np.zeros(0)
        if self.kind == "ritz":
            (lo, hi), = problem.domain
            h = (hi - lo) / (self.x.shape[0] - 1)
            self.quad_w = np.full(self.x.shape[0], h)
            self.quad_w[[0, -1]] = h / 2

    # -- residual/kernel operators ------------------------------------
    def _interior_op(self) -> OperatorSpec:
        if self.kind == "supervised":
            return OperatorSpec.identity()
        return self.problem.operator

    def _refresh(self, mode: str):
        if self.model.trainable_inner or mode == "full":
            self.cache.refresh(3)
            if self.cache_b is not None:
                self.cache_b.refresh(3)

    def _burgers_pieces(self, cache: ModelGridCache):
        b0 = cache.basis_blocks(OperatorSpec.identity())
        b1 = cache.basis_blocks(OperatorSpec(c1=(1.0,)))
        b2 = cache.basis_blocks(OperatorSpec(c2=(1.0,)))
        a = self.model.coeffs
        u = sum(b @ a[n] for n, b in enumerate(b0))
        du = sum(b @ a[n] for n, b in enumerate(b1))
        d2u = sum(b @ a[n] for n, b in enumerate(b2))
        jac = [-b2[n] + u[:, None] * b1[n] + du[:, None] * b0[n] for n in range(len(b0))]
        return u, du, d2u, jac

    def residual(self, mode: str = "rfm", refresh: bool = True) -> np.ndarray:
        """Interior residual vector e (the part the kernel acts on)."""
        if refresh:
            self._refresh(mode)
        if self.kind == "ritz":
            raise ValueError("the energy loss has no interior residual vector")
        if self.burgers:
            u, du, d2u, _ = self._burgers_pieces(self.cache)
            return -d2u + du * u - self.targets
        vals = self.cache.op_values(self._interior_op())
        return vals - self.targets

    def kernel(self, mode: str) -> np.ndarray:
        """Active kernel on the interior grid (residual term only)."""
        self._refresh(mode)
        if self.burgers:
            u, du, _, jac_a = self._burgers_pieces(self.cache)
            ja = np.concatenate(jac_a, axis=1)
            g = ja @ ja.T
            if mode == "full":
                w0 = self.cache.weight_jacobian_blocks(OperatorSpec.identity())
                w1 = self.cache.weight_jacobian_blocks(OperatorSpec(c1=(1.0,)))
                w2 = self.cache.weight_jacobian_blocks(OperatorSpec(c2=(1.0,)))
                for n in range(len(w0)):
                    jw = -w2[n] + u[:, None, None] * w1[n] + du[:, None, None] * w0[n]
                    jw = jw.reshape(self.x.shape[0], -1)
                    g = g + jw @ jw.T
            return g
        op = self._interior_op()
        phi = np.concatenate(self.cache.basis_blocks(op), axis=1)
        g = phi @ phi.T
        if mode == "full":
            g = g + kernel_gw(self.model, self.x, op)
        return g

    # -- losses ---------------------------------------------------------
    def loss_grad(self, mode: str):
        self._refresh(mode)
        if self.kind == "ritz":
            return self._ritz_loss_grad(mode)
        if self.burgers:
            return self._burgers_loss_grad(mode)
        return self._quadratic_loss_grad(mode)

    def _accumulate(self, cache, blocks, weights, grad_a, grad_w, op=None):
        """grad += blocks^T weights (and inner-weight part when requested)."""
        for n, b in enumerate(blocks):
            grad_a[n] += b.T @ weights
        if grad_w is not None:
            for n, wb in enumerate(cache.weight_jacobian_blocks(op)):
                grad_w[n] += np.einsum("i,ijm->jm", weights, wb)

    def _quadratic_loss_grad(self, mode: str):
        op = self._interior_op()
        blocks = self.cache.basis_blocks(op)
        r = self.op_values_from(blocks) - self.targets
        loss = float(r @ r)
        grad_a = np.zeros_like(self.model.coeffs)
        grad_w = np.zeros_like(self.model.weights) if mode == "full" else None
        self._accumulate(self.cache, blocks, 2.0 * r, grad_a, grad_w, op)
        if self.cache_b is not None and self.gamma:
            bop = self.problem.boundary_op
            bblocks = self.cache_b.basis_blocks(bop)
            rb = self.op_values_from(bblocks) - self.gb
            loss += self.gamma * float(rb @ rb)
            self._accumulate(
                self.cache_b, bblocks, 2.0 * self.gamma * rb, grad_a, grad_w, bop
            )
        return loss, {"a": grad_a, "w": grad_w}

    def _burgers_loss_grad(self, mode: str):
        u, du, d2u, jac_a = self._burgers_pieces(self.cache)
        r = -d2u + du * u - self.targets
        loss = float(r @ r)
        grad_a = np.zeros_like(self.model.coeffs)
        grad_w = np.zeros_like(self.model.weights) if mode == "full" else None
        for n, j in enumerate(jac_a):
            grad_a[n] += j.T @ (2.0 * r)
        if grad_w is not None:
            w0 = self.cache.weight_jacobian_blocks(OperatorSpec.identity())
            w1 = self.cache.weight_jacobian_blocks(OperatorSpec(c1=(1.0,)))
            w2 = self.cache.weight_jacobian_blocks(OperatorSpec(c2=(1.0,)))
            for n in range(len(w0)):
                jw = -w2[n] + u[:, None, None] * w1[n] + du[:, None, None] * w0[n]
                grad_w[n] += np.einsum("i,ijm->jm", 2.0 * r, jw)
        if self.cache_b is not None and self.gamma:
            bblocks = self.cache_b.basis_blocks(OperatorSpec.identity())
            rb = self.op_values_from(bblocks) - self.gb
            loss += self.gamma * float(rb @ rb)
            self._accumulate(
                self.cache_b,
                bblocks,
                2.0 * self.gamma * rb,
                grad_a,
                grad_w,
                OperatorSpec.identity(),
            )
        return loss, {"a": grad_a, "w": grad_w}

    def _ritz_loss_grad(self, mode: str):
        b0 = self.cache.basis_blocks(OperatorSpec.identity())
        b1 = self.cache.basis_blocks(OperatorSpec(c1=(1.0,)))
        a = self.model.coeffs
        u = sum(b @ a[n] for n, b in enumerate(b0))
        du = sum(b @ a[n] for n, b in enumerate(b1))
        f = self.targets
        w = self.quad_w
        loss = float(w @ (0.5 * du**2 + 0.5 * u**2 - f * u))
        grad_a = np.zeros_like(self.model.coeffs)
        grad_w = np.zeros_like(self.model.weights) if mode == "full" else None
        self._accumulate(self.cache, b1, w * du, grad_a, grad_w, OperatorSpec(c1=(1.0,)))
        self._accumulate(
            self.cache, b0, w * (u - f), grad_a, grad_w, OperatorSpec.identity()
        )
        return loss, {"a": grad_a, "w": grad_w}

    def op_values_from(self, blocks) -> np.ndarray:
        out = np.zeros(blocks[0].shape[0])
        for n, b in enumerate(blocks):
            out += b @ self.model.coeffs[n]
        return out

    def snapshot(self, epoch: int, mode: str) -> tuple[KernelSnapshot, np.ndarray | None]:
        dec = sym_eigendecomp(self.kernel(mode))
        snap = KernelSnapshot(
            epoch=epoch,
            eigenvalues=dec.eigenvalues,
            erank=effective_rank(dec.eigenvalues),
        )
        if self.kind == "ritz":
            return snap, None
        e_tilde = dec.eigenvectors @ self.residual(mode, refresh=False)
        return snap, e_tilde


def supervised_loss_grad(model, x, targets, mode="rfm"):
    """Sum-of-squares fit loss and its gradient over the trainable parameters."""
    x = model._as_points(x)
    targets = np.asarray(targets, dtype=float)
    if targets.shape[0] != x.shape[0]:
        raise ValueError("targets must align with the grid")
    cache = ModelGridCache(model, x)
    cache.refresh(3 if mode == "full" else 2)
    blocks = cache.basis_blocks(OperatorSpec.identity())
    r = sum(b @ model.coeffs[n] for n, b in enumerate(blocks)) - targets
    loss = float(r @ r)
    grad_a = np.stack([b.T @ (2.0 * r) for b in blocks])
    grad_w = None
    if mode == "full":
        grad_w = np.stack(
            [
                np.einsum("i,ijm->jm", 2.0 * r, wb)
                for wb in cache.weight_jacobian_blocks(OperatorSpec.identity())
            ]
        )
    return loss, {"a": grad_a, "w": grad_w}


def pinn_loss_grad(model, problem: Problem, mode="rfm", gamma=None):
    """Collocation residual + gamma-weighted boundary loss with analytic gradient."""
    return _Objective(model, problem, gamma).loss_grad(mode)


def ritz_loss_grad(model, problem: Problem, mode="rfm"):
    """Trapezoid-quadrature energy functional with analytic gradient."""
    if problem.loss != "ritz":
        raise ValueError(f"problem {problem.name!r} does not use the energy loss")
    return _Objective(model, problem).loss_grad(mode)


def gd_train(model: RandomFeatureModel, problem: Problem, config: TrainConfig) -> TrainingRecord:
    """Full-batch gradient descent; returns the record, mutating the model.

    theta <- theta - lr * grad(L) each epoch; snapshots, error metrics and
    projected residuals e_tilde = Q e are recorded on the snapshot schedule.
    """
    obj = _Objective(model, problem, config.gamma)
    schedule = set(config.schedule())
    record = TrainingRecord(losses=np.empty(config.epochs + 1))
    eval_grid = problem.eval_grid()
    lr = config.lr
    for epoch in range(config.epochs + 1):
        loss, grads = obj.loss_grad(config.mode)
        if not np.isfinite(loss):
            last = record.losses[epoch - 1] if epoch else float("nan")
            raise DivergenceError(epoch, last)
        record.losses[epoch] = loss
        if epoch in schedule:
            snap, e_tilde = obj.snapshot(epoch, config.mode)
            record.snapshots.append(snap)
            if e_tilde is not None:
                record.projected_residuals[epoch] = e_tilde
            record.metrics[epoch] = error_metrics(model, problem, eval_grid)
            if lr is None:
                lr = 0.5 / snap.lambda_max
        if epoch == config.epochs:
            break
        model.coeffs -= lr * grads["a"]
        if config.mode == "full":
            model.weights -= lr * grads["w"]
    record.lr = float(lr)
    return record


def rfm_solve(model: RandomFeatureModel, problem: Problem, gamma=None) -> np.ndarray:
    """Least-squares fit of the outer coefficients (random feature method).

    Stacks the operator rows on the interior grid and sqrt(gamma)-weighted
    trace rows on the boundary, then solves in one shot and writes the
    coefficients into the model.
    """
    if not problem.operator.is_linear:
        raise ValueError(
            f"{problem.name} is nonlinear; use gradient-descent training instead"
        )
    obj = _Objective(model, problem, gamma)
    if problem.loss == "supervised":
        op = OperatorSpec.identity()
    else:
        op = problem.operator
    rows = [np.concatenate(obj.cache.basis_blocks(op), axis=1)]
    rhs = [obj.targets]
    if obj.cache_b is not None and obj.gamma:
        sq = np.sqrt(obj.gamma)
        rows.append(
            sq * np.concatenate(obj.cache_b.basis_blocks(problem.boundary_op), axis=1)
        )
        rhs.append(sq * obj.gb)
    a = least_squares_solve(np.concatenate(rows, axis=0), np.concatenate(rhs))
    model.coeffs[...] = a.reshape(model.coeffs.shape)
    return a


def kernel_snapshot(model: RandomFeatureModel, problem: Problem, mode="rfm") -> KernelSnapshot:
    """Spectrum/erank of the active kernel at the model's current parameters."""
    snap, _ = _Objective(model, problem).snapshot(0, mode)
    return snap


# ---------------------------------------------------------------------------
# Diagonal toy system
# ---------------------------------------------------------------------------


def make_spectrum(kind: str, n: int, lam_max: float = 256.0, lam_min: float = 1.0,
                  cluster_size: int = 4) -> np.ndarray:
    """The three spectrum shapes sharing lambda_1 and lambda_n.

    "geometric" interpolates log-uniformly, "linear" uniformly, and
    "cluster" uses cluster_size copies of lambda_max with the rest at
    lambda_min; their effective ranks are well separated.
    """
    if kind == "geometric":
        return lam_max * (lam_min / lam_max) ** (np.arange(n) / (n - 1))
    if kind == "linear":
        return np.linspace(lam_max, lam_min, n)
    if kind == "cluster":
        lam = np.full(n, lam_min)
        lam[:cluster_size] = lam_max
        return lam
    raise ValueError(f"unknown spectrum kind {kind!r}")


@dataclass(frozen=True)
class DiagToyResult:
    lambdas: np.ndarray
    b: np.ndarray
    lr: float
    losses: np.ndarray
    mode_sq: np.ndarray
    erank: float

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])


def diag_toy_run(lambdas, b, lr: float, epochs: int) -> DiagToyResult:
    """Gradient descent on the diagonal least-squares system.

    ``lambdas`` (sorted descending, positive) are the eigenvalues of the
    training kernel governing the residual decay: minimizing the mean
    squared error of A x = b with A = diag(sqrt(lambda)) gives the per-mode
    recurrence e_i <- (1 - 2 lr lambda_i / N) e_i. Records the loss and each
    mode's squared residual per epoch; erank is that of the lambda spectrum.
    """
    lam = np.asarray(lambdas, dtype=float)
    b = np.asarray(b, dtype=float)
    if lam.ndim != 1 or lam.shape != b.shape:
        raise ValueError("lambdas and b must be vectors of equal length")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted descending")
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    n = lam.size
    s = np.sqrt(lam)
    x = np.zeros(n)
    losses = np.empty(epochs + 1)
    mode_sq = np.empty((epochs + 1, n))
    for t in range(epochs + 1):
        e = s * x - b
        mode_sq[t] = e**2
        losses[t] = mode_sq[t].mean()
        if t < epochs:
            x = x - lr * (2.0 / n) * s * e
    return DiagToyResult(
        lambdas=lam,
        b=b,
        lr=float(lr),
        losses=losses,
        mode_sq=mode_sq,
        erank=effective_rank(lam),
    )
