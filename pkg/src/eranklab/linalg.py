"""Dense symmetric eigendecomposition, singular values, and the effective-rank metric.

Eigenvalue/least-squares factorizations are delegated to LAPACK via numpy;
the contracts here pin down orientation conventions, PSD clamping, and
tolerances so callers never have to second-guess them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralDecomposition",
    "sym_eigendecomp",
    "effective_rank",
    "singular_values",
    "least_squares_solve",
]

# Relative asymmetry accepted before a matrix is rejected as non-symmetric.
_ASYM_TOL = 1e-10
# Eigenvalues below -_NEG_TOL * max(1, |G|_max) signal a non-PSD kernel bug.
_NEG_TOL = 1e-10
# Singular values below this fraction of the largest are treated as zero
# in rank-deficient least squares.
_LSTSQ_RCOND = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigensystem of a symmetric PSD matrix.

    ``eigenvalues`` are sorted descending and clamped to be nonnegative.
    ``eigenvectors`` holds the orthogonal matrix Q, with rows being the
    eigenvectors, so that ``G = Q.T @ diag(eigenvalues) @ Q`` and the
    residual projection is ``Q @ e``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return q.T @ (self.eigenvalues[:, None] * q)


def sym_eigendecomp(g: np.ndarray) -> SpectralDecomposition:
    """Eigendecompose a symmetric PSD matrix into descending (lambda, Q).

    The input is symmetrized as (G + G^T)/2 before factorization; asymmetry
    beyond 1e-10 relative to the largest entry is an error, as is an
    eigenvalue significantly below zero. Tiny negative eigenvalues from
    round-off are clamped to 0 so downstream entropy code sees a clean
    nonnegative spectrum.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    scale = max(1.0, float(np.abs(g).max()) if g.size else 1.0)
    asym = float(np.abs(g - g.T).max()) if g.size else 0.0
    if asym > _ASYM_TOL * scale:
        raise ValueError(
            f"matrix is not symmetric: max asymmetry {asym:.3e} exceeds "
            f"{_ASYM_TOL:.0e} * max(1, |G|_max)"
        )
    g = 0.5 * (g + g.T)
    try:
        w, v = np.linalg.eigh(g)
    except np.linalg.LinAlgError as err:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"symmetric eigensolver did not converge: {err}") from err
    if w[0] < -_NEG_TOL * scale:
        raise ValueError(
            f"significantly negative eigenvalue {w[0]:.3e}: input is not PSD"
        )
    order = np.argsort(w)[::-1]
    eigenvalues = np.clip(w[order], 0.0, None)
    q = v[:, order].T
    return SpectralDecomposition(eigenvalues=eigenvalues, eigenvectors=q)


def effective_rank(sigma: np.ndarray) -> float:
    """exp of the Shannon entropy of the normalized spectrum.

    ``sigma`` is a vector of nonnegative singular values (equivalently,
    eigenvalues of a PSD matrix). Entries equal to zero contribute no
    entropy; the result lies in [1, len(sigma)]. Natural log is used, so a
    uniform spectrum of length n gives exactly n.
    """
    sigma = np.asarray(sigma, dtype=float).ravel()
    if sigma.size == 0:
        raise ValueError("empty singular value vector")
    if np.any(sigma < 0):
        raise ValueError("singular values must be nonnegative")
    total = sigma.sum()
    if total == 0.0:
        raise ValueError("all singular values are zero")
    p = sigma / total
    nz = p > 0
    entropy = -float(np.sum(p[nz] * np.log(p[nz])))
    return float(np.exp(entropy))


def singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values of a general matrix, sorted descending."""
    return np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)


def least_squares_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares solution of ``a @ x = b``.

    Uses a rank-revealing SVD factorization; singular values below
    1e-12 * sigma_max are treated as zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(
            f"dimension mismatch: A has {a.shape[0]} rows, b has {b.shape[0]}"
        )
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=_LSTSQ_RCOND)
    return x
