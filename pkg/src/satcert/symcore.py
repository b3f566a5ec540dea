"""Dense real linear-algebra kernel.

Symmetric eigen-decomposition, SVD rank, definiteness tests with explicit
relative tolerances, and a Lyapunov solver for Hurwitz matrices.  Matrices
are plain ``numpy.ndarray`` objects; symmetric inputs are symmetrized on
entry so that ``S[i, j] == S[j, i]`` holds exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-9


class NonFiniteError(ValueError):
    """Raised when a matrix contains NaN or inf entries."""


class NotHurwitzError(ValueError):
    pass


def as_matrix(M, name="matrix") -> np.ndarray:
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return A


def sym(S, name="matrix") -> np.ndarray:
    """Return the exactly symmetric part of a square matrix."""
    A = as_matrix(S, name)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class EigResult:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def eig_sym(S) -> EigResult:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    A = sym(S)
    w, V = np.linalg.eigh(A)
    return EigResult(w, V)


def min_eig(S) -> float:
    return float(eig_sym(S).eigenvalues[0])


def max_eig(S) -> float:
    return float(eig_sym(S).eigenvalues[-1])


def norm2(M) -> float:
    A = as_matrix(M)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def _check_tol(tol):
    if tol < 0:
        raise ValueError(f"tolerance must be non-negative, got {tol}")


def is_psd(S, tol=DEFAULT_TOL, scale=None) -> bool:
    """``min_eig(S) >= -tol * max(1, scale)``, with ``scale`` defaulting to ``||S||_2``.

    ``scale`` may be given explicitly when ``S`` is the result of a
    cancellation (e.g. ``A'P + PA``) and its own norm understates the
    rounding level.
    """
    _check_tol(tol)
    A = sym(S)
    s = norm2(A) if scale is None else scale
    return min_eig(A) >= -tol * max(1.0, s)


def is_pd(S, tol=DEFAULT_TOL, scale=None) -> bool:
    _check_tol(tol)
    A = sym(S)
    s = norm2(A) if scale is None else scale
    return min_eig(A) >= tol * max(1.0, s)


def rel_min_eig(S, scale=None) -> float:
    """Smallest eigenvalue divided by ``max(1, scale)``; the slack used in reports."""
    A = sym(S)
    if A.size == 0:
        return np.inf
    s = norm2(A) if scale is None else scale
    return min_eig(A) / max(1.0, s)


def singular_values(M) -> np.ndarray:
    A = as_matrix(M)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def rank_svd(M, tol=DEFAULT_TOL) -> int:
    """Number of singular values strictly above ``tol * sigma_max``."""
    _check_tol(tol)
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def null_space(M, tol=DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the numerical kernel of ``M`` (columns)."""
    A = as_matrix(M)
    _, s, Vt = np.linalg.svd(A)
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > tol * s[0]))
    return Vt[r:].T.copy()


def range_basis(M, tol=DEFAULT_TOL) -> np.ndarray:
    A = as_matrix(M)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > tol * s[0]))
    return U[:, :r].copy()


def is_hurwitz(A, tol=DEFAULT_TOL) -> bool:
    A = as_matrix(A)
    return bool(np.max(np.linalg.eigvals(A).real) < -tol)


def lyap_solve_hurwitz(A, tol=DEFAULT_TOL) -> np.ndarray:
    """Solve ``A'P + PA = -I`` for a Hurwitz ``A``; the result is positive definite."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not is_hurwitz(A, tol):
        raise NotHurwitzError(
            f"A is not Hurwitz: max real part {np.max(np.linalg.eigvals(A).real):.3e}")
    n = A.shape[0]
    # solve_continuous_lyapunov(a, q) solves a X + X a^H = q
    P = scipy.linalg.solve_continuous_lyapunov(A.T, -np.eye(n))
    return sym(P)
