"""Dense linear-algebra kernels for small matrices (dimension up to ~64).

Matrices are plain ``numpy.ndarray`` in row-major order.  The kernels wrap
LAPACK (via numpy/scipy) and add the input checking and error taxonomy the
rest of the package relies on.  All functions are pure: inputs are never
mutated, so concurrent use is safe.

Tolerances are relative to the input norm with an absolute floor of 1e-14.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import (
    InvalidInputError,
    NotPositiveDefiniteError,
    NumericalFailureError,
    SingularMatrixError,
)

ABS_FLOOR = 1e-14


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def _check_symmetric(S, rel_tol, name="matrix"):
    scale = max(float(np.abs(S).max(initial=0.0)), ABS_FLOOR)
    asym = float(np.abs(S - S.T).max(initial=0.0))
    if asym > rel_tol * scale:
        raise InvalidInputError(
            f"{name} is not symmetric: max asymmetry {asym:.3e} "
            f"exceeds {rel_tol:.1e} * {scale:.3e}"
        )


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(w, V)`` with eigenvalues ``w`` ascending and orthonormal
    eigenvector columns ``V`` such that ``S @ V = V @ diag(w)``.
    """
    S = _as_square(S, "S")
    _check_symmetric(S, 1e-12, "S")
    try:
        w, V = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails here
        raise NumericalFailureError(f"symmetric eigensolver failed: {exc}") from exc
    return w, V


def general_eig(M, want_vectors=True):
    """Eigenvalues (and right eigenvectors) of a general real square matrix.

    Returns ``(w, V)`` with ``w`` complex, sorted by (real, imag), and ``V``
    the matching eigenvector columns (``M @ V = V @ diag(w)``), or ``V=None``
    when ``want_vectors`` is false or the vectors are unavailable.  Complex
    eigenvalues of a real input come in conjugate pairs.
    """
    M = _as_square(M, "M")
    try:
        if want_vectors:
            w, V = np.linalg.eig(M)
        else:
            w, V = np.linalg.eigvals(M), None
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"QR iteration failed to converge: {exc}") from exc
    w = np.asarray(w, dtype=complex)
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    if V is not None:
        V = np.asarray(V, dtype=complex)[:, order]
    return w, V


def spectral_norm(M):
    """Largest singular value, i.e. sqrt of the top eigenvalue of ``M.T @ M``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("matrix has non-finite entries")
    if M.size == 0:
        return 0.0
    try:
        return float(np.linalg.norm(M, 2))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalFailureError(f"SVD failed: {exc}") from exc


def solve_spd(A, b):
    """Solve ``A x = b`` for symmetric positive-definite ``A`` via Cholesky.

    ``b`` may be a vector or a matrix of right-hand-side columns.  Raises
    :class:`NotPositiveDefiniteError` when a Cholesky pivot is not positive.
    """
    A = _as_square(A, "A")
    _check_symmetric(A, 1e-12, "A")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise InvalidInputError(
            f"right-hand side length {b.shape[0]} does not match A ({A.shape[0]})"
        )
    try:
        factor = scipy.linalg.cho_factor(0.5 * (A + A.T), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"Cholesky factorization failed (matrix not positive definite): {exc}"
        ) from exc
    return scipy.linalg.cho_solve(factor, b)


def cond_2(P):
    """2-norm condition number ``sigma_max / sigma_min`` of a (possibly
    complex) square matrix.  Raises :class:`SingularMatrixError` when the
    smallest singular value is below ``1e-12`` times the largest."""
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"P must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P.real)) or not np.all(np.isfinite(P.imag)):
        raise InvalidInputError("P has non-finite entries")
    try:
        sigma = np.linalg.svd(P, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalFailureError(f"SVD failed: {exc}") from exc
    smax = float(sigma[0])
    smin = float(sigma[-1])
    if smin <= max(1e-12 * smax, ABS_FLOOR * ABS_FLOOR):
        raise SingularMatrixError(
            f"matrix is numerically singular (sigma_min={smin:.3e}, sigma_max={smax:.3e})"
        )
    return smax / smin
