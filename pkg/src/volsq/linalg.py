"""Dense linear algebra kernel.

Small, pure helpers on numpy arrays: Cholesky factors, PSD solves and
log-determinants, Sherman-Morrison downdates of an inverse Gram matrix, and
minimum-norm least squares. Every sampler and estimator in the package is
built on these.
"""

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_solve, solve_triangular

from .errors import NotPositiveDefinite, SingularDowndate

EPS = np.finfo(float).eps
DOWNDATE_MARGIN = 1e-12


def symmetrize(A: ArrayLike) -> NDArray:
    """Return (A + A^T) / 2 as a float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def cholesky_lower(A: ArrayLike) -> NDArray:
    """Lower Cholesky factor ``L`` with positive diagonal, ``L @ L.T == A``.

    The input is symmetrized first. A pivot ``L[i, i]**2`` at or below
    ``d * eps * max(diag(A))`` is treated as a singular (or indefinite) input
    and raises :class:`NotPositiveDefinite`.
    """
    A = symmetrize(A)
    d = A.shape[0]
    scale = A.diagonal().max() if d else 0.0
    if not scale > 0.0:
        raise NotPositiveDefinite("matrix has no positive diagonal entry")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    # NaN pivots fail this comparison too
    smallest = (L.diagonal() ** 2).min()
    if not smallest > d * EPS * scale:
        raise NotPositiveDefinite(
            f"smallest pivot {smallest:.3e} below threshold {d * EPS * scale:.3e}"
        )
    return L


def solve_psd(A: ArrayLike, b: ArrayLike) -> NDArray:
    L = cholesky_lower(A)
    return cho_solve((L, True), np.asarray(b, dtype=float))


def log_det_psd(A: ArrayLike) -> float:
    L = cholesky_lower(A)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def log_det_or_neg_inf(A: ArrayLike) -> float:
    """ln det(A) for a PSD matrix, ``-inf`` when it is numerically singular."""
    try:
        return log_det_psd(A)
    except NotPositiveDefinite:
        return -np.inf


def downdate_inverse(Ainv: ArrayLike, x: ArrayLike) -> NDArray:
    """Inverse of ``A - x x^T`` given ``Ainv = A^{-1}`` (Sherman-Morrison).

    Raises :class:`SingularDowndate` if ``x^T Ainv x >= 1 - 1e-12``, i.e. the
    downdated matrix would be singular.
    """
    Ainv = np.asarray(Ainv, dtype=float)
    x = np.asarray(x, dtype=float)
    v = Ainv @ x
    h = float(x @ v)
    if h >= 1.0 - DOWNDATE_MARGIN:
        raise SingularDowndate(f"x^T A^-1 x = {h!r} leaves a singular matrix")
    out = Ainv + np.multiply.outer(v, v / (1.0 - h))
    return 0.5 * (out + out.T)


def update_inverse(Ainv: ArrayLike, x: ArrayLike) -> NDArray:
    """Inverse of ``A + x x^T`` given ``Ainv = A^{-1}``."""
    Ainv = np.asarray(Ainv, dtype=float)
    x = np.asarray(x, dtype=float)
    v = Ainv @ x
    return symmetrize(Ainv - np.outer(v, v) / (1.0 + float(x @ v)))


def pseudo_solve(X: ArrayLike, y: ArrayLike) -> NDArray:
    """Minimum-norm least squares solution ``X^+ y``.

    Singular values below ``d * eps * sigma_max`` are treated as zero, so a
    rank-deficient design gets the min-norm solution instead of an error.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1:
        raise ValueError("need at least one row")
    d = X.shape[1]
    w, *_ = np.linalg.lstsq(X, y, rcond=d * EPS)
    return w


def pseudo_solve_batch(X: NDArray, y: NDArray) -> NDArray:
    """Vectorized :func:`pseudo_solve` over a stack of designs.

    ``X`` has shape ``(N, k, d)`` and ``y`` shape ``(N, k)``; returns ``(N, d)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[-1]
    pinv = np.linalg.pinv(X, rcond=d * EPS)
    return np.einsum("nij,nj->ni", pinv, y)


def leverage_score(x: ArrayLike, Sigma_hat: ArrayLike) -> float:
    """``x^T Sigma_hat^{-1} x``."""
    L = cholesky_lower(Sigma_hat)
    z = solve_triangular(L, np.asarray(x, dtype=float), lower=True)
    return float(z @ z)


def leverage_scores(X: ArrayLike, L: NDArray) -> NDArray:
    """Row-wise leverage scores of ``X`` given a lower Cholesky factor ``L``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = solve_triangular(L, X.T, lower=True)
    return np.einsum("ij,ij->j", Z, Z)


def leverage_scores_inv(X: NDArray, L_inv: NDArray) -> NDArray:
    """Row-wise leverage scores given ``L_inv``, the inverse of the Cholesky factor."""
    Z = X @ L_inv.T
    return np.einsum("ij,ij->i", Z, Z)
