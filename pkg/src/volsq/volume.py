"""Discrete volume sampling over a fixed set of ``n`` points.

A size-``k`` subset ``S`` is drawn with probability

    det(X_S^T X_S) / (C(n-d, k-d) det(X^T X)),

either by enumeration (:func:`brute_force_volume_distribution`) or by reverse
iterative removal (:func:`reverse_iterative_sample`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .data import as_generator
from .errors import (
    BadSubsetSize,
    NotPositiveDefinite,
    SingularDowndate,
    SingularGram,
    TooLarge,
    VolsqError,
)
from .linalg import cholesky_lower, downdate_inverse, log_det_or_neg_inf, log_det_psd

CLAMP_TOL = 1e-9
MAX_ENUMERATION = 10**6


def _as_points(pts: ArrayLike) -> NDArray:
    X = np.asarray(pts, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _gram_inverse(X: NDArray) -> NDArray:
    try:
        L = cholesky_lower(X.T @ X)
    except NotPositiveDefinite:
        raise SingularGram("Gram matrix of the active set is singular") from None
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def _log_gram_det(X: NDArray) -> float:
    if X.shape[0] < X.shape[1]:
        return -np.inf
    return log_det_or_neg_inf(X.T @ X)


def volume_subset_probability(pts: ArrayLike, S: Iterable[int], k: int) -> float:
    X = _as_points(pts)
    n, d = X.shape
    S = sorted(S)
    if len(S) != k or len(set(S)) != k or not d <= k <= n:
        raise BadSubsetSize(f"need |S| = k with {d} <= k <= {n}, got |S|={len(S)}, k={k}")
    try:
        log_full = log_det_psd(X.T @ X)
    except NotPositiveDefinite:
        raise SingularGram("full design is rank deficient") from None
    log_sub = _log_gram_det(X[S])
    if log_sub == -np.inf:
        return 0.0
    log_binom = math.lgamma(n - d + 1) - math.lgamma(k - d + 1) - math.lgamma(n - k + 1)
    return float(np.exp(log_sub - log_full - log_binom))


@dataclass(frozen=True)
class RemovalDistribution:
    active: tuple
    q: NDArray


def _clamp_normalize(q: NDArray) -> NDArray:
    if np.any(q < -CLAMP_TOL):
        raise VolsqError(f"removal probability {q.min():.3e} is negative beyond round-off")
    q = np.clip(q, 0.0, None)
    total = q.sum()
    if total <= 0:
        raise SingularGram("all removal probabilities vanished")
    return q / total


def removal_distribution(pts: ArrayLike, S: Iterable[int]) -> RemovalDistribution:
    """Probabilities of removing each ``i`` in ``S``: ``(1 - x_i^T G_S^-1 x_i) / (|S| - d)``."""
    X = _as_points(pts)
    d = X.shape[1]
    S = tuple(sorted(S))
    if len(S) <= d:
        raise BadSubsetSize(f"need |S| > d = {d}, got {len(S)}")
    XS = X[list(S)]
    Ginv = _gram_inverse(XS)
    lev = np.einsum("ij,jk,ik->i", XS, Ginv, XS)
    q = (1.0 - lev) / (len(S) - d)
    return RemovalDistribution(S, _clamp_normalize(q))


def removal_distribution_by_determinants(pts: ArrayLike, S: Iterable[int]) -> RemovalDistribution:
    """Same as :func:`removal_distribution`, from the determinant ratios directly.

    Slower; serves as an independent cross-check of the leverage form.
    """
    X = _as_points(pts)
    d = X.shape[1]
    S = list(sorted(S))
    if len(S) <= d:
        raise BadSubsetSize(f"need |S| > d = {d}, got {len(S)}")
    log_full = _log_gram_det(X[S])
    if log_full == -np.inf:
        raise SingularGram("Gram matrix of the active set is singular")
    q = np.empty(len(S))
    for pos in range(len(S)):
        rest = S[:pos] + S[pos + 1:]
        q[pos] = np.exp(_log_gram_det(X[rest]) - log_full) / (len(S) - d)
    return RemovalDistribution(tuple(S), q)


def _categorical(q: NDArray, gen: np.random.Generator) -> int:
    cdf = np.cumsum(q)
    i = int(np.searchsorted(cdf, gen.random() * cdf[-1], side="right"))
    return min(i, len(q) - 1)


def reverse_iterative_sample(pts: ArrayLike, k: int, rng=None) -> tuple:
    """Draw a size-``k`` subset by repeatedly removing one point.

    The removed point is chosen with probability proportional to the squared
    volume of what remains. The inverse Gram is factored once and then
    maintained by rank-one downdates, with leverages updated in ``O(n d)`` per
    removal. Returns sorted indices.
    """
    X = _as_points(pts)
    n, d = X.shape
    if not d <= k <= n:
        raise BadSubsetSize(f"need {d} <= k <= {n}, got k={k}")
    if k == n:
        return tuple(range(n))
    gen = as_generator(rng)
    Ginv = _gram_inverse(X)
    lev = np.einsum("ij,jk,ik->i", X, Ginv, X)
    active = np.ones(n, dtype=bool)
    for size in range(n, k, -1):
        # removed points get weight 0, so the CDF stays in index order
        q = np.where(active, 1.0 - lev, 0.0)
        if q.min() < -CLAMP_TOL:
            raise VolsqError(f"removal probability {q.min():.3e} is negative beyond round-off")
        np.maximum(q, 0.0, out=q)
        cdf = np.cumsum(q)
        if cdf[-1] <= 0:
            raise SingularGram("all removal probabilities vanished")
        i = min(int(np.searchsorted(cdf, gen.random() * cdf[-1], side="right")), n - 1)
        v = Ginv @ X[i]
        h = float(X[i] @ v)
        try:
            Ginv = downdate_inverse(Ginv, X[i])
        except SingularDowndate:
            raise SingularGram("selected removal would make the Gram singular") from None
        lev += (X @ v) ** 2 / (1.0 - h)
        active[i] = False
    return tuple(int(j) for j in np.flatnonzero(active))


def reverse_iterative_sample_recompute(pts: ArrayLike, k: int, rng=None) -> tuple:
    """Reference version recomputing the removal distribution at every step."""
    X = _as_points(pts)
    n, d = X.shape
    if not d <= k <= n:
        raise BadSubsetSize(f"need {d} <= k <= {n}, got k={k}")
    gen = as_generator(rng)
    S = list(range(n))
    while len(S) > k:
        q = removal_distribution(X, S).q
        S.pop(_categorical(q, gen))
    return tuple(S)


def brute_force_volume_distribution(pts: ArrayLike, k: int) -> dict:
    """Exact probability of every size-``k`` subset, by enumeration."""
    X = _as_points(pts)
    n, d = X.shape
    if not d <= k <= n:
        raise BadSubsetSize(f"need {d} <= k <= {n}, got k={k}")
    if math.comb(n, k) > MAX_ENUMERATION:
        raise TooLarge(f"C({n}, {k}) subsets exceed the enumeration limit")
    out = {}
    for S in combinations(range(n), k):
        out[S] = volume_subset_probability(X, S, k)
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(s, 0.0) - q.get(s, 0.0)) for s in keys)


def empirical_law(samples: Iterable) -> dict:
    counts: dict = {}
    total = 0
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
        total += 1
    return {s: c / total for s, c in counts.items()}


def reverse_iterative_sample_batch(X: ArrayLike, k: int, rng=None) -> NDArray:
    """Independent :func:`reverse_iterative_sample` runs over a stack of point sets.

    ``X`` has shape ``(N, n, d)``; returns sorted indices of shape ``(N, k)``.
    """
    X = np.asarray(X, dtype=float)
    N, n, d = X.shape
    if not d <= k <= n:
        raise BadSubsetSize(f"need {d} <= k <= {n}, got k={k}")
    gen = as_generator(rng)
    if k == n:
        return np.tile(np.arange(n), (N, 1))
    G = np.einsum("nki,nkj->nij", X, X)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularGram("a Gram matrix in the batch is singular") from None
    Linv = np.linalg.inv(L)
    Ginv = np.swapaxes(Linv, 1, 2) @ Linv
    lev = np.einsum("nki,nij,nkj->nk", X, Ginv, X)
    active = np.ones((N, n), dtype=bool)
    rows = np.arange(N)
    for size in range(n, k, -1):
        q = np.where(active, 1.0 - lev, 0.0)
        if q.min() < -CLAMP_TOL:
            raise VolsqError(f"removal probability {q.min():.3e} is negative beyond round-off")
        np.maximum(q, 0.0, out=q)
        cdf = np.cumsum(q, axis=1)
        u = gen.random(N) * cdf[:, -1]
        i = np.minimum((cdf <= u[:, None]).sum(axis=1), n - 1)
        x = X[rows, i]
        v = np.einsum("nij,nj->ni", Ginv, x)
        h = np.einsum("ni,ni->n", x, v)
        if np.any(h >= 1.0 - 1e-12):
            raise SingularGram("selected removal would make a Gram matrix singular")
        Ginv = Ginv + v[:, :, None] * (v / (1.0 - h)[:, None])[:, None, :]
        lev = lev + np.einsum("nkj,nj->nk", X, v) ** 2 / (1.0 - h)[:, None]
        active[rows, i] = False
    return np.nonzero(active)[1].reshape(N, k)


__all__ = [
    "RemovalDistribution",
    "brute_force_volume_distribution",
    "empirical_law",
    "removal_distribution",
    "removal_distribution_by_determinants",
    "reverse_iterative_sample",
    "reverse_iterative_sample_batch",
    "reverse_iterative_sample_recompute",
    "total_variation",
    "volume_subset_probability",
]
