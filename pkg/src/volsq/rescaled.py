"""Volume-rescaled sampling ``VS^k`` from a point distribution.

``VS^k`` reweights ``k`` i.i.d. draws by ``det(sum_i x_i x_i^T)``. Two exact
size-``d`` samplers are provided:

* :func:`determinantal_rejection_sample` for bounded-support distributions,
  given an approximate second-moment matrix and a leverage bound ``K``;
* :func:`gaussian_vs_sample` for mean-zero Gaussians, needing only ``2k+2``
  i.i.d. draws and no covariance at all.

:func:`vs_sample_size_k` turns any size-``d`` sampler into a size-``k`` one
by padding with i.i.d. draws and shuffling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import solve_triangular

from .data import CovarianceEstimate, PointDistribution, as_generator, draw_iid
from .errors import (
    ConfigInvalid,
    FastRejectionViolated,
    LeverageBoundViolated,
    RestartBudgetExceeded,
    SingularGram,
    NotPositiveDefinite,
)
from .linalg import cholesky_lower, leverage_scores_inv, log_det_or_neg_inf, symmetrize
from .volume import reverse_iterative_sample, reverse_iterative_sample_batch

FAST_REJECTION_TOL = 1e-9
LEVERAGE_TOL = 1e-9


def vs_rescaling_weight(points: ArrayLike) -> float:
    """``det(sum_i x_i x_i^T)``; zero for a rank-deficient sample."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return max(0.0, float(np.linalg.det(X.T @ X)))


def vs_normalization_constant(k: int, d: int, Sigma: ArrayLike) -> float:
    """``d! C(k, d) det(Sigma)``, the expected rescaling weight of ``k`` draws."""
    if k < d:
        raise ValueError("k must be at least d")
    return math.factorial(d) * math.comb(k, d) * float(np.linalg.det(np.atleast_2d(Sigma)))


def brute_force_vs_law(atoms: ArrayLike, probs: ArrayLike, k: int) -> dict:
    """Exact ``VS^k`` law of ordered atom-index tuples for a discrete ``D_X``.

    Each tuple gets ``prod_i p_i * det(X^T X)`` divided by the sum over all
    tuples. The raw sum equals ``d! C(k,d) det(Sigma_D)`` exactly, which
    :func:`vs_expected_weight` exposes for checking that identity.
    """
    weights, total = _vs_weights(atoms, probs, k)
    return {t: w / total for t, w in weights.items() if w > 0}


def vs_expected_weight(atoms: ArrayLike, probs: ArrayLike, k: int) -> float:
    """``E[det(sum x_i x_i^T)]`` over ``k`` i.i.d. draws, by enumeration."""
    return _vs_weights(atoms, probs, k)[1]


def _vs_weights(atoms, probs, k):
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    probs = np.asarray(probs, dtype=float)
    weights = {}
    total = 0.0
    for tup in itertools.product(range(len(atoms)), repeat=k):
        p = float(np.prod(probs[list(tup)]))
        w = p * vs_rescaling_weight(atoms[list(tup)]) if p > 0 else 0.0
        weights[tup] = w
        total += w
    return weights, total


# -- determinantal rejection sampling ---------------------------------------

@dataclass(frozen=True)
class RejectionConfig:
    """Parameters of determinantal rejection sampling.

    ``K`` bounds the leverage ``x^T Sigma_hat^{-1} x`` over the support and
    ``t`` is the pool size. Any ``t >= d`` gives exact output; the 1/4
    batch-acceptance guarantee needs ``t = 2 d^2``.
    """

    K: float
    t: int
    epsilon: float
    max_restarts: int

    @classmethod
    def default(cls, d: int, K: float, t: Optional[int] = None,
                epsilon: Optional[float] = None, delta: float = 1e-6) -> "RejectionConfig":
        if t is None:
            t = 2 * d * d
        if epsilon is None:
            epsilon = 1.0 / math.sqrt(2 * d)
        max_restarts = math.ceil(64 * math.log(1.0 / delta))
        cfg = cls(float(K), int(t), float(epsilon), max_restarts)
        cfg.validate(d)
        return cfg

    @classmethod
    def for_distribution(cls, dist: PointDistribution, K_D: float, **kw) -> "RejectionConfig":
        """Config with ``K = K_D / (1 - epsilon)``, enough for any estimate in the sandwich."""
        eps = kw.pop("epsilon", None) or 1.0 / math.sqrt(2 * dist.d)
        return cls.default(dist.d, K_D / (1.0 - eps), epsilon=eps, **kw)

    def validate(self, d: int) -> None:
        if self.t < d:
            raise ConfigInvalid(f"pool size t={self.t} must be at least d={d}")
        if self.K < d * (1.0 - 1e-12):
            raise ConfigInvalid(f"K={self.K} cannot be below d={d}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigInvalid("epsilon must lie in (0, 1)")
        if self.max_restarts < 1:
            raise ConfigInvalid("max_restarts must be positive")


@dataclass
class RejectionBatch:
    originals: NDArray
    rescaled: NDArray
    sigma_tilde: NDArray
    det_ratio: float
    accepted: bool
    points_consumed: int


@dataclass
class RejectionStats:
    restarts: int = 0
    batches: int = 0
    points_consumed: int = 0
    det_ratios: list = field(default_factory=list)


def _sigma_hat(est) -> NDArray:
    if isinstance(est, CovarianceEstimate):
        return est.sigma_hat
    return symmetrize(np.atleast_2d(est))


def fill_rejection_pool(dist: PointDistribution, L_hat_inv: NDArray, K: float, t: int,
                        gen: np.random.Generator):
    """Leverage-weighted pool of ``t`` candidates (inner loop of the sampler).

    ``L_hat_inv`` is the inverse of the lower Cholesky factor of ``Sigma_hat``.
    Returns ``(originals, leverages, points_consumed)``. Candidates are drawn in
    chunks; only those up to the ``t``-th acceptance count as consumed.
    """
    d = dist.d
    pool = np.empty((t, d))
    levs = np.empty(t)
    filled = 0
    consumed = 0
    chunk = max(16, int(math.ceil(1.2 * t * K / d)))
    while filled < t:
        X = draw_iid(dist, chunk, gen)
        lev = leverage_scores_inv(X, L_hat_inv)
        u = gen.random(chunk)
        bad = lev > K * (1.0 + LEVERAGE_TOL)
        accept = u < lev / K
        hits = np.flatnonzero(accept)
        need = t - filled
        used = hits[need - 1] + 1 if len(hits) >= need else chunk
        if np.any(bad[:used]):
            j = int(np.flatnonzero(bad[:used])[0])
            raise LeverageBoundViolated(
                f"observed leverage {lev[j]:.6g} exceeds K={K:.6g}"
            )
        take = np.flatnonzero(accept[:used])
        pool[filled:filled + len(take)] = X[take]
        levs[filled:filled + len(take)] = lev[take]
        filled += len(take)
        consumed += used
    return pool, levs, consumed


def rejection_batch(dist: PointDistribution, sigma_hat: ArrayLike, K: float, t: int,
                    rng=None, L_hat: Optional[NDArray] = None) -> RejectionBatch:
    """One pass of the repeat loop: fill a pool, rescale, flip the determinant coin."""
    gen = as_generator(rng)
    sigma_hat = _sigma_hat(sigma_hat)
    d = sigma_hat.shape[0]
    if L_hat is None:
        L_hat = cholesky_lower(sigma_hat)
    pool, levs, consumed = fill_rejection_pool(dist, np.linalg.inv(L_hat), K, t, gen)
    rescaled = pool * np.sqrt(d / levs)[:, None]
    sigma_tilde = symmetrize(rescaled.T @ rescaled / t)
    log_hat = 2.0 * float(np.sum(np.log(L_hat.diagonal())))
    ratio = float(np.exp(log_det_or_neg_inf(sigma_tilde) - log_hat))
    if ratio > 1.0 + FAST_REJECTION_TOL:
        raise FastRejectionViolated(f"det(Sigma_tilde Sigma_hat^-1) = {ratio!r} > 1")
    accepted = bool(gen.random() < min(1.0, ratio))
    return RejectionBatch(pool, rescaled, sigma_tilde, ratio, accepted, consumed)


def determinantal_rejection_sample(dist: PointDistribution, est, cfg: RejectionConfig,
                                   rng=None):
    """Draw ``d`` points distributed exactly as ``VS^d`` of ``dist``.

    Parameters
    ----------
    dist : PointDistribution
        Only i.i.d. draws are used.
    est : CovarianceEstimate or array
        Approximation ``Sigma_hat`` of ``E[x x^T]``.
    cfg : RejectionConfig
        ``cfg.K`` must dominate ``x^T Sigma_hat^{-1} x`` on the support; a
        violation raises :class:`LeverageBoundViolated` rather than silently
        returning samples from the wrong law.

    Returns
    -------
    points : ndarray, shape (d, d)
        The selected original (unrescaled) points, one per row.
    stats : RejectionStats
    """
    gen = as_generator(rng)
    sigma_hat = _sigma_hat(est)
    d = sigma_hat.shape[0]
    if d != dist.d:
        raise ConfigInvalid("estimate and distribution dimensions differ")
    cfg.validate(d)
    L_hat = cholesky_lower(sigma_hat)
    stats = RejectionStats()
    while True:
        if stats.batches > cfg.max_restarts:
            raise RestartBudgetExceeded(
                f"no batch accepted after {stats.batches} tries; check K and Sigma_hat"
            )
        batch = rejection_batch(dist, sigma_hat, cfg.K, cfg.t, gen, L_hat=L_hat)
        stats.batches += 1
        stats.points_consumed += batch.points_consumed
        stats.det_ratios.append(batch.det_ratio)
        if batch.accepted:
            break
        stats.restarts += 1
    idx = reverse_iterative_sample(batch.rescaled, d, gen)
    return batch.originals[list(idx)], stats


def determinantal_rejection_sample_batch(dist: PointDistribution, est, cfg: RejectionConfig,
                                         n_samples: int, rng=None):
    """``n_samples`` independent outputs of :func:`determinantal_rejection_sample`.

    One long candidate stream is thinned by leverage and cut into consecutive
    pools of ``t``; pools are i.i.d., each gets its own determinant coin, and
    the first ``n_samples`` accepted pools are volume-subsampled in one
    vectorized pass. Returns ``(points, stats)`` with ``points`` of shape
    ``(n_samples, d, d)``. ``stats.det_ratios`` covers every pool up to the
    last one used; ``stats.points_consumed`` counts every candidate drawn.
    """
    gen = as_generator(rng)
    sigma_hat = _sigma_hat(est)
    d = sigma_hat.shape[0]
    if d != dist.d:
        raise ConfigInvalid("estimate and distribution dimensions differ")
    cfg.validate(d)
    t, K = cfg.t, cfg.K
    L_hat = cholesky_lower(sigma_hat)
    L_inv = np.linalg.inv(L_hat)
    log_hat = 2.0 * float(np.sum(np.log(L_hat.diagonal())))
    stats = RejectionStats()
    accepted_pools = []
    n_acc = 0
    chunk_pools = max(64, n_samples)
    while n_acc < n_samples:
        if stats.batches > cfg.max_restarts * max(n_samples, 1):
            raise RestartBudgetExceeded("batch acceptance rate is far below its guarantee")
        pool, levs, consumed = fill_rejection_pool(dist, L_inv, K, t * chunk_pools, gen)
        pool = pool.reshape(chunk_pools, t, d)
        rescaled = pool * np.sqrt(d / levs.reshape(chunk_pools, t))[:, :, None]
        sig = np.einsum("pti,ptj->pij", rescaled, rescaled) / t
        sign, logdet = np.linalg.slogdet(sig)
        ratios = np.where(sign > 0, np.exp(logdet - log_hat), 0.0)
        if ratios.max() > 1.0 + FAST_REJECTION_TOL:
            raise FastRejectionViolated(f"det(Sigma_tilde Sigma_hat^-1) = {ratios.max()!r} > 1")
        acc = gen.random(chunk_pools) < np.minimum(ratios, 1.0)
        # stop counting at the pool that completes the request
        need = n_samples - n_acc
        hits = np.flatnonzero(acc)
        used = hits[need - 1] + 1 if len(hits) >= need else chunk_pools
        stats.batches += int(used)
        stats.restarts += int(used - min(len(hits), need))
        stats.det_ratios.extend(ratios[:used].tolist())
        stats.points_consumed += consumed
        take = hits[:need]
        accepted_pools.append((pool[take], rescaled[take]))
        n_acc += len(take)
    originals = np.concatenate([p for p, _ in accepted_pools])
    rescaled = np.concatenate([r for _, r in accepted_pools])
    idx = reverse_iterative_sample_batch(rescaled, d, gen)
    return np.take_along_axis(originals, idx[:, :, None], axis=1), stats


def rejection_sampler(dist: PointDistribution, est, cfg: RejectionConfig) -> Callable:
    """Bind :func:`determinantal_rejection_sample` into a ``d_sampler(rng)`` callable."""
    def d_sampler(rng):
        return determinantal_rejection_sample(dist, est, cfg, rng)[0]
    return d_sampler


# -- decomposition and Gaussian sampler -------------------------------------

def vs_sample_size_k(dist: PointDistribution, k: int, d_sampler: Callable, rng=None) -> NDArray:
    """``VS^k`` sample: a ``VS^d`` sample plus ``k - d`` i.i.d. draws, shuffled."""
    if k < dist.d:
        raise ValueError(f"k={k} must be at least d={dist.d}")
    gen = as_generator(rng)
    head = np.atleast_2d(np.asarray(d_sampler(gen), dtype=float)).reshape(-1, dist.d)
    tail = draw_iid(dist, k - dist.d, gen)
    X = np.vstack([head, tail])
    return X[gen.permutation(k)]


def _gaussian_transform(X: NDArray, W: NDArray) -> NDArray:
    # x_tilde_i = W^{1/2} (X^T X)^{-1/2} x_i with lower Cholesky square roots
    try:
        L_W = cholesky_lower(W)
        L_G = cholesky_lower(X.T @ X)
    except NotPositiveDefinite:
        raise SingularGram("degenerate Gaussian draw") from None
    Z = solve_triangular(L_G, X.T, lower=True)
    return (L_W @ Z).T


def gaussian_vs_sample(dist: PointDistribution, k: int, rng=None) -> NDArray:
    """``VS^k`` sample from a mean-zero Gaussian using ``2k + 2`` i.i.d. draws.

    The first ``k`` draws form ``X``; the remaining ``k + 2`` form a Wishart
    matrix ``W``. Returns the rows ``W^{1/2} (X^T X)^{-1/2} x_i``.
    No knowledge of the covariance is used.
    """
    d = dist.d
    if k < d:
        raise ValueError(f"k={k} must be at least d={d}")
    if dist.kind == "discrete":
        raise ConfigInvalid("the Gaussian sampler does not apply to discrete distributions")
    draws = draw_iid(dist, 2 * k + 2, rng)
    X, Y = draws[:k], draws[k:]
    return _gaussian_transform(X, Y.T @ Y)


def gaussian_vs_sample_batch(dist: PointDistribution, k: int, n_samples: int, rng=None) -> NDArray:
    """``n_samples`` independent :func:`gaussian_vs_sample` outputs, shape ``(N, k, d)``."""
    d = dist.d
    if k < d:
        raise ValueError(f"k={k} must be at least d={d}")
    draws = draw_iid(dist, n_samples * (2 * k + 2), rng).reshape(n_samples, 2 * k + 2, d)
    X, Y = draws[:, :k], draws[:, k:]
    G = np.einsum("nki,nkj->nij", X, X)
    W = np.einsum("nki,nkj->nij", Y, Y)
    try:
        L_G = np.linalg.cholesky(G)
        L_W = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise SingularGram("degenerate Gaussian draw in batch") from None
    Z = np.linalg.solve(L_G, np.swapaxes(X, 1, 2))
    return np.swapaxes(L_W @ Z, 1, 2)


def gaussian_sampler(dist: PointDistribution) -> Callable:
    """``d_sampler(rng)`` drawing ``VS^d`` with :func:`gaussian_vs_sample`."""
    def d_sampler(rng):
        return gaussian_vs_sample(dist, dist.d, rng)
    return d_sampler


def kantorovich_ratio(Sigma_D: ArrayLike, Sigma_hat: ArrayLike) -> float:
    """``det(Sigma_D Sigma_hat^-1) / (tr(Sigma_D Sigma_hat^-1) / d)^d``."""
    Sigma_D = np.atleast_2d(np.asarray(Sigma_D, dtype=float))
    M = np.linalg.solve(np.atleast_2d(Sigma_hat), Sigma_D)
    lam = np.linalg.eigvals(M).real
    d = len(lam)
    return float(np.exp(np.sum(np.log(lam)) - d * np.log(np.mean(lam))))


def decomposition_law(atoms: ArrayLike, probs: ArrayLike, k: int) -> dict:
    """Exact ordered-tuple law of a ``VS^d`` tuple plus ``k - d`` i.i.d. atoms, shuffled.

    Enumerates every ``VS^d`` tuple, every i.i.d. tail and every permutation
    of the concatenation. Compare against :func:`brute_force_vs_law`.
    """
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    probs = np.asarray(probs, dtype=float)
    d = atoms.shape[1]
    if k < d:
        raise ValueError("k must be at least d")
    head = brute_force_vs_law(atoms, probs, d)
    perms = list(itertools.permutations(range(k)))
    law: dict = {}
    for h, p_h in head.items():
        for tail in itertools.product(range(len(atoms)), repeat=k - d):
            p = p_h * (float(np.prod(probs[list(tail)])) if tail else 1.0)
            if p == 0:
                continue
            tup = h + tail
            for perm in perms:
                key = tuple(tup[j] for j in perm)
                law[key] = law.get(key, 0.0) + p / len(perms)
    return law
