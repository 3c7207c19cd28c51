"""Data distributions, label oracles and covariance estimates.

A :class:`PointDistribution` describes ``D_X`` (discrete atoms, a mean-zero
Gaussian, or a user callable) and a :class:`LabelOracle` describes
``D_{Y|x}``. Oracles count every label they hand out so pipelines can report
their query budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    ConfigInvalid,
    MissingSupportBound,
    SingularCovariance,
    UnboundedSupport,
    Unavailable,
    UnlabeledPoint,
    NotPositiveDefinite,
)
from .linalg import cholesky_lower, leverage_scores, symmetrize

PROB_TOL = 1e-12
DEFAULT_CHERNOFF_CONSTANT = 8.0


@dataclass(frozen=True)
class RngState:
    """Seed plus stream id; equal pairs give identical draw sequences."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def child(self, stream_id: int) -> "RngState":
        # Streams are mixed so distinct (seed, stream) pairs never collide.
        return RngState(self.seed, self.stream_id * 1_000_003 + stream_id + 1)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


@dataclass(frozen=True, eq=False)
class PointDistribution:
    """Distribution of the input points ``x`` in ``R^d``.

    Use :meth:`discrete`, :meth:`gaussian` or :meth:`custom` to construct.
    For a custom distribution ``sampler(rng, m)`` must return an ``(m, d)``
    array of i.i.d. draws.
    """

    kind: str
    d: int
    atoms: Optional[NDArray] = None
    probs: Optional[NDArray] = None
    covariance: Optional[NDArray] = None
    sampler: Optional[Callable[[np.random.Generator, int], NDArray]] = None
    known_covariance: Optional[NDArray] = None
    support_bound: Optional[float] = None
    _cdf: Optional[NDArray] = field(default=None, repr=False)
    _chol: Optional[NDArray] = field(default=None, repr=False)

    @classmethod
    def discrete(cls, atoms: ArrayLike, probs: Optional[ArrayLike] = None,
                 support_bound: Optional[float] = None) -> "PointDistribution":
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        n, d = atoms.shape
        if n < 1 or d < 1:
            raise ConfigInvalid("need at least one atom of dimension >= 1")
        if probs is None:
            probs = np.full(n, 1.0 / n)
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (n,) or np.any(probs < 0):
            raise ConfigInvalid("probabilities must be nonnegative, one per atom")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ConfigInvalid(f"probabilities sum to {probs.sum()!r}, not 1")
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return cls("discrete", d, atoms=atoms, probs=probs,
                   support_bound=support_bound, _cdf=cdf)

    @classmethod
    def gaussian(cls, covariance: ArrayLike, mean: Optional[ArrayLike] = None) -> "PointDistribution":
        covariance = symmetrize(np.atleast_2d(np.asarray(covariance, dtype=float)))
        d = covariance.shape[0]
        if mean is not None and np.any(np.asarray(mean, dtype=float) != 0):
            raise ConfigInvalid("only mean-zero Gaussians are supported")
        try:
            L = cholesky_lower(covariance)
        except NotPositiveDefinite:
            raise ConfigInvalid("Gaussian covariance must be positive definite") from None
        return cls("gaussian", d, covariance=covariance, _chol=L)

    @classmethod
    def custom(cls, d: int, sampler: Callable[[np.random.Generator, int], NDArray],
               known_covariance: Optional[ArrayLike] = None,
               support_bound: Optional[float] = None) -> "PointDistribution":
        if known_covariance is not None:
            known_covariance = symmetrize(known_covariance)
        return cls("custom", d, sampler=sampler, known_covariance=known_covariance,
                   support_bound=support_bound)

    def sample(self, m: int, rng) -> NDArray:
        return draw_iid(self, m, rng)


def draw_iid(dist: PointDistribution, m: int, rng) -> NDArray:
    """``m`` i.i.d. draws from ``dist`` as an ``(m, d)`` array."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    gen = as_generator(rng)
    if dist.kind == "discrete":
        # inverse CDF; the last atom absorbs any residual mass
        idx = np.searchsorted(dist._cdf, gen.random(m), side="right")
        idx = np.minimum(idx, len(dist.probs) - 1)
        return dist.atoms[idx].copy()
    if dist.kind == "gaussian":
        z = gen.standard_normal((m, dist.d))
        return z @ dist._chol.T
    out = np.asarray(dist.sampler(gen, m), dtype=float).reshape(m, dist.d)
    return out


def exact_covariance(dist: PointDistribution) -> NDArray:
    """``E[x x^T]`` in closed form."""
    if dist.kind == "discrete":
        return symmetrize(np.einsum("i,ij,ik->jk", dist.probs, dist.atoms, dist.atoms))
    if dist.kind == "gaussian":
        return dist.covariance.copy()
    if dist.known_covariance is not None:
        return dist.known_covariance.copy()
    raise Unavailable("no closed-form covariance for a custom distribution")


def conditioning_number(dist: PointDistribution) -> float:
    """``K_D = sup_x x^T Sigma_D^{-1} x`` over the support of ``dist``."""
    if dist.kind == "gaussian":
        raise UnboundedSupport("a Gaussian has unbounded support")
    if dist.kind == "discrete":
        try:
            L = cholesky_lower(exact_covariance(dist))
        except NotPositiveDefinite:
            raise SingularCovariance("E[x x^T] is singular") from None
        support = dist.atoms[dist.probs > 0]
        return float(np.max(leverage_scores(support, L)))
    if dist.support_bound is None:
        raise MissingSupportBound("custom distribution without a support bound")
    return float(dist.support_bound)


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_hat: NDArray
    epsilon: float
    delta: float
    samples_used: int
    chernoff_constant: float = DEFAULT_CHERNOFF_CONSTANT
    support_bound: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.samples_used < 1:
            raise ValueError("samples_used must be >= 1")

    @classmethod
    def exact(cls, dist: PointDistribution, epsilon: Optional[float] = None) -> "CovarianceEstimate":
        """Wrap the exact ``Sigma_D`` as an estimate (zero error)."""
        if epsilon is None:
            epsilon = 1.0 / math.sqrt(2 * dist.d)
        return cls(exact_covariance(dist), epsilon, 0.5, 1)


def chernoff_sample_size(K: float, d: int, epsilon: float, delta: float,
                         C: float = DEFAULT_CHERNOFF_CONSTANT) -> int:
    """``ceil(C * K / epsilon^2 * ln(d / delta))``."""
    # guard against 191.99999 style round-off before the ceiling
    m = C * K / epsilon**2 * math.log(d / delta)
    return max(1, math.ceil(m - 1e-9))


def estimate_covariance(dist: PointDistribution, epsilon: float, delta: float,
                        C: float = DEFAULT_CHERNOFF_CONSTANT, rng=None) -> CovarianceEstimate:
    """Sample covariance from ``m = ceil(C K eps^-2 ln(d/delta))`` i.i.d. draws.

    ``K`` is ``dist.support_bound``; for a discrete distribution without one
    the exact conditioning number is enumerated instead.
    """
    if not 0.0 < epsilon < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("epsilon and delta must lie in (0, 1)")
    if dist.support_bound is not None:
        K = float(dist.support_bound)
    elif dist.kind == "discrete":
        K = conditioning_number(dist)
    else:
        raise MissingSupportBound("estimate_covariance needs a support bound K")
    m = chernoff_sample_size(K, dist.d, epsilon, delta, C)
    X = draw_iid(dist, m, rng)
    sigma_hat = symmetrize(X.T @ X / m)
    return CovarianceEstimate(sigma_hat, epsilon, delta, m, C, K)


# -- labels -----------------------------------------------------------------

def cubic_response(X: ArrayLike) -> NDArray:
    """``xi(x) = sum_i x_i + x_i^3 / 3`` row-wise."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.sum(X + X**3 / 3.0, axis=1)


@dataclass(eq=False)
class LabelOracle:
    """Conditional label source ``y ~ D_{Y|x}`` with a query counter.

    Kinds: ``linear`` (``y = w.x + noise``), ``cubic`` (``y = xi(x) + noise``),
    ``attached`` (a fixed label per discrete atom) and ``custom``
    (``fn(rng, X) -> y``).
    """

    kind: str
    weights: Optional[NDArray] = None
    noise_sd: float = 0.0
    labels: Optional[dict] = None
    fn: Optional[Callable[[np.random.Generator, NDArray], NDArray]] = None
    query_count: int = 0

    @classmethod
    def linear(cls, weights: ArrayLike, noise_sd: float = 0.0) -> "LabelOracle":
        return cls("linear", weights=np.asarray(weights, dtype=float).ravel(), noise_sd=noise_sd)

    @classmethod
    def cubic(cls, noise_sd: float = 1.0) -> "LabelOracle":
        return cls("cubic", noise_sd=noise_sd)

    @classmethod
    def attached(cls, atoms: ArrayLike, labels: Sequence[float]) -> "LabelOracle":
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if len(labels) != len(atoms):
            raise ConfigInvalid("need exactly one label per atom")
        table = {tuple(a): float(y) for a, y in zip(atoms, labels)}
        return cls("attached", labels=table)

    @classmethod
    def custom(cls, fn: Callable[[np.random.Generator, NDArray], NDArray]) -> "LabelOracle":
        return cls("custom", fn=fn)


def query_labels(oracle: LabelOracle, points: ArrayLike, rng=None) -> NDArray:
    """One label per row of ``points``; bumps ``oracle.query_count``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("points must be nonempty")
    if oracle.kind == "attached":
        try:
            y = np.array([oracle.labels[tuple(x)] for x in X])
        except KeyError as exc:
            raise UnlabeledPoint(f"no label attached to point {exc.args[0]}") from None
    else:
        gen = as_generator(rng)
        if oracle.kind == "linear":
            y = X @ oracle.weights
        elif oracle.kind == "cubic":
            y = cubic_response(X)
        else:
            y = np.asarray(oracle.fn(gen, X), dtype=float).reshape(X.shape[0])
        if oracle.kind != "custom" and oracle.noise_sd > 0:
            y = y + oracle.noise_sd * gen.standard_normal(X.shape[0])
    oracle.query_count += X.shape[0]
    return y


# -- JSON specs -------------------------------------------------------------

@dataclass
class DistributionSpec:
    dist: PointDistribution
    oracle: Optional[LabelOracle]
    seed: Optional[int]


def load_distribution_spec(source) -> DistributionSpec:
    """Build a distribution (and optional oracle) from a JSON document.

    ``source`` may be a path or an already-parsed dict with keys ``kind``,
    ``d``, ``atoms``, ``probs``, ``covariance``, ``oracle``, ``noise_sd``,
    ``seed``. Optional extras: ``labels`` for the attached oracle and
    ``weights`` for the linear one.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read distribution spec: {exc}") from None
    else:
        doc = dict(source)
    kind = doc.get("kind")
    try:
        if kind == "discrete":
            dist = PointDistribution.discrete(doc["atoms"], doc.get("probs"),
                                              doc.get("support_bound"))
        elif kind == "gaussian":
            cov = doc.get("covariance")
            if cov is None:
                cov = np.eye(int(doc["d"]))
            dist = PointDistribution.gaussian(cov, doc.get("mean"))
        else:
            raise ConfigInvalid(f"unsupported distribution kind {kind!r}")
    except KeyError as exc:
        raise ConfigInvalid(f"missing field {exc.args[0]!r}") from None
    if "d" in doc and int(doc["d"]) != dist.d:
        raise ConfigInvalid(f"declared d={doc['d']} but data has d={dist.d}")

    oracle = None
    noise_sd = float(doc.get("noise_sd", 0.0))
    okind = doc.get("oracle")
    if okind == "cubic":
        oracle = LabelOracle.cubic(noise_sd)
    elif okind == "linear":
        if "weights" not in doc:
            raise ConfigInvalid("linear oracle needs 'weights'")
        oracle = LabelOracle.linear(doc["weights"], noise_sd)
    elif okind == "attached":
        if dist.kind != "discrete" or "labels" not in doc:
            raise ConfigInvalid("attached oracle needs a discrete distribution and 'labels'")
        oracle = LabelOracle.attached(dist.atoms, doc["labels"])
    elif okind is not None:
        raise ConfigInvalid(f"unsupported oracle {okind!r}")
    seed = doc.get("seed")
    return DistributionSpec(dist, oracle, None if seed is None else int(seed))
