"""Least squares estimators and the volume-sampling bias correction.

An i.i.d. sample augmented with ``d`` labeled ``VS^d`` points gives a least
squares solution whose expectation is exactly the population optimum
``w*_D = Sigma_D^{-1} E[x y]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .data import (
    LabelOracle,
    PointDistribution,
    as_generator,
    cubic_response,
    exact_covariance,
    query_labels,
)
from .errors import BadShape, DimensionMismatch, Unavailable
from .linalg import pseudo_solve, solve_psd
from .rescaled import brute_force_vs_law

PROVENANCES = ("iid", "vs_d", "augmented")


@dataclass
class LabeledSample:
    points: NDArray
    labels: NDArray
    provenance: str = "iid"

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.points.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch("one label per point is required")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return self.labels.shape[0]

    @classmethod
    def empty(cls, d: int) -> "LabeledSample":
        return cls(np.empty((0, d)), np.empty(0))


@dataclass
class EstimatorReport:
    w: NDArray
    sample_size: int
    query_count: int
    provenance: str
    error_sq: Optional[float] = None

    def csv_row(self, k: int, T_index: int, seed: int) -> list:
        err = "" if self.error_sq is None else repr(float(self.error_sq))
        return [self.provenance, k, T_index, seed, self.query_count, err,
                *(repr(float(v)) for v in self.w)]


def least_squares(sample: LabeledSample) -> NDArray:
    """``argmin_w sum (x_i.w - y_i)^2``, min-norm when the design is singular."""
    if len(sample) < 1:
        raise ValueError("sample must be nonempty")
    return pseudo_solve(sample.points, sample.labels)


def cramer_solve(X: ArrayLike, y: ArrayLike) -> NDArray:
    """Solve a square system by Cramer's rule: ``w_i = det(X <-i y) / det(X)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != X.shape[1]:
        raise BadShape("Cramer's rule needs a square design")
    det = np.linalg.det(X)
    w = np.empty(X.shape[1])
    for i in range(X.shape[1]):
        Xi = X.copy()
        Xi[:, i] = y
        w[i] = np.linalg.det(Xi) / det
    return w


def optimum_weights(dist: PointDistribution, oracle: LabelOracle) -> NDArray:
    """Population least squares optimum ``Sigma_D^{-1} E[x y]`` in closed form."""
    if oracle.kind == "linear":
        return oracle.weights.copy()
    if dist.kind == "discrete" and oracle.kind in ("attached", "cubic"):
        atoms = dist.atoms
        if oracle.kind == "attached":
            y = np.array([oracle.labels[tuple(a)] for a in atoms])
        else:
            y = cubic_response(atoms)
        Exy = atoms.T @ (dist.probs * y)
        return solve_psd(exact_covariance(dist), Exy)
    if dist.kind == "gaussian" and oracle.kind == "cubic":
        # Isserlis: E[x_a x_j^3] = 3 S_aj S_jj, so E[x y] = S 1 + S diag(S)
        S = dist.covariance
        Exy = S @ (1.0 + np.diag(S))
        return solve_psd(S, Exy)
    raise Unavailable(f"no closed-form optimum for {dist.kind}/{oracle.kind}")


def _optimum_or_none(dist, oracle):
    try:
        return optimum_weights(dist, oracle)
    except Unavailable:
        return None


def augmented_least_squares(iid_sample: LabeledSample, dist: PointDistribution,
                            oracle: LabelOracle, d_sampler: Callable, rng=None,
                            label_rng=None, w_star: Optional[NDArray] = None) -> EstimatorReport:
    """Append ``d`` labeled ``VS^d`` points to ``iid_sample`` and solve.

    ``d_sampler(rng)`` must return a ``(d, d)`` array of ``VS^d`` points.
    Labels for the new points come from ``label_rng`` (an independent stream
    derived from ``rng`` when omitted). The report's ``query_count`` is the
    number of new label queries, always ``d``.
    """
    gen = as_generator(rng)
    lgen = as_generator(label_rng) if label_rng is not None else gen.spawn(1)[0]
    before = oracle.query_count
    extra = np.atleast_2d(np.asarray(d_sampler(gen), dtype=float)).reshape(-1, dist.d)
    y_extra = query_labels(oracle, extra, lgen)
    if len(iid_sample):
        X = np.vstack([iid_sample.points, extra])
        y = np.concatenate([iid_sample.labels, y_extra])
    else:
        X, y = extra, y_extra
    w = least_squares(LabeledSample(X, y, "augmented"))
    if w_star is None:
        w_star = _optimum_or_none(dist, oracle)
    err = None if w_star is None else estimation_error(w, w_star)
    return EstimatorReport(w, len(y), oracle.query_count - before, "augmented", err)


def iid_least_squares(dist: PointDistribution, oracle: LabelOracle, k: int, rng=None,
                      label_rng=None, w_star: Optional[NDArray] = None) -> EstimatorReport:
    """Plain least squares on ``k`` fresh i.i.d. labeled points."""
    gen = as_generator(rng)
    lgen = as_generator(label_rng) if label_rng is not None else gen.spawn(1)[0]
    before = oracle.query_count
    X = dist.sample(k, gen)
    y = query_labels(oracle, X, lgen)
    w = least_squares(LabeledSample(X, y, "iid"))
    if w_star is None:
        w_star = _optimum_or_none(dist, oracle)
    err = None if w_star is None else estimation_error(w, w_star)
    return EstimatorReport(w, k, oracle.query_count - before, "iid", err)


def average_estimators(reports: Sequence) -> NDArray:
    """Componentwise mean of estimator vectors (reports or raw arrays)."""
    if len(reports) == 0:
        raise ValueError("nothing to average")
    ws = [np.asarray(r.w if isinstance(r, EstimatorReport) else r, dtype=float) for r in reports]
    if len({w.shape for w in ws}) != 1:
        raise DimensionMismatch("estimators have different dimensions")
    # exactly rounded sums: the mean does not depend on replica order
    W = np.stack(ws)
    return np.array([math.fsum(col) for col in W.T]) / len(ws)


def estimation_error(w_bar: ArrayLike, w_star: ArrayLike) -> float:
    """``||w_bar - w_star||^2``."""
    w_bar = np.asarray(w_bar, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if w_bar.shape != w_star.shape:
        raise DimensionMismatch(f"shapes {w_bar.shape} and {w_star.shape} differ")
    diff = w_bar - w_star
    return float(diff @ diff)


def leave_one_out_weights(X: ArrayLike) -> NDArray:
    """``det(X_-i^T X_-i) / ((k - d) det(X^T X))`` for each row ``i``.

    Computed as ``(1 - x_i^T (X^T X)^-1 x_i) / (k - d)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k, d = X.shape
    if k <= d:
        raise BadShape(f"need more rows than columns, got {k}x{d}")
    lev = np.einsum("ij,ji->i", X, np.linalg.solve(X.T @ X, X.T))
    return (1.0 - lev) / (k - d)


def leave_one_out_identity_residual(X: ArrayLike, y: ArrayLike) -> float:
    """``||w*(X, y) - sum_i weight_i w*(X_-i, y_-i)||``.

    The weights are the determinant ratios of :func:`leave_one_out_weights`,
    evaluated directly from determinants here so both sides stay independent
    of the leverage shortcut.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    k, d = X.shape
    if k <= d:
        raise BadShape(f"need more rows than columns, got {k}x{d}")
    lhs = pseudo_solve(X, y)
    full = np.linalg.det(X.T @ X)
    rhs = np.zeros(d)
    for i in range(k):
        keep = np.arange(k) != i
        Xi = X[keep]
        wt = np.linalg.det(Xi.T @ Xi) / ((k - d) * full)
        if wt > 0:
            rhs += wt * pseudo_solve(Xi, y[keep])
    return float(np.linalg.norm(lhs - rhs))


# -- exact enumeration on discrete labeled distributions ---------------------

def exact_augmented_expectation(atoms: ArrayLike, probs: ArrayLike, labels: ArrayLike,
                                k: int) -> NDArray:
    """Exact ``E[w*(<S, S_o>)]`` for ``S`` i.i.d. of size ``k`` and ``S_o ~ VS^d``.

    Enumerates every i.i.d. tuple and every ``VS^d`` tuple of atoms with
    deterministic per-atom labels.
    """
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    d = atoms.shape[1]
    vs_law = brute_force_vs_law(atoms, probs, d)
    total = np.zeros(d)
    for iid in itertools.product(range(len(atoms)), repeat=k):
        p_iid = float(np.prod(probs[list(iid)])) if k else 1.0
        if p_iid == 0:
            continue
        for vs, p_vs in vs_law.items():
            idx = list(iid) + list(vs)
            w = pseudo_solve(atoms[idx], labels[idx])
            total += p_iid * p_vs * w
    return total


def exact_iid_expectation(atoms: ArrayLike, probs: ArrayLike, labels: ArrayLike,
                          k: int) -> NDArray:
    """Exact ``E[w*(S)]`` for a plain i.i.d. sample of size ``k``."""
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    total = np.zeros(atoms.shape[1])
    for iid in itertools.product(range(len(atoms)), repeat=k):
        p = float(np.prod(probs[list(iid)]))
        if p:
            total += p * pseudo_solve(atoms[list(iid)], labels[list(iid)])
    return total
