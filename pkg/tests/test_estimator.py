import itertools
import random

import numpy as np
import pytest

from volsq.data import (
    CovarianceEstimate,
    LabelOracle,
    PointDistribution,
    RngState,
    conditioning_number,
    query_labels,
)
from volsq.errors import BadShape, DimensionMismatch, Unavailable
from volsq.estimator import (
    EstimatorReport,
    LabeledSample,
    augmented_least_squares,
    average_estimators,
    cramer_solve,
    estimation_error,
    exact_augmented_expectation,
    exact_iid_expectation,
    iid_least_squares,
    least_squares,
    leave_one_out_identity_residual,
    leave_one_out_weights,
    optimum_weights,
)
from volsq.experiment import ExperimentConfig, replica_estimators
from volsq.rescaled import RejectionConfig, gaussian_sampler, rejection_sampler

PAIR = np.array([[1.0], [2.0]])
PAIR_LABELS = np.array([1.0, 6.0])


class TestLeastSquares:
    def test_diagonal(self):
        w = least_squares(LabeledSample([[1, 0], [0, 2]], [3, 4]))
        np.testing.assert_allclose(w, [3, 2])

    def test_normal_equations(self):
        assert least_squares(LabeledSample(PAIR, PAIR_LABELS))[0] == pytest.approx(13 / 5)

    def test_consistent_system(self):
        r = np.random.default_rng(0)
        X = r.standard_normal((9, 4))
        w = r.standard_normal(4)
        np.testing.assert_allclose(least_squares(LabeledSample(X, X @ w)), w, atol=1e-9)

    def test_cramer_cross_check(self):
        r = np.random.default_rng(1)
        for d in (1, 2, 3, 5):
            X = r.standard_normal((d, d))
            y = r.standard_normal(d)
            np.testing.assert_allclose(least_squares(LabeledSample(X, y)), cramer_solve(X, y), atol=1e-8)

    def test_singular_square_falls_back(self):
        X = np.array([[1.0, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(least_squares(LabeledSample(X, [2.0, 2.0])), [1.0, 1.0])

    def test_cramer_needs_square(self):
        with pytest.raises(BadShape):
            cramer_solve(np.ones((3, 2)), np.ones(3))

    def test_sample_invariants(self):
        with pytest.raises(DimensionMismatch):
            LabeledSample(np.ones((3, 2)), np.ones(2))
        with pytest.raises(ValueError):
            LabeledSample(np.ones((1, 1)), [1.0], provenance="magic")
        with pytest.raises(ValueError):
            least_squares(LabeledSample.empty(2))
        assert len(LabeledSample.empty(3)) == 0


class TestOptimum:
    def test_attached_pair(self):
        oracle = LabelOracle.attached(PAIR, PAIR_LABELS)
        w = optimum_weights(PointDistribution.discrete(PAIR), oracle)
        assert w[0] == pytest.approx(6.5 / 2.5, abs=1e-14)

    def test_linear(self):
        w = np.array([1.0, -2.0, 0.5])
        got = optimum_weights(PointDistribution.gaussian(np.eye(3)), LabelOracle.linear(w, 0.3))
        np.testing.assert_array_equal(got, w)

    def test_standard_gaussian_cubic(self):
        w = optimum_weights(PointDistribution.gaussian(np.eye(5)), LabelOracle.cubic())
        np.testing.assert_allclose(w, np.full(5, 2.0), atol=1e-14)

    def test_gaussian_cubic_monte_carlo(self):
        # oracle: large-n regression on draws
        for Sigma in (np.eye(5), np.array([[1.5, 0.4, 0.0], [0.4, 1.0, -0.3], [0.0, -0.3, 0.7]])):
            dist = PointDistribution.gaussian(Sigma)
            X = dist.sample(1_000_000, RngState(3))
            y = np.sum(X + X**3 / 3, axis=1)
            mc = np.linalg.lstsq(X, y, rcond=None)[0]
            got = optimum_weights(dist, LabelOracle.cubic())
            np.testing.assert_allclose(got, mc, rtol=0.01)

    def test_discrete_cubic(self):
        atoms = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        probs = np.array([0.2, 0.3, 0.5])
        y = np.sum(atoms + atoms**3 / 3, axis=1)
        sqrt_p = np.sqrt(probs)[:, None]
        want = np.linalg.lstsq(sqrt_p * atoms, sqrt_p[:, 0] * y, rcond=None)[0]
        got = optimum_weights(PointDistribution.discrete(atoms, probs), LabelOracle.cubic())
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_unavailable(self):
        oracle = LabelOracle.custom(lambda g, X: X[:, 0])
        with pytest.raises(Unavailable):
            optimum_weights(PointDistribution.discrete(PAIR), oracle)
        with pytest.raises(Unavailable):
            optimum_weights(PointDistribution.gaussian(np.eye(1)),
                            LabelOracle.attached(PAIR, PAIR_LABELS))


class TestAugmentation:
    def test_k0_hand_enumeration(self):
        # VS^1 picks x=1 w.p. 1/5 (estimate 1) and x=2 w.p. 4/5 (estimate 3)
        assert 0.2 * 1 + 0.8 * 3 == pytest.approx(13 / 5)
        got = exact_augmented_expectation(PAIR, [0.5, 0.5], PAIR_LABELS, 0)
        assert got[0] == pytest.approx(13 / 5, abs=1e-12)

    def test_k1_hand_enumeration(self):
        x, y = PAIR[:, 0], PAIR_LABELS
        vs = {0: 0.2, 1: 0.8}
        total = 0.0
        for i in (0, 1):
            for j, pj in vs.items():
                total += 0.5 * pj * (x[i] * y[i] + x[j] * y[j]) / (x[i] ** 2 + x[j] ** 2)
        assert total == pytest.approx(13 / 5, abs=1e-12)
        got = exact_augmented_expectation(PAIR, [0.5, 0.5], PAIR_LABELS, 1)
        assert got[0] == pytest.approx(total, abs=1e-12)

    @pytest.mark.parametrize("atoms,probs", [
        (np.array([[1.0], [-2.0], [3.0]]), [0.2, 0.3, 0.5]),
        (np.array([[1.0], [2.0], [-0.5], [4.0]]), [0.1, 0.2, 0.3, 0.4]),
        (np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), [0.5, 0.3, 0.2]),
        (np.array([[1.0, 2.0], [-1.0, 0.5], [0.3, -1.0], [2.0, 1.0]]), [0.1, 0.2, 0.3, 0.4]),
    ])
    def test_exact_unbiasedness(self, atoms, probs):
        labels = np.random.default_rng(len(atoms) + atoms.shape[1]).normal(size=len(atoms)) * 3
        w_star = optimum_weights(PointDistribution.discrete(atoms, probs),
                                 LabelOracle.attached(atoms, labels))
        for k in (0, 1, 2):
            np.testing.assert_allclose(exact_augmented_expectation(atoms, probs, labels, k),
                                       w_star, atol=1e-10)

    def test_plain_iid_is_biased_on_enumeration(self):
        atoms = np.array([[1.0], [-2.0], [3.0]])
        probs = [0.2, 0.3, 0.5]
        labels = np.array([1.0, 5.0, -2.0])
        w_star = optimum_weights(PointDistribution.discrete(atoms, probs),
                                 LabelOracle.attached(atoms, labels))
        assert abs(exact_iid_expectation(atoms, probs, labels, 2)[0] - w_star[0]) > 1e-3

    def test_query_accounting(self):
        dist = PointDistribution.gaussian(np.eye(3))
        oracle = LabelOracle.cubic()
        g = RngState(0).generator()
        X = dist.sample(4, g)
        sample = LabeledSample(X, [0.0] * 4)
        report = augmented_least_squares(sample, dist, oracle, gaussian_sampler(dist), g)
        assert report.query_count == 3
        assert oracle.query_count == 3
        assert report.sample_size == 7
        assert report.provenance == "augmented"
        assert report.error_sq == pytest.approx(estimation_error(report.w, np.full(3, 2.0)))

    def test_empty_iid_block(self):
        dist = PointDistribution.discrete(PAIR)
        oracle = LabelOracle.attached(PAIR, PAIR_LABELS)
        sampler = rejection_sampler(dist, CovarianceEstimate.exact(dist), RejectionConfig.default(1, 1.6))
        ws = [augmented_least_squares(LabeledSample.empty(1), dist, oracle, sampler, RngState(1, i)).w[0]
              for i in range(4000)]
        assert set(np.round(ws, 12)) <= {1.0, 3.0}
        assert np.mean(np.isclose(ws, 3.0)) == pytest.approx(0.8, abs=0.03)

    def test_monte_carlo_small_discrete(self):
        atoms = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        probs = [0.5, 0.3, 0.2]
        labels = np.array([1.0, -2.0, 4.0])
        dist = PointDistribution.discrete(atoms, probs)
        oracle = LabelOracle.attached(atoms, labels)
        w_star = optimum_weights(dist, oracle)
        sampler = rejection_sampler(dist, CovarianceEstimate.exact(dist),
                                    RejectionConfig.default(2, conditioning_number(dist)))
        root = RngState(7)
        ws = []
        for i in range(3000):
            g = root.child(i).generator()
            X = dist.sample(1, g)
            s = LabeledSample(X, query_labels(oracle, X))
            ws.append(augmented_least_squares(s, dist, oracle, sampler, g).w)
        ws = np.array(ws)
        se = ws.std(axis=0, ddof=1) / np.sqrt(len(ws))
        assert np.all(np.abs(ws.mean(axis=0) - w_star) <= 4 * se)

    def test_label_stream_separate(self):
        dist = PointDistribution.gaussian(np.eye(2))
        oracle = LabelOracle.cubic()
        s = LabeledSample.empty(2)
        a = augmented_least_squares(s, dist, oracle, gaussian_sampler(dist), RngState(3), label_rng=RngState(4))
        b = augmented_least_squares(s, dist, oracle, gaussian_sampler(dist), RngState(3), label_rng=RngState(5))
        c = augmented_least_squares(s, dist, oracle, gaussian_sampler(dist), RngState(3), label_rng=RngState(4))
        np.testing.assert_array_equal(a.w, c.w)
        assert not np.allclose(a.w, b.w)

    def test_iid_report(self):
        dist = PointDistribution.gaussian(np.eye(2))
        oracle = LabelOracle.linear([1.0, 2.0])
        r = iid_least_squares(dist, oracle, 6, RngState(0))
        np.testing.assert_allclose(r.w, [1.0, 2.0], atol=1e-12)
        assert (r.sample_size, r.query_count, r.provenance) == (6, 6, "iid")
        assert r.error_sq == pytest.approx(0.0, abs=1e-20)

    def test_error_absent_without_optimum(self):
        dist = PointDistribution.gaussian(np.eye(1))
        oracle = LabelOracle.custom(lambda g, X: np.sin(X[:, 0]))
        r = iid_least_squares(dist, oracle, 3, RngState(0))
        assert r.error_sq is None
        assert r.csv_row(3, 0, 1)[5] == ""


class TestCubicModelBias:
    def test_augmented_unbiased(self):
        cfg = ExperimentConfig(d=5, k_values=[5], T_max=100_000, runs=1, seed=1)
        W = replica_estimators(cfg, 0, "iid_plus_volume", 5)
        se = W.std(axis=0, ddof=1) / np.sqrt(len(W))
        assert np.all(np.abs(W.mean(axis=0) - 2.0) <= 4 * se)

    def test_iid_biased(self):
        # k = d makes the plain estimator heavy-tailed; k = 8 has a usable standard error
        cfg = ExperimentConfig(d=5, k_values=[8], T_max=100_000, runs=1, seed=1)
        W = replica_estimators(cfg, 0, "iid", 8)
        se = W.std(axis=0, ddof=1) / np.sqrt(len(W))
        assert np.all(np.abs(W.mean(axis=0) - 2.0) > 10 * se)

    def test_scalar_path_matches_model(self):
        dist = PointDistribution.gaussian(np.eye(5))
        oracle = LabelOracle.cubic(1.0)
        root = RngState(2)
        ws = []
        for i in range(3000):
            g = root.child(i).generator()
            X = dist.sample(5, g)
            s = LabeledSample(X, query_labels(oracle, X))
            ws.append(augmented_least_squares(s, dist, oracle, gaussian_sampler(dist), g).w)
        ws = np.array(ws)
        se = ws.std(axis=0, ddof=1) / np.sqrt(len(ws))
        assert np.all(np.abs(ws.mean(axis=0) - 2.0) <= 4 * se)
        assert oracle.query_count == 3000 * 10


class TestAveraging:
    def test_singleton_and_midpoint(self):
        np.testing.assert_array_equal(average_estimators([np.array([1.0, 2.0])]), [1, 2])
        np.testing.assert_array_equal(average_estimators([[0.0, 0.0], [2.0, 4.0]]), [1, 2])

    def test_reports(self):
        reps = [EstimatorReport(np.array([1.0, 3.0]), 2, 2, "iid"),
                EstimatorReport(np.array([3.0, 5.0]), 2, 2, "iid")]
        np.testing.assert_array_equal(average_estimators(reps), [2, 4])

    def test_permutation_invariant(self):
        ws = list(np.random.default_rng(0).standard_normal((1000, 3)) * 1e6)
        a = average_estimators(ws)
        random.Random(1).shuffle(ws)
        np.testing.assert_array_equal(average_estimators(ws), a)

    def test_errors(self):
        with pytest.raises(ValueError):
            average_estimators([])
        with pytest.raises(DimensionMismatch):
            average_estimators([[1.0], [1.0, 2.0]])


class TestEstimationError:
    def test_values(self):
        assert estimation_error([1, 2], [1, 2]) == 0.0
        assert estimation_error([0, 0], [3, 4]) == 25.0

    def test_homogeneity(self):
        r = np.random.default_rng(0)
        a, b = r.standard_normal(4), r.standard_normal(4)
        assert estimation_error(3 * a, 3 * b) == pytest.approx(9 * estimation_error(a, b))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            estimation_error([1, 2], [1, 2, 3])


class TestLeaveOneOut:
    def test_pair_by_hand(self):
        # LHS 13/5; RHS (4*3 + 1*1)/5
        assert (4 * 3 + 1 * 1) / 5 == pytest.approx(13 / 5)
        assert leave_one_out_identity_residual(PAIR, PAIR_LABELS) == pytest.approx(0, abs=1e-14)
        np.testing.assert_allclose(leave_one_out_weights(PAIR), [4 / 5, 1 / 5])

    def test_consistent_system(self):
        r = np.random.default_rng(2)
        X = r.standard_normal((7, 3))
        assert leave_one_out_identity_residual(X, X @ r.standard_normal(3)) <= 1e-10

    @pytest.mark.parametrize("k,d", [(3, 1), (6, 2), (8, 3)])
    def test_random_full_rank(self, k, d):
        r = np.random.default_rng(k)
        for _ in range(50):
            X = r.standard_normal((k, d))
            y = r.standard_normal(k)
            lhs = np.linalg.lstsq(X, y, rcond=None)[0]
            assert leave_one_out_identity_residual(X, y) <= 1e-8 * np.linalg.norm(lhs)
            assert leave_one_out_weights(X).sum() == pytest.approx(1.0, abs=1e-10)

    def test_weights_match_determinants(self):
        X = np.random.default_rng(3).standard_normal((5, 2))
        full = np.linalg.det(X.T @ X)
        want = [np.linalg.det(np.delete(X, i, 0).T @ np.delete(X, i, 0)) / (3 * full) for i in range(5)]
        np.testing.assert_allclose(leave_one_out_weights(X), want, atol=1e-12)

    def test_rank_drop_gets_zero_weight(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        w = leave_one_out_weights(X)
        assert w[2] == pytest.approx(0.0, abs=1e-15)
        assert leave_one_out_identity_residual(X, [1.0, 2.0, 5.0]) <= 1e-12

    def test_bad_shape(self):
        with pytest.raises(BadShape):
            leave_one_out_weights(np.eye(2))
        with pytest.raises(BadShape):
            leave_one_out_identity_residual(np.eye(2), [1.0, 2.0])


def test_csv_row_layout():
    r = EstimatorReport(np.array([1.5, -2.0]), 7, 2, "augmented", 0.25)
    assert r.csv_row(5, 3, 42) == ["augmented", 5, 3, 42, 2, "0.25", "1.5", "-2.0"]


def test_exact_iid_matches_brute_force():
    atoms = np.array([[1.0], [2.0]])
    want = 0.0
    for tup in itertools.product(range(2), repeat=2):
        x = atoms[list(tup), 0]
        y = PAIR_LABELS[list(tup)]
        want += 0.25 * (x @ y) / (x @ x)
    assert exact_iid_expectation(atoms, [0.5, 0.5], PAIR_LABELS, 2)[0] == pytest.approx(want)
