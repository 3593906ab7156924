import io

import numpy as np
import pytest

from qnadmm.metric import (
    BfgsMetric,
    CurvatureError,
    DampedBMetric,
    LbfgsMetric,
    bfgs_update_B,
    bfgs_update_H,
    damped_update,
    dump_snapshot,
    ensure_factor,
    lbfgs_apply,
    lbfgs_matrix,
    lbfgs_push,
    make_pair,
    verify_order,
)

from conftest import random_spd


def dense_bfgs_oracle(H0, pairs):
    """Independent dense recursion in product form (not the expanded update)."""
    H = H0.copy()
    for s, l in pairs:
        rho = 1.0 / (s @ l)
        V = np.eye(len(s)) - rho * np.outer(s, l)
        H = V @ H @ V.T + rho * np.outer(s, s)
    return H


def exact_pairs(rng, M, count):
    pairs = []
    for _ in range(count):
        s = rng.standard_normal(M.shape[0])
        pairs.append((s, M @ s))
    return pairs


class TestBfgsUpdateH:
    def test_one_dimensional_recovers_inverse(self):
        metric = BfgsMetric(H=np.array([[0.5]]), xi0=2.0)
        updated = bfgs_update_H(metric, make_pair(np.array([1.0]), np.array([2.0])))
        np.testing.assert_allclose(updated.H, [[0.5]])

    def test_secant_identity(self, rng):
        M = random_spd(rng, 8)
        metric = BfgsMetric.initial(8, xi0=1.01 * np.linalg.eigvalsh(M).max())
        for _ in range(5):
            s = rng.standard_normal(8)
            l = M @ s
            metric = bfgs_update_H(metric, make_pair(s, l))
            np.testing.assert_allclose(metric.H @ l, s, atol=1e-9 * np.linalg.norm(s))

    def test_symmetry_preserved(self, rng):
        M = random_spd(rng, 6)
        metric = BfgsMetric.initial(6, xi0=2.0 * np.linalg.eigvalsh(M).max())
        for s, l in exact_pairs(rng, M, 10):
            metric = bfgs_update_H(metric, make_pair(s, l))
        np.testing.assert_array_equal(metric.H, metric.H.T)

    def test_order_preservation(self, rng):
        # Seeding below the operator inverse keeps every iterate below it.
        for trial in range(5):
            M = random_spd(rng, 10)
            xi = 1.01 * np.linalg.eigvalsh(M).max()
            metric = BfgsMetric.initial(10, xi0=xi)
            Minv = np.linalg.inv(M)
            for s, l in exact_pairs(rng, M, 20):
                metric = bfgs_update_H(metric, make_pair(s, l))
                assert np.linalg.eigvalsh(Minv - metric.H).min() >= -1e-8

    def test_curvature_breakdown(self):
        metric = BfgsMetric.initial(2, xi0=1.0)
        with pytest.raises(CurvatureError):
            bfgs_update_H(metric, make_pair(np.array([1.0, 0.0]), np.array([0.0, 1.0])))

    def test_positive_definite_application(self, rng):
        M = random_spd(rng, 7)
        metric = BfgsMetric.initial(7, xi0=1.01 * np.linalg.eigvalsh(M).max())
        for s, l in exact_pairs(rng, M, 12):
            metric = bfgs_update_H(metric, make_pair(s, l))
        for _ in range(10):
            v = rng.standard_normal(7)
            assert v @ (metric.H @ v) > 0


class TestBfgsUpdateB:
    def test_one_dimensional(self):
        B = bfgs_update_B(np.array([[3.0]]), make_pair(np.array([1.0]), np.array([2.0])))
        np.testing.assert_allclose(B, [[2.0]])

    def test_secant_identity(self, rng):
        M = random_spd(rng, 8)
        B = 1.5 * np.linalg.eigvalsh(M).max() * np.eye(8)
        for s, l in exact_pairs(rng, M, 5):
            B = bfgs_update_B(B, make_pair(s, l))
            np.testing.assert_allclose(B @ s, l, atol=1e-9 * np.linalg.norm(l))

    def test_not_positive_definite_rejected(self):
        B = np.diag([1.0, -1.0])
        with pytest.raises(ValueError, match="not positive definite"):
            bfgs_update_B(B, make_pair(np.array([0.0, 1.0]), np.array([0.0, 1.0])))

    def test_dual_of_inverse_update(self, rng):
        # B and H updates stay mutual inverses when seeded that way.
        M = random_spd(rng, 6)
        B = 1.3 * np.linalg.eigvalsh(M).max() * np.eye(6)
        metric = BfgsMetric(H=np.linalg.inv(B), xi0=1.0)
        for s, l in exact_pairs(rng, M, 8):
            pair = make_pair(s, l)
            B = bfgs_update_B(B, pair)
            metric = bfgs_update_H(metric, pair)
            np.testing.assert_allclose(metric.H @ B, np.eye(6), atol=1e-8)


class TestLbfgs:
    def test_ring_buffer_eviction(self, rng):
        M = random_spd(rng, 5)
        metric = LbfgsMetric.initial(gamma0=0.1, capacity=3)
        pairs = exact_pairs(rng, M, 4)
        for s, l in pairs:
            metric = lbfgs_push(metric, make_pair(s, l))
        assert len(metric.history) == 3
        np.testing.assert_array_equal(metric.history[-1][0], pairs[-1][0])
        np.testing.assert_array_equal(metric.history[0][0], pairs[1][0])

    def test_empty_history_scales(self, rng):
        metric = LbfgsMetric.initial(gamma0=0.25, capacity=5)
        v = rng.standard_normal(6)
        np.testing.assert_allclose(lbfgs_apply(metric, v), 0.25 * v)

    def test_single_pair_matches_dense(self, rng):
        M = random_spd(rng, 2)
        gamma0 = 1.0 / (1.01 * np.linalg.eigvalsh(M).max())
        metric = LbfgsMetric.initial(gamma0=gamma0, capacity=4)
        (s, l), = exact_pairs(rng, M, 1)
        metric = lbfgs_push(metric, make_pair(s, l))
        H = dense_bfgs_oracle(gamma0 * np.eye(2), [(s, l)])
        v = rng.standard_normal(2)
        np.testing.assert_allclose(lbfgs_apply(metric, v), H @ v, rtol=1e-10, atol=1e-12)

    def test_two_loop_matches_dense_materialization(self, rng):
        M = random_spd(rng, 20)
        gamma0 = 1.0 / (1.01 * np.linalg.eigvalsh(M).max())
        metric = LbfgsMetric.initial(gamma0=gamma0, capacity=10)
        pairs = exact_pairs(rng, M, 14)
        for s, l in pairs:
            metric = lbfgs_push(metric, make_pair(s, l))
        H = dense_bfgs_oracle(gamma0 * np.eye(20), pairs[-10:])
        for _ in range(5):
            v = rng.standard_normal(20)
            expected = H @ v
            np.testing.assert_allclose(
                lbfgs_apply(metric, v), expected, rtol=1e-10, atol=1e-10 * np.linalg.norm(expected)
            )

    def test_secant_on_newest_pair(self, rng):
        M = random_spd(rng, 9)
        metric = LbfgsMetric.initial(gamma0=1.0 / (2 * np.linalg.eigvalsh(M).max()), capacity=6)
        for s, l in exact_pairs(rng, M, 8):
            metric = lbfgs_push(metric, make_pair(s, l))
            np.testing.assert_allclose(lbfgs_apply(metric, l), s, atol=1e-9 * np.linalg.norm(s))

    def test_lbfgs_matrix_consistent_with_apply(self, rng):
        M = random_spd(rng, 6)
        metric = LbfgsMetric.initial(gamma0=0.2, capacity=4)
        for s, l in exact_pairs(rng, M, 4):
            metric = lbfgs_push(metric, make_pair(s, l))
        H = lbfgs_matrix(metric, 6)
        v = rng.standard_normal(6)
        np.testing.assert_allclose(H @ v, lbfgs_apply(metric, v), atol=1e-10)


class TestDampedUpdate:
    def test_zeta_zero_freezes_after_first_step(self, rng):
        M = random_spd(rng, 4)
        lam = np.linalg.eigvalsh(M).max()
        metric = DampedBMetric.initial(4, scale=1.5 * lam, delta=0.1, zeta=0.0)
        m_op = lambda v: M @ v
        metric = damped_update(metric, rng.standard_normal(4), m_op)  # c_0 = 1 applies fully
        frozen = metric.B.copy()
        for _ in range(3):
            metric = damped_update(metric, rng.standard_normal(4), m_op)
            np.testing.assert_array_equal(metric.B, frozen)

    def test_floor_preserved(self, rng):
        M = random_spd(rng, 6)
        delta = 0.1
        scale = 1.01 * (np.linalg.eigvalsh(M).max() + delta)
        metric = DampedBMetric.initial(6, scale=scale, delta=delta, zeta=0.5)
        m_op = lambda v: M @ v
        floor = M + delta * np.eye(6)
        for _ in range(30):
            metric = damped_update(metric, rng.standard_normal(6), m_op)
            assert np.linalg.eigvalsh(metric.B - floor).min() >= -1e-8

    def test_growth_bounded_by_damping(self, rng):
        # T_next <= (1 + gamma_k) T_k with gamma_k = c_k * ||step|| / delta.
        M = random_spd(rng, 6)
        delta = 0.2
        zeta = 0.5
        scale = 1.01 * (np.linalg.eigvalsh(M).max() + delta)
        metric = DampedBMetric.initial(6, scale=scale, delta=delta, zeta=zeta)
        m_op = lambda v: M @ v
        for _ in range(20):
            k = metric.k
            c_k = zeta**k if k > 0 else 1.0
            T_k = metric.B - M
            metric = damped_update(metric, rng.standard_normal(6), m_op)
            T_next = metric.B - M
            undamped_step = np.linalg.norm(T_next - T_k, 2) / c_k
            gamma_k = c_k * undamped_step / delta
            bound = (1.0 + gamma_k) * T_k - T_next
            assert np.linalg.eigvalsh(0.5 * (bound + bound.T)).min() >= -1e-8

    def test_counter_and_cache_invalidation(self, rng):
        M = random_spd(rng, 3)
        metric = DampedBMetric.initial(3, scale=3 * np.linalg.eigvalsh(M).max(), delta=0.1, zeta=0.9)
        metric = ensure_factor(metric)
        assert metric.factor is not None
        metric = damped_update(metric, rng.standard_normal(3), lambda v: M @ v)
        assert metric.k == 1 and metric.factor is None

    def test_underflowed_coefficient_reuses_factor(self, rng):
        import dataclasses

        M = random_spd(rng, 3)
        metric = DampedBMetric.initial(3, scale=3 * np.linalg.eigvalsh(M).max(), delta=0.1, zeta=0.1)
        metric = dataclasses.replace(ensure_factor(metric), k=20)  # c_k = 1e-20 < 1e-16
        before_B, before_factor = metric.B, metric.factor
        metric = damped_update(metric, rng.standard_normal(3), lambda v: M @ v)
        assert metric.B is before_B and metric.factor is before_factor
        assert metric.k == 21


class TestVerifyOrder:
    def test_exact_inverse_passes(self, rng):
        M = random_spd(rng, 5)
        ok, min_eig = verify_order(np.linalg.inv(M), M, tol=1e-8)
        assert ok and abs(min_eig) <= 1e-8

    def test_doubled_inverse_fails(self, rng):
        M = random_spd(rng, 5)
        ok, min_eig = verify_order(2.0 * np.linalg.inv(M), M, tol=1e-8)
        assert not ok and min_eig < 0

    def test_after_updates_passes(self, rng):
        M = random_spd(rng, 12)
        metric = BfgsMetric.initial(12, xi0=1.01 * np.linalg.eigvalsh(M).max())
        for s, l in exact_pairs(rng, M, 20):
            metric = bfgs_update_H(metric, make_pair(s, l))
        ok, _ = verify_order(metric.H, M, tol=1e-8)
        assert ok

    def test_cap(self):
        n = 600
        with pytest.raises(ValueError, match="unavailable at this scale"):
            verify_order(np.eye(n), np.eye(n), tol=1e-8)


class TestSnapshot:
    def test_dump_shapes(self, rng):
        M = random_spd(rng, 3)
        bfgs = BfgsMetric.initial(3, xi0=2.0)
        buf = io.StringIO()
        dump_snapshot(bfgs, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("# bfgs") and lines[1] == "# H 3 3"
        assert len(lines) == 5

        lb = LbfgsMetric.initial(gamma0=0.5, capacity=2)
        for s, l in exact_pairs(rng, M, 2):
            lb = lbfgs_push(lb, make_pair(s, l))
        buf = io.StringIO()
        dump_snapshot(lb, buf)
        assert buf.getvalue().count("# s") == 2 and buf.getvalue().count("# l") == 3  # header also matches '# l'

        damped = DampedBMetric.initial(3, scale=5.0, delta=0.1, zeta=0.5)
        buf = io.StringIO()
        dump_snapshot(damped, buf)
        assert "# damped delta" in buf.getvalue()
