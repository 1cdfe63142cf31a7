import numpy as np
import pytest

from rankloss_kit.errors import NoPositives, NotSquare
from rankloss_kit.gradcheck import relative_error
from rankloss_kit.numerics import sigmoid, similarity_matrix
from rankloss_kit.retrieval_eval import recall_at_k_bruteforce
from rankloss_kit.rsloss import (
    DEFAULT_KS,
    LossConfig,
    chain_to_embeddings,
    make_kset,
    rs_loss,
    smooth_recall_at_k,
)

from conftest import balanced_labels, separated_row, unit_rows

SHARP = LossConfig(tau1=1.0, tau2=0.01, ks=(1,), clipped=False)
SMOOTH = LossConfig(tau1=1.0, tau2=0.1, ks=(1, 2, 4), clipped=True)


def sig(u, tau=1.0):
    return 1.0 / (1.0 + np.exp(-u / tau))


def fd_grad_sims(S, labels, cfg, h=1e-5):
    grad = np.zeros_like(S)
    for i in range(S.shape[0]):
        for j in range(S.shape[1]):
            up, down = S.copy(), S.copy()
            up[i, j] += h
            down[i, j] -= h
            grad[i, j] = (rs_loss(up, labels, cfg).loss - rs_loss(down, labels, cfg).loss) / (2 * h)
    return grad


class TestKSet:
    def test_defaults(self):
        assert LossConfig().ks == DEFAULT_KS == (1, 2, 4, 8, 16)
        assert (LossConfig().tau1, LossConfig().tau2) == (1.0, 0.01)

    @pytest.mark.parametrize("ks", [(), (0, 1), (2, 1), (1, 1)])
    def test_invalid(self, ks):
        with pytest.raises(ValueError):
            make_kset(ks)


class TestSmoothRecall:
    def test_tie_hand_value(self):
        # self, positive, negative; s_pos == s_neg: u = 0 - s2(0) = -0.5
        value = smooth_recall_at_k([1.0, 0.5, 0.5], [0, 1, 0], 0, 1, SHARP)
        assert value == pytest.approx(0.377540668798145435, abs=1e-14)

    def test_single_top_positive_at_k1_sits_on_boundary(self):
        # rank 1 with k = 1 puts the outer sigmoid at its midpoint: sigma(0 - tiny) ~= 0.5
        row = [1.0, 0.9, 0.5, 0.4, 0.3]
        value = smooth_recall_at_k(row, [0, 1, 0, 0, 0], 0, 1, SHARP)
        expected = sig(0.0 - sum(sig(s - 0.9, 0.01) for s in row[2:]))
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.5, abs=1e-3)

    def test_single_top_positive_away_from_boundary(self):
        row = [1.0, 0.9] + [0.5 - 0.01 * i for i in range(10)]
        mask = [0, 1] + [0] * 10
        cfg = LossConfig(tau1=1.0, tau2=0.01, ks=(8,), clipped=False)
        value = smooth_recall_at_k(row, mask, 0, 8, cfg)
        assert recall_at_k_bruteforce(row, mask, 0, 8) == 1.0
        assert abs(value - 1.0) < 1e-3

    def test_clipping_lets_many_positives_reach_full_recall(self):
        # five positives at the top with wide margins, k = 1
        row = [2.0, 1.0, 0.8, 0.6, 0.4, 0.2, -0.5, -0.7]
        mask = [0, 1, 1, 1, 1, 1, 0, 0]
        numerator = sum(sig(-float(i)) for i in range(5))
        clipped = smooth_recall_at_k(row, mask, 0, 1, LossConfig(ks=(1,), clipped=True))
        unclipped = smooth_recall_at_k(row, mask, 0, 1, LossConfig(ks=(1,), clipped=False))
        assert clipped == pytest.approx(min(numerator, 1.0), abs=1e-6)
        assert unclipped == pytest.approx(numerator / 5, abs=1e-6)
        # with k well past the last positive the value approaches 1
        high = smooth_recall_at_k(row, mask, 0, 11, LossConfig(ks=(11,), clipped=True))
        assert high == pytest.approx(sum(sig(11.0 - r) for r in range(1, 6)) / 5, abs=1e-6)
        assert high > 0.999

    def test_clipped_never_exceeds_one(self, rng):
        for _ in range(200):
            row = rng.uniform(-1, 1, 12)
            mask = rng.random(12) < 0.5
            mask[1] = True
            k = int(rng.integers(1, 8))
            assert 0.0 <= smooth_recall_at_k(row, mask, 0, k, LossConfig(ks=(k,))) <= 1.0

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            smooth_recall_at_k([1.0, 0.2], [1, 0], 0, 1)

    def test_fidelity_on_separated_rows(self, rng):
        cfg = LossConfig(ks=(1,), clipped=False)
        for k in (1, 2, 4, 8, 16):
            for _ in range(100):
                row, mask, _ = separated_row(rng, k)
                exact = recall_at_k_bruteforce(row, mask, 0, k)
                assert abs(smooth_recall_at_k(row, mask, 0, k, cfg) - exact) < 0.01

    def test_lower_temperatures_approach_exact_recall(self, rng):
        ladder = [(1.0, 0.01), (0.5, 0.005), (0.25, 0.0025), (0.1, 0.001)]
        for k in (1, 4, 8):
            for _ in range(50):
                # tie-free: no positive exactly at rank k, gaps well above every tau2
                row, mask, ranks = separated_row(rng, k, gap=0.05, margin=0)
                exact = recall_at_k_bruteforce(row, mask, 0, k)
                devs = []
                for tau1, tau2 in ladder:
                    cfg = LossConfig(tau1=tau1, tau2=tau2, ks=(k,), clipped=False)
                    # per-positive deviation, summed (bounds |smooth - exact| * |P|)
                    dev = 0.0
                    for x in np.nonzero(mask)[0]:
                        single = np.zeros_like(mask)
                        single[x] = True
                        dev += abs(smooth_recall_at_k(row, single, 0, k, cfg)
                                   - recall_at_k_bruteforce(row, single, 0, k))
                    devs.append(dev)
                assert all(b <= a + 1e-15 for a, b in zip(devs, devs[1:]))
                final = smooth_recall_at_k(row, mask, 0, k, LossConfig(0.1, 0.001, (k,), False))
                assert abs(final - exact) < 1e-3


class TestRSLoss:
    def test_coincident_positives_orthogonal_classes(self):
        S = np.array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]], dtype=float)
        labels = [0, 0, 1, 1]
        # at k = 1 the single positive sits on the outer sigmoid's midpoint
        k1 = rs_loss(S, labels, LossConfig(ks=(1,)))
        expected = 1.0 - sig(-2 * sig(-1.0, 0.01))
        np.testing.assert_allclose(k1.per_query_loss, expected, atol=1e-15)
        assert k1.loss == pytest.approx(0.5, abs=1e-12)
        assert rs_loss(S, labels, LossConfig(ks=(8,))).loss < 1e-3

    def test_per_query_hand_value(self):
        # query 0: positive 0.5 tied with one negative, a second negative 0.4 below
        S = np.array([[1.0, 0.5, 0.5, 0.1], [0.5, 1.0, 0.2, 0.3], [0.5, 0.2, 1.0, 0.9], [0.1, 0.3, 0.9, 1.0]])
        res = rs_loss(S, [0, 0, 1, 1], SHARP)
        assert res.per_query_loss[0] == pytest.approx(1 - 0.377540668798145435, abs=1e-4)
        assert res.per_query_loss[0] == pytest.approx(1 - sig(-0.5 - sig(-0.4, 0.01)), abs=1e-14)

    def test_loss_is_mean_and_bounded(self, rng):
        for clipped in (True, False):
            E = unit_rows(rng, 24, 5)
            res = rs_loss(similarity_matrix(E), balanced_labels(6, 4), LossConfig(clipped=clipped))
            assert res.loss == pytest.approx(res.per_query_loss.mean(), abs=1e-12)
            assert np.all(res.per_query_loss >= 0)
            assert 0.0 <= res.loss <= 1.0
            assert np.all(np.diag(res.grad_sims) == 0.0)

    @pytest.mark.parametrize("clipped", [True, False])
    def test_gradient_finite_differences(self, rng, clipped):
        E = unit_rows(rng, 12, 4)
        labels = balanced_labels(3, 4)
        cfg = LossConfig(tau1=1.0, tau2=0.1, ks=(1, 2, 4), clipped=clipped)
        S = similarity_matrix(E)
        analytic = rs_loss(S, labels, cfg).grad_sims
        assert relative_error(analytic, fd_grad_sims(S, labels, cfg)) < 1e-4

    def test_gradient_unequal_class_sizes(self, rng):
        E = unit_rows(rng, 10, 4)
        labels = np.array([0, 0, 0, 0, 0, 1, 1, 2, 2, 2])
        S = similarity_matrix(E)
        assert relative_error(rs_loss(S, labels, SMOOTH).grad_sims, fd_grad_sims(S, labels, SMOOTH)) < 1e-4

    def test_multi_k_is_mean_of_single_k(self, rng):
        E = unit_rows(rng, 16, 4)
        labels = balanced_labels(4, 4)
        S = similarity_matrix(E)
        ks = (1, 2, 4, 8)
        full = rs_loss(S, labels, LossConfig(tau2=0.05, ks=ks))
        singles = [rs_loss(S, labels, LossConfig(tau2=0.05, ks=(k,))) for k in ks]
        np.testing.assert_allclose(full.grad_sims, np.mean([r.grad_sims for r in singles], axis=0), atol=1e-12)
        assert full.loss == pytest.approx(np.mean([r.loss for r in singles]), abs=1e-12)

    def test_row_translation_invariance(self, rng):
        E = unit_rows(rng, 16, 4)
        labels = balanced_labels(4, 4)
        S = similarity_matrix(E)
        base = rs_loss(S, labels).per_query_loss
        for q in range(16):
            shifted = S.copy()
            shifted[q] += rng.uniform(-3, 3)
            assert abs(rs_loss(shifted, labels).per_query_loss[q] - base[q]) < 1e-12

    def test_chunked_evaluation_matches_single_block(self, rng, monkeypatch):
        import rankloss_kit.rsloss as mod
        E = unit_rows(rng, 40, 6)
        labels = np.repeat(np.arange(10), 4)
        full = rs_loss(similarity_matrix(E), labels)
        monkeypatch.setattr(mod, "_CHUNK_ELEMENTS", 50)
        small = rs_loss(similarity_matrix(E), labels)
        np.testing.assert_allclose(small.grad_sims, full.grad_sims, rtol=0, atol=1e-15)
        np.testing.assert_allclose(small.per_query_loss, full.per_query_loss, rtol=0, atol=1e-15)

    def test_errors(self):
        with pytest.raises(NotSquare):
            rs_loss(np.zeros((2, 3)), [0, 0])
        with pytest.raises(NoPositives) as err:
            rs_loss(np.eye(3), [0, 0, 1])
        assert err.value.query == 2


class TestChain:
    def test_zero(self, rng):
        E = unit_rows(rng, 5, 3)
        np.testing.assert_array_equal(chain_to_embeddings(np.zeros((5, 5)), E), np.zeros((5, 3)))

    def test_single_entry(self, rng):
        E = unit_rows(rng, 3, 4)
        G = np.zeros((3, 3))
        G[0, 1] = 1.0
        out = chain_to_embeddings(G, E)
        np.testing.assert_array_equal(out[0], E[1])
        np.testing.assert_array_equal(out[1], E[0])
        np.testing.assert_array_equal(out[2], 0.0)

    def test_linear(self, rng):
        E = unit_rows(rng, 6, 3)
        A, B = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
        np.testing.assert_allclose(chain_to_embeddings(2 * A - 3 * B, E),
                                   2 * chain_to_embeddings(A, E) - 3 * chain_to_embeddings(B, E), atol=1e-12)

    def test_end_to_end_finite_differences(self, rng):
        E = unit_rows(rng, 12, 4)
        labels = balanced_labels(3, 4)
        analytic = chain_to_embeddings(rs_loss(similarity_matrix(E), labels, SMOOTH).grad_sims, E)
        numeric = np.zeros_like(E)
        h = 1e-5
        for idx in np.ndindex(E.shape):
            up, down = E.copy(), E.copy()
            up[idx] += h
            down[idx] -= h
            numeric[idx] = (rs_loss(similarity_matrix(up), labels, SMOOTH).loss
                            - rs_loss(similarity_matrix(down), labels, SMOOTH).loss) / (2 * h)
        assert relative_error(analytic, numeric) < 1e-4
