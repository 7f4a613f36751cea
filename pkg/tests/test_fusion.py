import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhmm.errors import DomainError, TrainingDivergedError
from fhmm.fusion import (
    FusionHyper,
    FusionInput,
    FusionNetwork,
    cost_and_gradients,
    decode,
    encode,
    encode_batch,
    feature_importance,
    format_importance_report,
    forward,
    forward_batch,
    fusion_from_doc,
    fusion_to_doc,
    init_network,
    input_block_weights,
    one_hot_targets,
    train_fusion,
    train_fusion_arrays,
)

import oracles


class TestEncode:
    def test_definitional_layout(self):
        x = encode(FusionInput([1, 0], 0.5), k=2, n_obs=3)
        np.testing.assert_array_equal(x, [0, 1, 0, 1, 0, 0, 0.5])

    def test_zero_preds_zero_count(self):
        x = encode(FusionInput([0, 0, 0], 0.0), k=3, n_obs=2)
        np.testing.assert_array_equal(x, [1, 0, 1, 0, 1, 0, 0.0])

    def test_out_of_range_symbol(self):
        with pytest.raises(DomainError):
            encode(FusionInput([3], 0.0), k=1, n_obs=3)
        with pytest.raises(DomainError):
            encode(FusionInput([0], 1.5), k=1, n_obs=3)

    @given(
        k=st.integers(1, 5),
        m=st.integers(2, 6),
        data=st.data(),
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_lossless(self, k, m, data):
        preds = data.draw(
            st.lists(st.integers(0, m - 1), min_size=k, max_size=k)
        )
        count = data.draw(st.floats(0, 1, allow_nan=False))
        x = encode(FusionInput(preds, count), k=k, n_obs=m)
        back = decode(x, k=k, n_obs=m)
        np.testing.assert_array_equal(back.hmm_preds, preds)
        assert back.count == pytest.approx(count)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 4, size=(7, 3))
        counts = rng.random(7)
        X = encode_batch(preds, counts, n_obs=4)
        for i in range(7):
            np.testing.assert_array_equal(
                X[i], encode(FusionInput(preds[i], counts[i]), 3, 4)
            )


class TestForward:
    def test_zero_network_predicts_zero(self):
        net = FusionNetwork(
            W=np.zeros((4, 3)), c=np.zeros(3), w=np.zeros((3, 2)),
            b=np.zeros(2), l2=0.0, lr=0.1,
        )
        scores, pred = forward(net, np.array([1.0, 0, 0, 0.5]))
        np.testing.assert_array_equal(scores, [0.0, 0.0])
        assert pred == 0

    def test_constructed_pass_through(self):
        # route block 0's one-hots straight to the matching outputs
        k, m, h = 2, 3, 3
        W = np.zeros((k * m + 1, h))
        W[:m, :m] = np.eye(m)
        net = FusionNetwork(
            W=W, c=np.zeros(h), w=np.eye(h), b=np.zeros(m), l2=0.0, lr=0.1,
        )
        for sym in range(m):
            x = encode(FusionInput([sym, (sym + 1) % m], 0.3), k, m)
            _, pred = forward(net, x)
            assert pred == sym

    def test_matches_straight_line_reimplementation(self):
        rng = np.random.default_rng(8)
        net = init_network(9, 4, FusionHyper(hidden_width=5, seed=3))
        x = rng.random(9)
        scores, _ = forward(net, x)
        # naive loop oracle
        hidden = np.zeros(5)
        for j in range(5):
            acc = net.c[j]
            for i in range(9):
                acc += net.W[i, j] * x[i]
            hidden[j] = max(0.0, acc)
        expected = np.zeros(4)
        for o in range(4):
            acc = net.b[o]
            for j in range(5):
                acc += net.w[j, o] * hidden[j]
            expected[o] = acc
        assert np.abs(scores - expected).max() < 1e-12

    def test_dimension_mismatch(self):
        net = init_network(5, 2, FusionHyper(seed=0))
        with pytest.raises(DomainError):
            forward(net, np.zeros(4))


def _random_case(seed, loss="quadratic"):
    rng = np.random.default_rng(seed)
    k, m, h = 2, 3, 4
    hyper = FusionHyper(hidden_width=h, seed=seed, l2=1e-3, loss=loss)
    net = init_network(k * m + 1, m, hyper)
    X = rng.random((3, k * m + 1))
    Y = one_hot_targets(rng.integers(0, m, size=3), m)
    return net, X, Y


class TestGradients:
    @pytest.mark.parametrize("loss", ["quadratic", "cross_entropy"])
    def test_backprop_matches_finite_differences(self, loss):
        eps = 1e-5
        for case in range(20):
            net, X, Y = _random_case(1000 + case, loss)
            _, grads = cost_and_gradients(net, X, Y)
            max_rel = 0.0
            for name in ("W", "c", "w", "b"):
                tensor = getattr(net, name)
                flat = tensor.ravel()
                probe = np.random.default_rng(case).choice(
                    flat.size, size=min(6, flat.size), replace=False
                )
                for idx in probe:
                    def cost_at(v, idx=idx, flat=flat):
                        old = flat[idx]
                        flat[idx] = v
                        c, _ = cost_and_gradients(net, X, Y)
                        flat[idx] = old
                        return c

                    numeric = oracles.central_difference(cost_at, flat[idx], eps)
                    analytic = grads[name].ravel()[idx]
                    denom = max(abs(numeric), abs(analytic), 1e-8)
                    max_rel = max(max_rel, abs(numeric - analytic) / denom)
            assert max_rel < 1e-4

    def test_single_step_decreases_cost(self):
        # with l2 = 0 and a small lr, one step on one example reduces its cost
        net, X, Y = _random_case(5)
        net.l2 = 0.0
        x, y = X[:1], Y[:1]
        before, grads = cost_and_gradients(net, x, y)
        lr = 1e-3
        net.W -= lr * grads["W"]
        net.c -= lr * grads["c"]
        net.w -= lr * grads["w"]
        net.b -= lr * grads["b"]
        after, _ = cost_and_gradients(net, x, y)
        assert after < before


class TestTraining:
    def test_memorizes_single_example(self):
        inp = FusionInput([1, 2], 0.25)
        examples = [(inp, 2)]
        hyper = FusionHyper(
            hidden_width=8, lr=0.05, l2=0.0, epochs=400, batch=4, seed=0
        )
        net, trace = train_fusion(examples, k=2, n_obs=3, hyper=hyper)
        assert trace[-1] < 1e-4
        diffs = np.diff(trace)
        assert (diffs <= 1e-12).all()
        _, pred = forward(net, encode(inp, 2, 3))
        assert pred == 2

    def test_learns_to_copy_first_model(self):
        rng = np.random.default_rng(42)
        k, m = 3, 4
        n = 5000
        preds = rng.integers(0, m, size=(n, k))
        counts = rng.random(n)
        targets = preds[:, 0].copy()
        X = encode_batch(preds, counts, m)
        hyper = FusionHyper(hidden_width=30, lr=0.1, l2=0.0, epochs=60,
                            batch=64, seed=1)
        net, _ = train_fusion_arrays(X, targets, m, hyper)
        held_preds = rng.integers(0, m, size=(500, k))
        held_counts = rng.random(500)
        Xh = encode_batch(held_preds, held_counts, m)
        got = np.argmax(forward_batch(net, Xh), axis=1)
        agreement = (got == held_preds[:, 0]).mean()
        assert agreement >= 0.99

    def test_divergence_raises_with_epoch(self):
        rng = np.random.default_rng(3)
        X = rng.random((32, 5)) * 10
        targets = rng.integers(0, 3, size=32)
        hyper = FusionHyper(hidden_width=6, lr=1e6, l2=0.0, epochs=10,
                            batch=8, seed=0)
        with pytest.raises(TrainingDivergedError) as err:
            train_fusion_arrays(X, targets, 3, hyper)
        assert err.value.epoch >= 0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(11)
        X = rng.random((64, 7))
        targets = rng.integers(0, 3, size=64)
        hyper = FusionHyper(hidden_width=5, epochs=5, seed=9)
        n1, t1 = train_fusion_arrays(X, targets, 3, hyper)
        n2, t2 = train_fusion_arrays(X, targets, 3, hyper)
        assert t1 == t2
        assert np.array_equal(n1.W, n2.W)
        assert np.array_equal(n1.w, n2.w)
        assert np.array_equal(n1.c, n2.c)
        assert np.array_equal(n1.b, n2.b)

    def test_empty_examples_rejected(self):
        with pytest.raises(DomainError):
            train_fusion([], k=1, n_obs=2, hyper=FusionHyper())


class TestFeatureImportance:
    def test_report_rows_and_determinism(self):
        rng = np.random.default_rng(21)
        k, m = 2, 3
        preds = rng.integers(0, m, size=(400, k))
        counts = rng.random(400)
        targets = preds[:, 1].copy()
        X = encode_batch(preds, counts, m)
        hyper = FusionHyper(hidden_width=6, epochs=8, seed=5)
        rows1 = feature_importance(
            X, targets, k, m, hyper, ["hmm_4", "hmm_9"], n_retrain=3
        )
        rows2 = feature_importance(
            X, targets, k, m, hyper, ["hmm_4", "hmm_9"], n_retrain=3
        )
        assert [(r.name, r.weight, r.std) for r in rows1] == [
            (r.name, r.weight, r.std) for r in rows2
        ]
        names = {r.name for r in rows1}
        assert names == {"hmm_4", "hmm_9", "count"}
        assert all(r.std >= 0 for r in rows1)
        report = format_importance_report(rows1)
        assert "count" in report and "±" in report

    def test_block_weights_shape(self):
        net = init_network(2 * 3 + 1, 3, FusionHyper(hidden_width=4, seed=0))
        masses = input_block_weights(net, k=2, n_obs=3)
        assert masses.shape == (3,)
        assert (masses >= 0).all()


class TestSerialization:
    def test_round_trip(self):
        net = init_network(7, 3, FusionHyper(hidden_width=4, seed=2))
        doc = fusion_to_doc(net)
        back = fusion_from_doc(doc)
        for name in ("W", "c", "w", "b"):
            assert np.array_equal(getattr(net, name), getattr(back, name))
        assert back.loss == net.loss
        assert back.l2 == net.l2
