import numpy as np
import pytest

from cohortnet.backends import available_backends, get_backend
from cohortnet.network import (
    DivergenceError,
    MaskedNetwork,
    ModelFormatError,
    TrainConfig,
    WidthMismatchError,
    init_network,
    mean_loss,
    sgd_epoch,
)


def random_masked_net(widths, seed, mask_density=0.7):
    net = init_network(widths, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for m in net.masks:
        m[:] = (rng.random(m.shape) < mask_density).astype(float)
        if m.sum() == 0:
            m.ravel()[0] = 1.0
    net.apply_masks()
    return net


class TestInit:
    def test_shapes_and_all_ones_masks(self):
        net = init_network((2, 3, 2), seed=0)
        assert [m.shape for m in net.masks] == [(2, 3), (3, 2)]
        assert all((m == 1.0).all() for m in net.masks)

    def test_dense_count_74_input(self):
        # 74*256 + 256*128 + 128*128 + 128*3 = 68480
        net = init_network((74, 256, 128, 128, 3), seed=0)
        assert net.count_params() == 68480

    def test_same_seed_identical(self):
        a = init_network((5, 4, 3), seed=7)
        b = init_network((5, 4, 3), seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert wa.tobytes() == wb.tobytes()

    def test_init_scale_bounded_by_fan_in(self):
        net = init_network((16, 8), seed=1)
        assert np.abs(net.weights[0]).max() <= 1.0 / 4.0


class TestForward:
    def test_zero_input_zero_preactivations(self):
        net = init_network((4, 5, 3), seed=2)
        probs, acts = net.forward(np.zeros((3, 4)))
        assert np.all(acts[-1] == 0.0)
        np.testing.assert_allclose(probs, 1.0 / 3.0)

    def test_masking_equals_zero_weight(self):
        net = init_network((4, 5, 3), seed=3)
        x = np.random.default_rng(0).random((6, 4))
        masked = net.clone()
        masked.masks[0][2, 1] = 0.0
        masked.apply_masks()
        zeroed = net.clone()
        zeroed.weights[0][2, 1] = 0.0
        np.testing.assert_array_equal(masked.forward(x)[0], zeroed.forward(x)[0])

    def test_single_weight_preactivation(self):
        net = MaskedNetwork((1, 1), [np.array([[2.0]])], [np.ones((1, 1))])
        _, acts = net.forward(np.array([[3.0]]))
        assert acts[-1][0, 0] == 6.0

    def test_softmax_rows_sum_to_one(self):
        net = init_network((6, 9, 3), seed=4)
        probs, _ = net.forward(np.random.default_rng(1).random((20, 6)) * 10)
        assert np.all(probs >= 0.0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_width_mismatch_rejected(self):
        net = init_network((4, 3), seed=0)
        with pytest.raises(WidthMismatchError):
            net.forward(np.zeros((2, 5)))


class TestCounting:
    # dense parameter/FLOP pairs for the published input widths
    CASES = [
        ((74, 256, 128, 128, 3), 68480, 136445),   # reported 68.5k / 136.4k
        ((71, 256, 128, 128, 3), 67712, 134909),   # reported 67.7k / 134.9k
        ((131, 256, 128, 128, 3), 83072, 165629),  # reported 83.1k / 165.6k
        ((191, 256, 128, 128, 3), 98432, 196349),  # reported 98.4k / 196.3k
        ((63, 256, 128, 128, 3), 65664, 130813),   # reported 65.7k / 130.8k
    ]

    @pytest.mark.parametrize("widths,params,flops", CASES)
    def test_dense_counts(self, widths, params, flops):
        net = init_network(widths, seed=0)
        assert net.count_params() == params
        assert net.count_flops() == flops

    def test_flops_identity_on_dense_nets(self):
        net = init_network((9, 7, 5, 4), seed=1)
        assert net.count_flops() == 2 * net.count_params() - (7 + 5 + 4)

    def test_all_masks_zero(self):
        net = init_network((4, 3, 2), seed=0)
        for m in net.masks:
            m.fill(0.0)
        net.apply_masks()
        assert net.count_params() == 0
        assert net.count_flops() == 0

    def test_single_neuron_single_input_one_flop(self):
        net = MaskedNetwork((1, 1), [np.array([[1.5]])], [np.ones((1, 1))])
        assert net.count_flops() == 1

    def test_dormant_neurons_do_not_count(self):
        net = init_network((3, 2), seed=0)
        net.masks[0][:, 1] = 0.0
        net.apply_masks()
        # one neuron with 3 inputs: 3 multiplies + 2 adds
        assert net.count_flops() == 5


class TestGradients:
    def finite_difference(self, net, x, y, li, i, j, h=1e-5):
        w = net.weights[li]
        orig = w[i, j]
        w[i, j] = orig + h
        up = mean_loss(net, x, y)
        w[i, j] = orig - h
        down = mean_loss(net, x, y)
        w[i, j] = orig
        return (up - down) / (2 * h)

    @pytest.mark.parametrize("widths,seed", [
        ((4, 5, 3), 0),
        ((3, 6, 4, 3), 1),
        ((5, 4, 2), 2),
    ])
    def test_backprop_matches_central_differences(self, widths, seed):
        from cohortnet import backends
        net = random_masked_net(widths, seed)
        rng = np.random.default_rng(seed)
        x = rng.random((8, widths[0]))
        y = rng.integers(0, widths[-1], 8).astype(np.int64)
        _, grads = backends.loss_and_grads(net.weights, x, y, net.slope)
        for li in range(net.n_layers):
            for i in range(net.weights[li].shape[0]):
                for j in range(net.weights[li].shape[1]):
                    if net.masks[li][i, j] == 0.0:
                        continue
                    fd = self.finite_difference(net, x, y, li, i, j)
                    scale = max(abs(fd), abs(grads[li][i, j]), 1e-6)
                    assert abs(grads[li][i, j] - fd) <= 1e-4 * scale


class TestSgdEpoch:
    def _data(self, n=40, d=6, classes=3, seed=0):
        rng = np.random.default_rng(seed)
        return rng.random((n, d)), rng.integers(0, classes, n)

    def test_zero_learning_rate_leaves_weights(self):
        net = init_network((6, 5, 3), seed=1)
        before = [w.copy() for w in net.weights]
        x, y = self._data()
        loss, _ = sgd_epoch(net, x, y, TrainConfig(learning_rate=0.0, batch_size=8))
        assert np.isfinite(loss)
        for w0, w1 in zip(before, net.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_single_example_step_reduces_loss(self):
        net = init_network((6, 5, 3), seed=2)
        x = np.random.default_rng(3).random((1, 6))
        y = np.array([1])
        before = mean_loss(net, x, y)
        sgd_epoch(net, x, y, TrainConfig(learning_rate=1e-3, batch_size=1))
        assert mean_loss(net, x, y) < before

    def test_masked_positions_stay_exactly_zero(self):
        net = random_masked_net((6, 5, 3), seed=4, mask_density=0.5)
        x, y = self._data(seed=4)
        for _ in range(3):
            sgd_epoch(net, x, y, TrainConfig(learning_rate=0.05, batch_size=16))
        for w, m in zip(net.weights, net.masks):
            assert np.all(w[m == 0.0] == 0.0)

    def test_accumulator_covers_masked_positions(self):
        net = random_masked_net((6, 5, 3), seed=5, mask_density=0.4)
        x, y = self._data(seed=5)
        _, accum = sgd_epoch(net, x, y, TrainConfig(batch_size=16), accumulate=True)
        assert all(np.all(a >= 0.0) for a in accum)
        masked_grads = np.concatenate(
            [a[m == 0.0].ravel() for a, m in zip(accum, net.masks)])
        assert masked_grads.size > 0 and np.any(masked_grads > 0.0)

    def test_mask_application_idempotent(self):
        net = random_masked_net((5, 4, 3), seed=6, mask_density=0.5)
        once = [w.copy() for w in net.weights]
        net.apply_masks()
        for w0, w1 in zip(once, net.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_training_deterministic_given_seed(self):
        x, y = self._data(seed=7)
        outs = []
        for _ in range(2):
            net = init_network((6, 5, 3), seed=7)
            rng = np.random.default_rng(123)
            for _ in range(3):
                sgd_epoch(net, x, y, TrainConfig(batch_size=8, seed=123), rng=rng)
            outs.append(b"".join(w.tobytes() for w in net.weights))
        assert outs[0] == outs[1]

    def test_divergence_raises(self):
        net = init_network((4, 3), seed=8)
        x = np.full((4, 4), 1.0)
        y = np.array([0, 1, 2, 0])
        with pytest.raises(DivergenceError):
            for _ in range(20):
                sgd_epoch(net, x, y, TrainConfig(learning_rate=1e12, batch_size=2, seed=0))


class TestSerialization:
    def test_roundtrip_forward_identical(self):
        net = random_masked_net((7, 6, 4), seed=9)
        restored = MaskedNetwork.from_bytes(net.to_bytes())
        x = np.random.default_rng(2).random((5, 7))
        np.testing.assert_array_equal(net.forward(x)[0], restored.forward(x)[0])

    def test_roundtrip_bit_exact(self):
        net = random_masked_net((5, 8, 3), seed=10)
        restored = MaskedNetwork.from_bytes(net.to_bytes())
        assert restored.widths == net.widths
        assert restored.slope == net.slope
        for a, b in zip(net.weights, restored.weights):
            assert a.tobytes() == b.tobytes()
        assert restored.count_params() == net.count_params()

    def test_truncated_payload_rejected_with_offset(self):
        blob = init_network((4, 3), seed=0).to_bytes()
        with pytest.raises(ModelFormatError, match="offset"):
            MaskedNetwork.from_bytes(blob[:-5])

    def test_bad_magic_rejected(self):
        with pytest.raises(ModelFormatError, match="magic"):
            MaskedNetwork.from_bytes(b"garbage-bytes-here")

    def test_trailing_bytes_rejected(self):
        blob = init_network((4, 3), seed=0).to_bytes()
        with pytest.raises(ModelFormatError, match="trailing"):
            MaskedNetwork.from_bytes(blob + b"x")


class TestBackendParity:
    @pytest.mark.skipif(len(available_backends()) < 2,
                        reason="compiled backend not built")
    def test_train_batch_agrees(self):
        npb, nat = get_backend("numpy"), get_backend("native")
        rng = np.random.default_rng(11)
        net_a = random_masked_net((9, 8, 5, 3), seed=11)
        net_b = net_a.clone()
        x = rng.random((32, 9))
        y = rng.integers(0, 3, 32).astype(np.int64)
        acc_a = [np.zeros_like(w) for w in net_a.weights]
        acc_b = [np.zeros_like(w) for w in net_b.weights]
        la = npb.train_batch(net_a.weights, net_a.masks, x, y, 1e-2, 0.01, acc_a)
        lb = nat.train_batch(net_b.weights, net_b.masks, x, y, 1e-2, 0.01, acc_b)
        assert abs(la - lb) < 1e-12
        for wa, wb in zip(net_a.weights, net_b.weights):
            np.testing.assert_allclose(wa, wb, rtol=1e-12, atol=1e-14)
        for aa, ab in zip(acc_a, acc_b):
            np.testing.assert_allclose(aa, ab, rtol=1e-12, atol=1e-14)

    @pytest.mark.skipif(len(available_backends()) < 2,
                        reason="compiled backend not built")
    def test_forward_agrees(self):
        npb, nat = get_backend("numpy"), get_backend("native")
        net = random_masked_net((12, 10, 4), seed=12)
        x = np.random.default_rng(13).random((16, 12))
        fa = npb.forward_batch(net.weights, x, net.slope)
        fb = nat.forward_batch(net.weights, x, net.slope)
        for a, b in zip(fa, fb):
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
