import numpy as np
import pytest

from patternreg import autograd as ag
from patternreg.autograd import Tensor
from patternreg.model import (ArchConfig, ConfigError, adaptive_concat_pool,
                              arch_config, build)

from helpers import fd_gradient, assert_grads_close


class TestBuild:
    def test_same_seed_gives_identical_networks(self):
        cfg = arch_config("tiny")
        a = build(cfg, seed=42)
        b = build(cfg, seed=42)
        assert list(a.params) == list(b.params)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data,
                                          b.params[name].data)

    def test_different_seed_differs(self):
        cfg = arch_config("tiny")
        a = build(cfg, seed=1)
        b = build(cfg, seed=2)
        assert not np.array_equal(a.params["stem.weight"].data,
                                  b.params["stem.weight"].data)

    def test_head_width_is_twice_final_channels(self):
        cfg = arch_config("resmini")
        assert cfg.final_channels == 64
        net = build(cfg, seed=0)
        assert net.params["head.fc1.weight"].shape == (cfg.head_hidden, 128)

    def test_final_layer_outputs_one_value(self):
        for name in ("tiny", "small", "resmini"):
            net = build(arch_config(name), seed=0)
            assert net.params["head.fc2.weight"].shape[0] == 1

    def test_biases_start_at_zero(self):
        net = build(arch_config("tiny"), seed=3)
        for pname, t in net.params.items():
            if pname.endswith(".bias"):
                assert not t.data.any()

    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigError):
            arch_config("resnet50")
        with pytest.raises(ConfigError):
            ArchConfig(arch="x", stem_channels=4, blocks=())
        with pytest.raises(ConfigError):
            ArchConfig(arch="x", stem_channels=0, blocks=((8, 1),))


class TestForward:
    def test_batch_shape_contract(self):
        net = build(arch_config("tiny"), seed=7)
        x = Tensor(np.random.default_rng(0).random((128, 1, 7, 214),
                                                   dtype=np.float32))
        out = net(x)
        assert out.shape == (128, 1)

    def test_single_sample(self):
        net = build(arch_config("tiny"), seed=7)
        x = Tensor(np.zeros((1, 1, 7, 214), dtype=np.float32))
        assert net(x).shape == (1, 1)

    def test_taller_grid_without_reconfiguration(self):
        net = build(arch_config("tiny"), seed=7)
        x = Tensor(np.zeros((1, 1, 12, 214), dtype=np.float32))
        assert net(x).shape == (1, 1)

    def test_identical_samples_identical_outputs(self):
        net = build(arch_config("tiny"), seed=9)
        rng = np.random.default_rng(1)
        one = rng.random((1, 1, 7, 30), dtype=np.float32)
        batch = Tensor(np.concatenate([one, one], axis=0))
        out = net(batch).data
        np.testing.assert_array_equal(out[0], out[1])

    def test_permuting_batch_permutes_outputs(self):
        net = build(arch_config("small"), seed=9)
        rng = np.random.default_rng(2)
        x = rng.random((5, 1, 8, 32), dtype=np.float32)
        perm = np.array([3, 0, 4, 1, 2])
        out = net(Tensor(x)).data
        out_perm = net(Tensor(x[perm])).data
        np.testing.assert_array_equal(out[perm], out_perm)

    def test_channel_mismatch_rejected(self):
        net = build(arch_config("tiny", channels_in=1), seed=0)
        with pytest.raises(ConfigError, match="channels"):
            net(Tensor(np.zeros((1, 3, 7, 214), dtype=np.float32)))

    def test_too_small_input_rejected(self):
        net = build(arch_config("tiny"), seed=0)
        with pytest.raises(ConfigError, match="minimum"):
            net(Tensor(np.zeros((1, 1, 3, 214), dtype=np.float32)))


class TestConcatPool:
    def test_constant_feature_map(self):
        x = Tensor(np.full((2, 3, 4, 5), 1.5))
        out = adaptive_concat_pool(x)
        np.testing.assert_array_equal(out.data, np.full((2, 6), 1.5))

    def test_small_case_avg_then_max(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert adaptive_concat_pool(x).data.tolist() == [[2.5, 4.0]]

    def test_output_length_independent_of_spatial_size(self):
        rng = np.random.default_rng(3)
        for h, w in ((1, 1), (2, 9), (7, 214)):
            x = Tensor(rng.random((2, 4, h, w)))
            assert adaptive_concat_pool(x).shape == (2, 8)

    def test_max_component_at_least_avg(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((3, 5, 4, 6)))
        out = adaptive_concat_pool(x).data
        assert np.all(out[:, 5:] >= out[:, :5])


class TestEndToEndGradient:
    def test_tiny_network_matches_finite_differences(self):
        cfg = arch_config("tiny")
        net = build(cfg, seed=12, dtype=np.float64)
        rng = np.random.default_rng(5)
        x = rng.random((1, 1, 4, 6))
        y = np.array([[3.0]])

        loss = ag.mse_loss(net(Tensor(x)), Tensor(y))
        loss.backward()

        def forward():
            with ag.no_grad():
                pred = net(Tensor(x)).data
            return float(((pred - y) ** 2).mean())

        for name, t in net.params.items():
            assert_grads_close(t.grad, fd_gradient(forward, t.data))
