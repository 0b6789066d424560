"""Siamese descriptor network: construction, passes, gradients and checkpoints."""

from collections import OrderedDict

import numpy as np
import pytest

from Classes.Base.CustomExceptionClass import CorruptCheckpoint, InvalidConfig, ShapeMismatch, VersionMismatch
from Classes.Descriptor.CheckpointClass import load_checkpoint, save_checkpoint
from Classes.Descriptor.ModelClass import (
    ModelConfig, ModelParams, backward_features, build_model, describe, euclidean_distance, feature_forward,
    forward_features, metric_forward, metric_logits, metric_pairwise, parameter_count, parameter_shapes, score_pair,
)
from Classes.Network.LossClass import softmax
from Classes.Patch.BatchClass import Batch
from Classes.Training.TrainerClass import hinge_step, metric_step


@pytest.fixture(scope="module")
def metric_model():
    return build_model(ModelConfig(), seed=0)


@pytest.fixture(scope="module")
def patches():
    return np.random.default_rng(0).random((6, 64, 64, 2))


class TestArchitecture:

    def test_parameter_counts(self):
        assert parameter_count(ModelConfig()) == 3_592_498
        assert parameter_count(ModelConfig(head='hinge')) == 6_434_544

    def test_dense_block_widths(self):
        shapes = parameter_shapes(ModelConfig())
        assert shapes['block1.0.conv.weight'] == (3, 3, 32, 4)
        assert shapes['block2.0.bn.gamma'] == (40,)
        assert shapes['bottleneck.weight'] == (16, 16, 48, 256)
        assert shapes['fc0.weight'] == (512, 512)
        assert shapes['fc4.weight'] == (64, 2)

    def test_depth_only_input(self):
        assert parameter_shapes(ModelConfig(channels='depth'))['conv1.weight'] == (5, 5, 1, 16)

    def test_same_seed_same_parameters(self):
        a, b = build_model(seed=4), build_model(seed=4)
        for name in a.tensors:
            np.testing.assert_array_equal(a[name], b[name])
        assert all(v.dtype == np.float32 for v in a.tensors.values())

    def test_invalid_config(self):
        with pytest.raises(InvalidConfig):
            ModelConfig(head='triplet')
        with pytest.raises(InvalidConfig):
            ModelConfig(metric_layer_widths=(64, 3))


class TestForward:

    def test_descriptor_shape(self, metric_model, patches):
        desc = feature_forward(metric_model, patches)
        assert desc.shape == (6, 256)
        assert np.all(np.isfinite(desc))

    def test_identical_patches_identical_descriptors(self, metric_model, patches):
        desc = feature_forward(metric_model, np.stack([patches[0], patches[0], patches[1]]))
        np.testing.assert_allclose(desc[0], desc[1], rtol=1e-12, atol=1e-12)

    def test_network_is_not_constant(self, metric_model):
        desc = feature_forward(metric_model, np.stack([np.zeros((64, 64, 2)), np.ones((64, 64, 2))]))
        assert np.abs(desc[0] - desc[1]).max() > 1e-6

    def test_describe_batches_consistently(self, metric_model, patches):
        np.testing.assert_allclose(describe(metric_model, patches, batch_size=4),
                                   feature_forward(metric_model, patches), rtol=1e-9, atol=1e-12)

    def test_wrong_channel_count(self, metric_model):
        with pytest.raises(ShapeMismatch):
            feature_forward(metric_model, np.zeros((1, 64, 64, 1)))

    def test_probabilities(self, metric_model, patches):
        desc = describe(metric_model, patches)
        q = softmax(metric_logits(metric_model, desc[:3], desc[3:]))
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-6)
        p = metric_forward(metric_model, desc[:3], desc[3:])
        assert np.all((p >= 0) & (p <= 1))
        assert 0.0 <= score_pair(metric_model, patches[0], patches[1]).probability <= 1.0

    def test_pairwise_matches_pairs(self, metric_model, patches):
        desc = describe(metric_model, patches)
        grid = metric_pairwise(metric_model, desc[:2], desc[2:], workers=2)
        assert grid.shape == (2, 4)
        for i in range(2):
            np.testing.assert_allclose(grid[i], metric_forward(metric_model, np.repeat(desc[i:i + 1], 4, 0), desc[2:]),
                                       rtol=1e-10, atol=1e-12)

    def test_hinge_model_has_no_metric_net(self, patches):
        model = build_model(ModelConfig(head='hinge'))
        desc = describe(model, patches[:2])
        assert desc.shape == (2, 256)
        with pytest.raises(ShapeMismatch):
            metric_forward(model, desc[0], desc[1])


class TestEuclideanDistance:

    def test_self_distance(self):
        x = np.random.default_rng(1).normal(size=256)
        assert euclidean_distance(x, x) == 0.0

    def test_unit_offset(self):
        e = np.zeros(256)
        e[0] = 1.0
        assert euclidean_distance(np.zeros(256), e) == 1.0

    def test_matches_summation(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(20, 256)), rng.normal(size=(20, 256))
        expected = [sum((x - y) ** 2 for x, y in zip(ra, rb)) ** 0.5 for ra, rb in zip(a, b)]
        np.testing.assert_allclose(euclidean_distance(a, b), expected, rtol=0, atol=1e-10)


def _float64(model):
    return ModelParams(model.config, OrderedDict((k, v.astype(np.float64)) for k, v in model.tensors.items()))


CHECKED_TENSORS = {
    'metric': ['conv1.weight', 'conv2.bias', 'block1.0.bn.gamma', 'block2.1.conv.weight', 'bottleneck.weight',
               'fc0.weight', 'fc4.bias'],
    'hinge': ['conv1.weight', 'block1.1.bn.beta', 'block2.0.conv.bias', 'hinge_fc0.weight', 'hinge_fc1.bias'],
}


@pytest.mark.parametrize("head, step", [("metric", metric_step), ("hinge", hinge_step)])
def test_backward_matches_finite_differences(head, step):
    """Analytic gradients of whole training steps against central differences."""
    rng = np.random.default_rng(3)
    params = _float64(build_model(ModelConfig(head=head), seed=1))
    batch = Batch(rng.random((2, 64, 64, 2)), rng.random((2, 64, 64, 2)), np.array([1, 0]), np.arange(2))
    _, grads = step(params, batch, 5e-4)
    h = 1e-7
    for name in CHECKED_TENSORS[head]:
        tensor = params.tensors[name]
        for idx in [tuple(rng.integers(s) for s in tensor.shape) for _ in range(2)]:
            original = tensor[idx]
            tensor[idx] = original + h
            plus, _ = step(params, batch, 5e-4)
            tensor[idx] = original - h
            minus, _ = step(params, batch, 5e-4)
            tensor[idx] = original
            numeric = (plus - minus) / (2 * h)
            assert abs(grads[name][idx] - numeric) <= 1e-5 * max(1.0, abs(numeric)), name


class TestSharedBranches:

    @pytest.fixture(scope="class")
    def pass_through(self):
        model = _float64(build_model(ModelConfig(), seed=2))
        x = np.random.default_rng(4).random((3, 64, 64, 2))
        desc, cache = forward_features(model, np.concatenate([x, x]), mode='train')
        return model, desc, cache

    def test_identical_inputs_identical_descriptors(self, pass_through):
        _, desc, _ = pass_through
        np.testing.assert_array_equal(desc[:3], desc[3:])

    def test_branch_gradients_accumulate(self, pass_through):
        model, desc, cache = pass_through
        ddesc = np.random.default_rng(5).normal(size=desc.shape)
        only_a, only_b = ddesc.copy(), ddesc.copy()
        only_a[3:] = 0.0
        only_b[:3] = 0.0
        full = backward_features(model, ddesc, cache)
        from_a = backward_features(model, only_a, cache)
        from_b = backward_features(model, only_b, cache)
        assert set(full) <= set(model.tensors)
        for name in ('conv1.weight', 'block2.1.conv.weight', 'bottleneck.weight'):
            assert np.any(from_a[name]) and np.any(from_b[name])
            np.testing.assert_allclose(from_a[name] + from_b[name], full[name], rtol=1e-9, atol=1e-12)


class TestCheckpoint:

    def test_save_then_load_is_bit_identical(self, tmp_path, metric_model):
        save_checkpoint(metric_model, tmp_path / "model.ldesc")
        loaded = load_checkpoint(tmp_path / "model.ldesc")
        assert loaded.config == metric_model.config
        assert list(loaded.tensors) == list(metric_model.tensors)
        for name, value in metric_model.tensors.items():
            np.testing.assert_array_equal(loaded[name], value)

    def test_truncated(self, tmp_path, metric_model):
        path = tmp_path / "model.ldesc"
        save_checkpoint(metric_model, path)
        path.write_bytes(path.read_bytes()[:1000])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_flipped_byte(self, tmp_path, metric_model):
        path = tmp_path / "model.ldesc"
        save_checkpoint(metric_model, path)
        raw = bytearray(path.read_bytes())
        raw[200] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_version(self, tmp_path, metric_model):
        path = tmp_path / "model.ldesc"
        save_checkpoint(metric_model, path)
        raw = bytearray(path.read_bytes())
        raw[5:7] = (2).to_bytes(2, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            load_checkpoint(path)

    def test_depth_model_on_two_channel_patches(self, tmp_path):
        path = tmp_path / "depth.ldesc"
        save_checkpoint(build_model(ModelConfig(channels='depth')), path)
        with pytest.raises(ShapeMismatch):
            load_checkpoint(path, channels='depth+intensity')
        assert load_checkpoint(path, channels='depth').config.in_channels == 1
