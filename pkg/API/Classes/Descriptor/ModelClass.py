from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import NamedTuple
import logging

import numpy as np

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import InvalidConfig, ShapeMismatch
from Classes.Base.CustomThreadClass import run_chunked
from Classes.Network import LayerClass as L
from Classes.Network.LossClass import softmax

logger = logging.getLogger(__name__)

CONV1 = dict(kernel=5, stride=2, padding=2, width=16)
CONV2 = dict(kernel=3, stride=2, padding=1, width=32)
DENSE_BLOCKS = 2
LAYERS_PER_BLOCK = 2
DENSE_KERNEL = 3
# spatial size after the two strided convolutions on a 64 x 64 patch
FEATURE_SIZE = 16
# pair rows scored at once by metric_pairwise
PAIR_BLOCK = 16384


@dataclass(frozen=True)
class ModelConfig:
    channels: str = Config.CHANNEL_SETS[0]
    growth_rate: int = Config.GROWTH_RATE
    descriptor_dim: int = Config.DESCRIPTOR_DIM
    head: str = 'metric'
    hinge_margin: float = Config.HINGE_MARGIN
    metric_layer_widths: tuple = Config.METRIC_LAYER_WIDTHS

    def __post_init__(self):
        if self.channels not in Config.CHANNEL_SETS:
            raise InvalidConfig(f"channels must be one of {', '.join(Config.CHANNEL_SETS)}")
        if self.head not in Config.HEADS:
            raise InvalidConfig(f"head must be one of {', '.join(Config.HEADS)}, got '{self.head}'")
        if self.growth_rate < 1 or self.descriptor_dim < 1:
            raise InvalidConfig("growth_rate and descriptor_dim must be >= 1")
        if not self.hinge_margin > 0:
            raise InvalidConfig(f"hinge_margin must be > 0, got {self.hinge_margin}")
        widths = tuple(int(w) for w in self.metric_layer_widths)
        if not widths or widths[-1] != 2 or min(widths) < 1:
            raise InvalidConfig(f"metric_layer_widths must be positive and end in 2, got {widths}")
        object.__setattr__(self, 'metric_layer_widths', widths)

    @classmethod
    def from_mapping(cls, mapping):
        return Config.from_mapping(cls, mapping)

    def to_dict(self):
        d = asdict(self)
        d['metric_layer_widths'] = list(self.metric_layer_widths)
        return d

    @property
    def in_channels(self):
        return 2 if self.channels == 'depth+intensity' else 1

    @property
    def feature_channels(self):
        return CONV2['width'] + DENSE_BLOCKS * LAYERS_PER_BLOCK * self.growth_rate


class MatchScore(NamedTuple):
    probability: float


@dataclass
class ModelParams:
    """The single shared parameter set (theta) plus the config it was built for."""

    config: ModelConfig
    tensors: OrderedDict

    def copy(self):
        return ModelParams(self.config, OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    def learnable(self):
        return [k for k in self.tensors if not k.endswith(('.running_mean', '.running_var'))]

    def __getitem__(self, name):
        return self.tensors[name]


def _bn_names(prefix):
    return [f"{prefix}.gamma", f"{prefix}.beta", f"{prefix}.running_mean", f"{prefix}.running_var"]


def parameter_shapes(config):
    """Ordered ``name -> shape`` for every stored tensor of ``config``."""
    shapes = OrderedDict()

    def conv(name, k, cin, cout):
        shapes[f"{name}.weight"] = (k, k, cin, cout)
        shapes[f"{name}.bias"] = (cout,)

    def fc(name, cin, cout):
        shapes[f"{name}.weight"] = (cin, cout)
        shapes[f"{name}.bias"] = (cout,)

    conv('conv1', CONV1['kernel'], config.in_channels, CONV1['width'])
    conv('conv2', CONV2['kernel'], CONV1['width'], CONV2['width'])
    channels = CONV2['width']
    for b in range(1, DENSE_BLOCKS + 1):
        for l in range(LAYERS_PER_BLOCK):
            for name in _bn_names(f"block{b}.{l}.bn"):
                shapes[name] = (channels,)
            conv(f"block{b}.{l}.conv", DENSE_KERNEL, channels, config.growth_rate)
            channels += config.growth_rate
    if config.head == 'metric':
        conv('bottleneck', FEATURE_SIZE, channels, config.descriptor_dim)
        width = 2 * config.descriptor_dim
        for i, out in enumerate(config.metric_layer_widths):
            fc(f"fc{i}", width, out)
            width = out
    else:
        fc('hinge_fc0', FEATURE_SIZE * FEATURE_SIZE * channels, Config.HINGE_HIDDEN)
        fc('hinge_fc1', Config.HINGE_HIDDEN, config.descriptor_dim)
    return shapes


def parameter_count(config):
    """Learnable scalars: weights, biases, gamma and beta."""
    return int(sum(np.prod(shape) for name, shape in parameter_shapes(config).items()
                   if not name.endswith(('.running_mean', '.running_var'))))


def build_model(config=None, seed=0):
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in parameter_shapes(config).items():
        if name.endswith('.weight'):
            fan_in = int(np.prod(shape[:-1]))
            value = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif name.endswith(('.gamma', '.running_var')):
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        tensors[name] = value.astype(np.float32)
    logger.debug("Built %s model with %d learnable parameters", config.head, parameter_count(config))
    return ModelParams(config, tensors)


def _w(params, name):
    return params.tensors[name].astype(np.float64)


def _bn_state(params, prefix):
    t = params.tensors
    return L.BatchNormState(t[f"{prefix}.gamma"], t[f"{prefix}.beta"],
                            t[f"{prefix}.running_mean"], t[f"{prefix}.running_var"])


def _check_patches(params, x):
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[np.newaxis]
    expected = (Config.GRID_ROWS, Config.GRID_COLS, params.config.in_channels)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ShapeMismatch(f"Model '{params.config.channels}' expects N x {expected}, got {x.shape}")
    return x.astype(np.float64)


# ------------------------------------------------------------- feature net

def forward_features(params, x, mode='eval'):
    """Descriptors (N x descriptor_dim) for a patch batch, plus the backward cache."""
    x = _check_patches(params, x)
    caches = {}
    h, caches['conv1'] = L.conv2d_forward(x, _w(params, 'conv1.weight'), _w(params, 'conv1.bias'),
                                          CONV1['stride'], CONV1['padding'])
    h, caches['relu1'] = L.relu_forward(h)
    h, caches['conv2'] = L.conv2d_forward(h, _w(params, 'conv2.weight'), _w(params, 'conv2.bias'),
                                          CONV2['stride'], CONV2['padding'])
    h, caches['relu2'] = L.relu_forward(h)
    for b in range(1, DENSE_BLOCKS + 1):
        for l in range(LAYERS_PER_BLOCK):
            p = f"block{b}.{l}"
            z, caches[f"{p}.bn"] = L.batchnorm_forward(h, _bn_state(params, f"{p}.bn"), mode)
            z, caches[f"{p}.relu"] = L.relu_forward(z)
            z, caches[f"{p}.conv"] = L.conv2d_forward(z, _w(params, f"{p}.conv.weight"),
                                                      _w(params, f"{p}.conv.bias"), 1, DENSE_KERNEL // 2)
            h, caches[f"{p}.cat"] = L.concat(h, z)
    if params.config.head == 'metric':
        d, caches['bottleneck'] = L.conv2d_forward(h, _w(params, 'bottleneck.weight'), _w(params, 'bottleneck.bias'))
        d = d.reshape(d.shape[0], -1)
    else:
        f, caches['flatten'] = L.flatten(h)
        f, caches['hinge_fc0'] = L.fully_connected_forward(f, _w(params, 'hinge_fc0.weight'), _w(params, 'hinge_fc0.bias'))
        f, caches['hinge_relu'] = L.relu_forward(f)
        d, caches['hinge_fc1'] = L.fully_connected_forward(f, _w(params, 'hinge_fc1.weight'), _w(params, 'hinge_fc1.bias'))
    return d, caches


def backward_features(params, ddesc, caches):
    """Gradients of every learnable feature-net tensor given d loss / d descriptors."""
    grads = {}
    if params.config.head == 'metric':
        shape = caches['bottleneck'][1].shape[:3] + (params.config.descriptor_dim,)
        dh, grads['bottleneck.weight'], grads['bottleneck.bias'] = L.conv2d_backward(ddesc.reshape(shape), caches['bottleneck'])
    else:
        df, grads['hinge_fc1.weight'], grads['hinge_fc1.bias'] = L.fully_connected_backward(ddesc, caches['hinge_fc1'])
        df = L.relu_backward(df, caches['hinge_relu'])
        df, grads['hinge_fc0.weight'], grads['hinge_fc0.bias'] = L.fully_connected_backward(df, caches['hinge_fc0'])
        dh = L.flatten_backward(df, caches['flatten'])
    for b in reversed(range(1, DENSE_BLOCKS + 1)):
        for l in reversed(range(LAYERS_PER_BLOCK)):
            p = f"block{b}.{l}"
            dh, dz = L.concat_backward(dh, caches[f"{p}.cat"])
            dz, grads[f"{p}.conv.weight"], grads[f"{p}.conv.bias"] = L.conv2d_backward(dz, caches[f"{p}.conv"])
            dz = L.relu_backward(dz, caches[f"{p}.relu"])
            dz, grads[f"{p}.bn.gamma"], grads[f"{p}.bn.beta"] = L.batchnorm_backward(dz, caches[f"{p}.bn"])
            dh = dh + dz
    dh = L.relu_backward(dh, caches['relu2'])
    dh, grads['conv2.weight'], grads['conv2.bias'] = L.conv2d_backward(dh, caches['conv2'])
    dh = L.relu_backward(dh, caches['relu1'])
    _, grads['conv1.weight'], grads['conv1.bias'] = L.conv2d_backward(dh, caches['conv1'])
    return grads


def feature_forward(params, patches, mode='eval'):
    return forward_features(params, patches, mode)[0]


def describe(params, patches, batch_size=256):
    """Eval-mode descriptors for any number of patches (arrays or VoxelPatch objects)."""
    if isinstance(patches, (list, tuple)):
        patches = np.stack([getattr(p, 'values', p) for p in patches]) if patches else np.zeros((0,))
    patches = np.asarray(patches)
    if not len(patches):
        return np.zeros((0, params.config.descriptor_dim))
    return np.concatenate([feature_forward(params, patches[s:s + batch_size], 'eval')
                           for s in range(0, len(patches), batch_size)])


# --------------------------------------------------------------- metric net

def _metric_layers(params):
    return len(params.config.metric_layer_widths)


def forward_metric(params, desc_a, desc_b):
    """Two-way logits for (earlier, later) descriptor pairs, plus the backward cache."""
    if params.config.head != 'metric':
        raise ShapeMismatch("Hinge-embedding models have no metric network")
    a, b = np.atleast_2d(desc_a).astype(np.float64), np.atleast_2d(desc_b).astype(np.float64)
    dim = params.config.descriptor_dim
    if a.shape != b.shape or a.shape[1] != dim:
        raise ShapeMismatch(f"Descriptors {a.shape} and {b.shape} do not match dimension {dim}")
    h, cat = L.concat(a, b)
    caches = {'cat': cat}
    last = _metric_layers(params) - 1
    for i in range(last + 1):
        h, caches[f"fc{i}"] = L.fully_connected_forward(h, _w(params, f"fc{i}.weight"), _w(params, f"fc{i}.bias"))
        if i < last:
            h, caches[f"relu{i}"] = L.relu_forward(h)
    return h, caches


def backward_metric(params, dlogits, caches):
    """Returns (grads, d desc_a, d desc_b)."""
    grads = {}
    dh = dlogits
    last = _metric_layers(params) - 1
    for i in reversed(range(last + 1)):
        if i < last:
            dh = L.relu_backward(dh, caches[f"relu{i}"])
        dh, grads[f"fc{i}.weight"], grads[f"fc{i}.bias"] = L.fully_connected_backward(dh, caches[f"fc{i}"])
    da, db = L.concat_backward(dh, caches['cat'])
    return grads, da, db


def metric_logits(params, desc_a, desc_b):
    return forward_metric(params, desc_a, desc_b)[0]


def metric_forward(params, desc_a, desc_b):
    """Match probability (softmax class 0) per pair; order dependent."""
    return softmax(metric_logits(params, desc_a, desc_b))[:, Config.MATCH_CLASS]


def metric_pairwise(params, desc_a, desc_b, workers=None):
    """Match probability for every (a, b) combination, shape (len(a), len(b)).

    The first metric layer is linear in the concatenation, so it is applied to
    each side once and summed per pair before the remaining layers.
    """
    a, b = np.atleast_2d(desc_a).astype(np.float64), np.atleast_2d(desc_b).astype(np.float64)
    dim = params.config.descriptor_dim
    w0, b0 = _w(params, 'fc0.weight'), _w(params, 'fc0.bias')
    pre_a = a @ w0[:dim] + b0
    pre_b = b @ w0[dim:]
    layers = [(_w(params, f"fc{i}.weight"), _w(params, f"fc{i}.bias")) for i in range(_metric_layers(params))]
    last = len(layers) - 1
    rows_per_block = max(1, PAIR_BLOCK // max(1, len(b)))

    def block(start, stop):
        out = []
        for s in range(start, stop, rows_per_block):
            e = min(stop, s + rows_per_block)
            h = (pre_a[s:e, np.newaxis, :] + pre_b[np.newaxis, :, :]).reshape(-1, w0.shape[1])
            for i in range(last + 1):
                if i:
                    h = h @ layers[i][0] + layers[i][1]
                if i < last:
                    h = np.maximum(h, 0)
            out.append(softmax(h)[:, Config.MATCH_CLASS].reshape(e - s, len(b)))
        return np.concatenate(out) if out else np.zeros((0, len(b)))

    if not len(a) or not len(b):
        return np.zeros((len(a), len(b)))
    return np.concatenate(run_chunked(block, len(a), workers or Config.THREADS))


def euclidean_distance(desc_a, desc_b):
    a, b = np.asarray(desc_a, dtype=np.float64), np.asarray(desc_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"Descriptor shapes differ: {a.shape} vs {b.shape}")
    d = np.sqrt(np.sum((a - b) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def score_pair(params, patch_a, patch_b):
    desc = describe(params, [patch_a, patch_b])
    return MatchScore(float(metric_forward(params, desc[0], desc[1])[0]))
