"""The regression network: residual conv feature extractor, average+max
concat pooling, and a two-layer fully connected head ending in one scalar.

The global pooling makes the network accept any input height/width above a
per-architecture minimum, so sensor count and horizon can vary without
reconfiguration. Three desk-scale presets (tiny/small/resmini) stand in for
large image backbones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class ConfigError(ValueError):
    """Invalid architecture configuration or incompatible input."""


@dataclass(frozen=True)
class ArchConfig:
    arch: str
    stem_channels: int
    blocks: tuple[tuple[int, int], ...]
    head_hidden: int = 128
    channels_in: int = 1
    stem_stride: tuple[int, int] = (2, 2)
    min_input_hw: int = 4

    def __post_init__(self):
        if not self.blocks:
            raise ConfigError("blocks must be non-empty")
        if self.stem_channels < 1 or self.head_hidden < 1 or self.channels_in < 1:
            raise ConfigError("channel counts must be positive")
        stride = self.stem_stride
        if isinstance(stride, int):
            stride = (stride, stride)
        stride = (int(stride[0]), int(stride[1]))
        if stride[0] < 1 or stride[1] < 1:
            raise ConfigError(f"bad stem_stride {stride}")
        object.__setattr__(self, "stem_stride", stride)
        object.__setattr__(self, "blocks",
                           tuple((int(c), int(s)) for c, s in self.blocks))
        for ch, stride in self.blocks:
            if ch < 1 or stride < 1:
                raise ConfigError(f"bad block ({ch}, {stride})")

    @property
    def final_channels(self) -> int:
        return self.blocks[-1][0]


_PRESETS = {
    # wide-short sensor grids downsample the time axis harder in the stem
    "tiny": dict(stem_channels=16, stem_stride=(2, 4),
                 blocks=((16, 2), (32, 2)), min_input_hw=4),
    "small": dict(stem_channels=16, stem_stride=(2, 2),
                  blocks=((16, 1), (32, 2), (32, 1), (64, 2)),
                  min_input_hw=8),
    "resmini": dict(stem_channels=16, stem_stride=(2, 2),
                    blocks=((16, 1), (16, 1), (32, 2), (32, 1),
                            (32, 1), (64, 2), (64, 1), (64, 1)),
                    min_input_hw=8),
}


def arch_config(name: str, channels_in: int = 1,
                head_hidden: int = 128) -> ArchConfig:
    """Build one of the preset architectures by name."""
    if name not in _PRESETS:
        raise ConfigError(
            f"unknown arch {name!r}; choose from {sorted(_PRESETS)}")
    return ArchConfig(arch=name, channels_in=channels_in,
                      head_hidden=head_hidden, **_PRESETS[name])


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class RegressionNet:
    """Parameter container plus the forward pass."""

    def __init__(self, config: ArchConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def forward(self, batch: Tensor) -> Tensor:
        cfg = self.config
        if batch.data.ndim != 4:
            raise ConfigError(f"expected [N,C,H,W] input, got {batch.shape}")
        n, c, h, w = batch.data.shape
        if c != cfg.channels_in:
            raise ConfigError(
                f"input has {c} channels, network was built for "
                f"{cfg.channels_in}")
        if h < cfg.min_input_hw or w < cfg.min_input_hw:
            raise ConfigError(
                f"input {h}x{w} below the {cfg.arch!r} minimum of "
                f"{cfg.min_input_hw}x{cfg.min_input_hw}")
        p = self.params

        out = ag.relu(ag.conv2d(batch, p["stem.weight"], p["stem.bias"],
                                stride=cfg.stem_stride, padding=1))
        in_ch = cfg.stem_channels
        for i, (ch, stride) in enumerate(cfg.blocks):
            prefix = f"block{i}"
            h1 = ag.relu(ag.conv2d(out, p[f"{prefix}.conv1.weight"],
                                   p[f"{prefix}.conv1.bias"],
                                   stride=stride, padding=1))
            h2 = ag.conv2d(h1, p[f"{prefix}.conv2.weight"],
                           p[f"{prefix}.conv2.bias"], stride=1, padding=1)
            if stride != 1 or in_ch != ch:
                shortcut = ag.conv2d(out, p[f"{prefix}.shortcut.weight"],
                                     p[f"{prefix}.shortcut.bias"],
                                     stride=stride, padding=0)
            else:
                shortcut = out
            out = ag.relu(ag.add(h2, shortcut))
            in_ch = ch

        pooled = adaptive_concat_pool(out)
        hidden = ag.relu(ag.linear(pooled, p["head.fc1.weight"],
                                   p["head.fc1.bias"]))
        return ag.linear(hidden, p["head.fc2.weight"], p["head.fc2.bias"])

    __call__ = forward


def adaptive_concat_pool(features: Tensor) -> Tensor:
    """Global average and max pooling concatenated: [N,C,H,W] -> [N,2C].

    Average components come first; checkpoints depend on this order.
    """
    n, c = features.data.shape[0], features.data.shape[1]
    avg = ag.adaptive_avg_pool(features).reshape(n, c)
    mx = ag.adaptive_max_pool(features).reshape(n, c)
    return ag.concat([avg, mx], axis=1)


def build(config: ArchConfig, seed: int, dtype=np.float32) -> RegressionNet:
    """Deterministically initialize a network from a seed.

    Conv and linear weights are He-uniform (fan-in), biases zero; parameters
    are created and drawn in a fixed enumeration order so equal seeds give
    parameter-wise identical networks.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def conv_param(name, k_out, c_in, kh, kw):
        fan_in = c_in * kh * kw
        params[f"{name}.weight"] = Tensor(
            _he_uniform(rng, (k_out, c_in, kh, kw), fan_in, dtype),
            requires_grad=True)
        params[f"{name}.bias"] = Tensor(np.zeros(k_out, dtype=dtype),
                                        requires_grad=True)

    def linear_param(name, g_out, f_in):
        params[f"{name}.weight"] = Tensor(
            _he_uniform(rng, (g_out, f_in), f_in, dtype), requires_grad=True)
        params[f"{name}.bias"] = Tensor(np.zeros(g_out, dtype=dtype),
                                        requires_grad=True)

    conv_param("stem", config.stem_channels, config.channels_in, 3, 3)
    in_ch = config.stem_channels
    for i, (ch, stride) in enumerate(config.blocks):
        conv_param(f"block{i}.conv1", ch, in_ch, 3, 3)
        conv_param(f"block{i}.conv2", ch, ch, 3, 3)
        if stride != 1 or in_ch != ch:
            conv_param(f"block{i}.shortcut", ch, in_ch, 1, 1)
        in_ch = ch

    linear_param("head.fc1", config.head_hidden, 2 * config.final_channels)
    linear_param("head.fc2", 1, config.head_hidden)
    return RegressionNet(config, params)
