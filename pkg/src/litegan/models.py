"""U-Net generator family (doubling vs. fixed channel policies) and PatchGAN.

The nine presets span 41.8M parameters (Model 1) down to roughly ten
thousand (Model 9). Doubling-policy generators use 4x4 stride-2 encoder
convolutions and 4x4 transposed-convolution decoders (the classical heavy
U-Net); fixed-policy generators use 3x3 convolutions with nearest-neighbor
upsampling, which is what brings Model 9 into the ~10^4 parameter regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple, Union

import torch
import torch.nn as nn

from . import ops
from .ops import ParamDict

PRESET_WIDTHS = (4, 8, 16, 32, 64)


@dataclass(frozen=True)
class Doubling:
    """Channel width doubles after each downsampling layer, capped at 8x base."""

    base_channels: int

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")

    def widths(self, levels: int) -> List[int]:
        return [self.base_channels * min(2 ** i, 8) for i in range(levels)]

    def __str__(self) -> str:
        return f"doubling:{self.base_channels}"


@dataclass(frozen=True)
class Fixed:
    """Constant channel width at every level."""

    width: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")

    def widths(self, levels: int) -> List[int]:
        return [self.width] * levels

    def __str__(self) -> str:
        return f"fixed:{self.width}"


ChannelPolicy = Union[Doubling, Fixed]


def parse_policy(text: str) -> ChannelPolicy:
    kind, _, num = text.partition(":")
    if kind == "doubling":
        return Doubling(int(num))
    if kind == "fixed":
        return Fixed(int(num))
    raise ValueError(f"unknown channel policy {text!r} (expected doubling:N or fixed:N)")


# Preset index -> channel policy. Presets 1-4 and 6 are the doubling family
# (bases 64, 32, 16, 8, 4); presets 5, 7, 8, 9 are the fixed family
# (widths 64, 32, 16, 8). Index increases as parameter count decreases
# within each family.
MODEL_PRESETS: Dict[int, ChannelPolicy] = {
    1: Doubling(64),
    2: Doubling(32),
    3: Doubling(16),
    4: Doubling(8),
    5: Fixed(64),
    6: Doubling(4),
    7: Fixed(32),
    8: Fixed(16),
    9: Fixed(8),
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative U-Net generator architecture.

    ``levels`` is the number of stride-2 encoder convolutions; a 128x128
    input shrinks to 1x1 at the default depth of 7. ``upsample`` selects
    the decoder op: nearest-neighbor upsample + 3x3 conv, or a 4x4
    transposed convolution.
    """

    policy: ChannelPolicy
    levels: int = 7
    down_kernel: int = 3
    up_kernel: int = 3
    upsample: str = "nearest"  # "nearest" | "transposed"
    in_channels: int = 1
    out_channels: int = 1
    norm: str = "instance"  # "instance" | "none"
    image_size: int = 128

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.image_size % (2 ** self.levels) != 0:
            raise ValueError(
                f"image size {self.image_size} is not divisible by 2^{self.levels}")
        if self.upsample not in ("nearest", "transposed"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")
        if self.norm not in ("instance", "none"):
            raise ValueError(f"unknown norm {self.norm!r}")

    @property
    def widths(self) -> List[int]:
        return self.policy.widths(self.levels)

    @property
    def bottleneck_channels(self) -> int:
        return self.widths[-1]

    @classmethod
    def from_policy(cls, policy: ChannelPolicy, **kwargs) -> "GeneratorSpec":
        if isinstance(policy, Doubling):
            defaults = dict(down_kernel=4, up_kernel=4, upsample="transposed")
        else:
            defaults = dict(down_kernel=3, up_kernel=3, upsample="nearest")
        defaults.update(kwargs)
        return cls(policy=policy, **defaults)

    @classmethod
    def from_preset(cls, preset: int, **kwargs) -> "GeneratorSpec":
        if preset not in MODEL_PRESETS:
            raise ValueError(f"unknown preset {preset}; expected 1..9")
        return cls.from_policy(MODEL_PRESETS[preset], **kwargs)

    def to_kv(self) -> Dict[str, str]:
        return {
            "policy": str(self.policy),
            "levels": str(self.levels),
            "down_kernel": str(self.down_kernel),
            "up_kernel": str(self.up_kernel),
            "upsample": self.upsample,
            "in_channels": str(self.in_channels),
            "out_channels": str(self.out_channels),
            "norm": self.norm,
            "image_size": str(self.image_size),
        }

    @classmethod
    def from_kv(cls, kv: Dict[str, str]) -> "GeneratorSpec":
        return cls(policy=parse_policy(kv["policy"]), levels=int(kv["levels"]),
                   down_kernel=int(kv["down_kernel"]), up_kernel=int(kv["up_kernel"]),
                   upsample=kv["upsample"], in_channels=int(kv["in_channels"]),
                   out_channels=int(kv["out_channels"]), norm=kv["norm"],
                   image_size=int(kv["image_size"]))


@dataclass(frozen=True)
class DiscriminatorSpec:
    """PatchGAN discriminator: stride-2 conv stack ending in a logit patch map."""

    policy: ChannelPolicy
    in_channels: int = 1
    layers: int = 3
    kernel: int = 4

    @property
    def widths(self) -> List[int]:
        # 3 stride-2 layers plus one stride-1 layer before the head.
        return self.policy.widths(self.layers + 1)

    @classmethod
    def from_preset(cls, preset: int, **kwargs) -> "DiscriminatorSpec":
        if preset not in MODEL_PRESETS:
            raise ValueError(f"unknown preset {preset}; expected 1..9")
        return cls(policy=MODEL_PRESETS[preset], **kwargs)

    def to_kv(self) -> Dict[str, str]:
        return {"policy": str(self.policy), "in_channels": str(self.in_channels),
                "layers": str(self.layers), "kernel": str(self.kernel)}

    @classmethod
    def from_kv(cls, kv: Dict[str, str]) -> "DiscriminatorSpec":
        return cls(policy=parse_policy(kv["policy"]), in_channels=int(kv["in_channels"]),
                   layers=int(kv["layers"]), kernel=int(kv["kernel"]))


class _Norm(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(channels))
        self.offset = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        return ops.instance_norm(x, self.gain, self.offset)


class _DownBlock(nn.Module):
    """Stride-2 conv, optional instance norm, leaky ReLU."""

    def __init__(self, cin: int, cout: int, kernel: int, norm: bool):
        super().__init__()
        self.kernel = kernel
        self.weight = nn.Parameter(torch.empty(cout, cin, kernel, kernel))
        self.bias = None if norm else nn.Parameter(torch.empty(cout))
        self.norm = _Norm(cout) if norm else None

    def forward(self, x):
        x = ops.conv2d(x, self.weight, self.bias, stride=2, padding=(self.kernel - 1) // 2)
        if self.norm is not None:
            x = self.norm(x)
        return ops.activation(x, "leaky_relu", 0.2)


class _UpBlock(nn.Module):
    """2x upsampling block: nearest+conv3 or transposed conv4."""

    def __init__(self, cin: int, cout: int, mode: str, norm: bool, act: str):
        super().__init__()
        self.mode = mode
        self.act = act
        if mode == "nearest":
            self.weight = nn.Parameter(torch.empty(cout, cin, 3, 3))
        else:
            self.weight = nn.Parameter(torch.empty(cin, cout, 4, 4))
        self.bias = None if norm else nn.Parameter(torch.empty(cout))
        self.norm = _Norm(cout) if norm else None

    def forward(self, x):
        if self.mode == "nearest":
            x = ops.upsample_conv(x, self.weight, self.bias)
        else:
            x = ops.conv_transpose2d(x, self.weight, self.bias, stride=2, padding=1)
        if self.norm is not None:
            x = self.norm(x)
        return ops.activation(x, self.act)


class UnetGenerator(nn.Module):
    """Symmetric encoder-decoder U-Net with skip concatenation at every level.

    The innermost encoder output is 1x1 spatially at the default depth, so
    the first and last encoder layers skip normalization (a 1x1 instance
    norm would collapse the bottleneck to a constant).
    """

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        w = spec.widths
        L = spec.levels
        use_norm = spec.norm == "instance"
        self.downs = nn.ModuleList()
        for i in range(L):
            cin = spec.in_channels if i == 0 else w[i - 1]
            norm = use_norm and 0 < i < L - 1
            self.downs.append(_DownBlock(cin, w[i], spec.down_kernel, norm))
        self.ups = nn.ModuleList()
        for i in range(L - 1, 0, -1):
            cin = w[L - 1] if i == L - 1 else 2 * w[i]
            self.ups.append(_UpBlock(cin, w[i - 1], spec.upsample, use_norm, "relu"))
        self.head = _UpBlock(2 * w[0], spec.out_channels, spec.upsample, False, "tanh")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.spec.in_channels:
            raise ops.ShapeError(
                f"generator expects {self.spec.in_channels} input channels, got {x.shape[1]}")
        if x.shape[2] % (2 ** self.spec.levels) or x.shape[3] % (2 ** self.spec.levels):
            raise ops.ShapeError(
                f"input spatial dims {x.shape[2]}x{x.shape[3]} must be divisible by "
                f"2^{self.spec.levels}")
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
        z = skips[-1]
        for i, up in enumerate(self.ups):
            z = up(z)
            z = ops.concat_channels(z, skips[-2 - i])
        return self.head(z)


class PatchDiscriminator(nn.Module):
    """PatchGAN: stride-2 conv stack plus a stride-1 layer and a 1-logit head."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        w = spec.widths
        k = spec.kernel
        layers = []
        cin = spec.in_channels
        for i in range(spec.layers):
            layers.append(_DiscBlock(cin, w[i], k, stride=2, norm=i > 0))
            cin = w[i]
        layers.append(_DiscBlock(cin, w[spec.layers], k, stride=1, norm=True))
        self.blocks = nn.ModuleList(layers)
        self.head_weight = nn.Parameter(torch.empty(1, w[spec.layers], k, k))
        self.head_bias = nn.Parameter(torch.empty(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return ops.conv2d(x, self.head_weight, self.head_bias, stride=1, padding=1)


class _DiscBlock(nn.Module):
    def __init__(self, cin: int, cout: int, kernel: int, stride: int, norm: bool):
        super().__init__()
        self.stride = stride
        self.kernel = kernel
        self.weight = nn.Parameter(torch.empty(cout, cin, kernel, kernel))
        self.bias = None if norm else nn.Parameter(torch.empty(cout))
        self.norm = _Norm(cout) if norm else None

    def forward(self, x):
        x = ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=1)
        if self.norm is not None:
            x = self.norm(x)
        return ops.activation(x, "leaky_relu", 0.2)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic init: weights ~ N(0, 0.02), biases/offsets 0, gains 1.

    Iterates parameters in lexicographic name order so the draw sequence is
    independent of module construction order.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(module.named_parameters()):
            if name.endswith(".gain"):
                p.fill_(1.0)
            elif name.endswith((".bias", ".offset", "head_bias")):
                p.fill_(0.0)
            else:
                p.normal_(0.0, 0.02, generator=gen)


def build_generator(spec: GeneratorSpec, seed: int) -> Tuple[UnetGenerator, ParamDict]:
    net = UnetGenerator(spec)
    init_parameters(net, seed)
    return net, ops.named_parameters(net)


def build_discriminator(spec: DiscriminatorSpec, seed: int) -> Tuple[PatchDiscriminator, ParamDict]:
    net = PatchDiscriminator(spec)
    init_parameters(net, seed)
    return net, ops.named_parameters(net)


def count_parameters(params: ParamDict | nn.Module) -> int:
    """Exact number of scalar parameters."""
    if isinstance(params, nn.Module):
        params = ops.named_parameters(params)
    return sum(p.numel() for p in params.values())


def count_generator_parameters(spec: GeneratorSpec) -> int:
    """Closed-form parameter count of the generator defined by ``spec``."""
    w = spec.widths
    L = spec.levels
    use_norm = spec.norm == "instance"
    total = 0
    for i in range(L):
        cin = spec.in_channels if i == 0 else w[i - 1]
        normed = use_norm and 0 < i < L - 1
        total += cin * w[i] * spec.down_kernel ** 2
        total += 2 * w[i] if normed else w[i]
    k_up = 3 if spec.upsample == "nearest" else 4
    for i in range(L - 1, 0, -1):
        cin = w[L - 1] if i == L - 1 else 2 * w[i]
        total += cin * w[i - 1] * k_up ** 2
        total += 2 * w[i - 1] if use_norm else w[i - 1]
    total += 2 * w[0] * spec.out_channels * k_up ** 2 + spec.out_channels
    return total


def count_discriminator_parameters(spec: DiscriminatorSpec) -> int:
    """Closed-form parameter count of the PatchGAN defined by ``spec``."""
    w = spec.widths
    k = spec.kernel
    total = 0
    cin = spec.in_channels
    for i in range(spec.layers):
        total += cin * w[i] * k * k + (2 * w[i] if i > 0 else w[i])
        cin = w[i]
    total += cin * w[spec.layers] * k * k + 2 * w[spec.layers]
    total += w[spec.layers] * k * k + 1
    return total


MANIFEST_OVERHEAD_BYTES = 4096  # manifest text plus per-entry name/shape headers


def checkpoint_value_count(gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec,
                           trainer: str) -> int:
    """Number of float32 values in one checkpoint, optimizer state included."""
    n_networks = {"pix2pix": 1, "cyclegan": 2}
    if trainer not in n_networks:
        raise ValueError(f"unknown trainer {trainer!r}")
    n = n_networks[trainer]
    per_pair = count_generator_parameters(gen_spec) + count_discriminator_parameters(disc_spec)
    # parameters plus two Adam moment accumulators per parameter
    return n * per_pair * 3


def estimate_storage(gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec,
                     trainer: str, epochs: int, interval: int) -> int:
    """Projected checkpoint storage in bytes for a full training run."""
    if interval <= 0 or epochs % interval != 0:
        raise ValueError("checkpoint interval must divide epochs")
    n_checkpoints = epochs // interval
    per_checkpoint = 4 * checkpoint_value_count(gen_spec, disc_spec, trainer) \
        + MANIFEST_OVERHEAD_BYTES
    return n_checkpoints * per_checkpoint
