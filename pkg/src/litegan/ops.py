"""Differentiable tensor operations, Adam, and gradient checking.

All network math runs through the functions here so that the gradient
checks in the test suite cover exactly the code paths used in training.
Tensors are NCHW float32 torch tensors on CPU; analytic gradients come
from autograd and are verified against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import torch
import torch.nn.functional as F

ParamDict = Dict[str, torch.Tensor]


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible with an operation."""


def _require_4d(x: torch.Tensor, name: str) -> None:
    if x.dim() != 4:
        raise ShapeError(f"{name}: expected a 4-D (N,C,H,W) tensor, got shape {tuple(x.shape)}")


def conv2d(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None,
           stride: int = 1, padding: int = 0) -> torch.Tensor:
    """2-D convolution; weight is (Cout, Cin, k, k)."""
    _require_4d(x, "conv2d input")
    if weight.dim() != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d: weight must be (Cout, Cin, k, k), got {tuple(weight.shape)}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv2d: input has {x.shape[1]} channels but weight expects {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias shape {tuple(bias.shape)} != ({weight.shape[0]},)")
    return F.conv2d(x, weight, bias, stride=stride, padding=padding)


def conv_transpose2d(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None,
                     stride: int = 2, padding: int = 1) -> torch.Tensor:
    """Transposed 2-D convolution; weight is (Cin, Cout, k, k)."""
    _require_4d(x, "conv_transpose2d input")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"conv_transpose2d: input has {x.shape[1]} channels but weight expects {weight.shape[0]}")
    return F.conv_transpose2d(x, weight, bias, stride=stride, padding=padding)


def upsample_nearest2(x: torch.Tensor) -> torch.Tensor:
    """Nearest-neighbor upsampling by a factor of 2."""
    _require_4d(x, "upsample input")
    return x.repeat_interleave(2, dim=2).repeat_interleave(2, dim=3)


def upsample_conv(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None,
                  factor: int = 2) -> torch.Tensor:
    """Nearest-neighbor upsample followed by a same-size 3x3 convolution."""
    if factor != 2:
        raise ValueError(f"upsample_conv: only factor=2 is supported, got {factor}")
    if weight.shape[2] != 3 or weight.shape[3] != 3:
        raise ShapeError(f"upsample_conv: weight kernel must be 3x3, got {tuple(weight.shape)}")
    return conv2d(upsample_nearest2(x), weight, bias, stride=1, padding=1)


def instance_norm(x: torch.Tensor, gain: torch.Tensor, offset: torch.Tensor,
                  eps: float = 1e-5) -> torch.Tensor:
    """Per-sample, per-channel normalization over spatial dimensions."""
    _require_4d(x, "instance_norm input")
    if gain.shape != (x.shape[1],) or offset.shape != (x.shape[1],):
        raise ShapeError(
            f"instance_norm: gain/offset must have shape ({x.shape[1]},), "
            f"got {tuple(gain.shape)} and {tuple(offset.shape)}")
    if eps <= 0:
        raise ValueError("instance_norm: eps must be > 0")
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    xhat = (x - mean) / torch.sqrt(var + eps)
    return xhat * gain.view(1, -1, 1, 1) + offset.view(1, -1, 1, 1)


def activation(x: torch.Tensor, kind: str, alpha: float = 0.2) -> torch.Tensor:
    """Elementwise activation; subgradient at kinks is taken as the right limit."""
    if kind == "leaky_relu":
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"leaky_relu slope must be in (0, 1), got {alpha}")
        return F.leaky_relu(x, negative_slope=alpha)
    if kind == "relu":
        return F.relu(x)
    if kind == "tanh":
        return torch.tanh(x)
    if kind == "sigmoid":
        return torch.sigmoid(x)
    raise ValueError(f"unknown activation kind: {kind!r}")


def concat_channels(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Concatenate two tensors along the channel axis; a's channels come first."""
    _require_4d(a, "concat_channels a")
    _require_4d(b, "concat_channels b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"concat_channels: batch/spatial dims must agree, got {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.cat([a, b], dim=1)


def named_parameters(module: torch.nn.Module) -> ParamDict:
    """Parameters of a module as a name-sorted dict (deterministic iteration)."""
    return {name: p for name, p in sorted(module.named_parameters())}


@dataclass
class AdamState:
    """First/second-moment accumulators and step counter for a parameter set."""

    m: ParamDict = field(default_factory=dict)
    v: ParamDict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamDict) -> "AdamState":
        return cls(m={n: torch.zeros_like(p) for n, p in params.items()},
                   v={n: torch.zeros_like(p) for n, p in params.items()},
                   step=0)


def adam_step(params: ParamDict, grads: ParamDict, state: AdamState,
              lr: float = 2e-4, beta1: float = 0.5, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place.

    Rejects the whole step if any gradient is non-finite so a diverging run
    fails loudly instead of silently poisoning the parameters.
    """
    if lr <= 0:
        raise ValueError("adam_step: lr must be > 0")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("adam_step: betas must lie in [0, 1)")
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state.m[name]
            v = state.v[name]
            m.mul_(beta1).add_(g, alpha=1 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
            m_hat = m / (1 - beta1 ** t)
            v_hat = v / (1 - beta2 ** t)
            p.data.add_(-lr * m_hat / (v_hat.sqrt() + eps))


def grad_check(fragment: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor,
               params: ParamDict | None = None, step: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    The scalar loss is a fixed-coefficient weighted sum of the fragment's
    output (a plain sum would have a null space for mean-removing ops like
    instance norm, hiding gradient errors behind cancellation). Run in
    float64 so the finite-difference reference itself is accurate; the
    relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    x = x.detach().double().requires_grad_(True)

    def scalar_loss(out: torch.Tensor) -> torch.Tensor:
        coeffs = torch.cos(torch.arange(out.numel(), dtype=torch.float64))
        return (out.reshape(-1) * coeffs).sum()

    loss = scalar_loss(fragment(x))
    grad_inputs = [x] + ([] if params is None else list(params.values()))
    analytic = torch.autograd.grad(loss, grad_inputs, allow_unused=False)

    def numeric_grad(tensor: torch.Tensor) -> torch.Tensor:
        num = torch.zeros_like(tensor)
        flat = tensor.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            f_plus = scalar_loss(fragment(x.detach())).item()
            flat[i] = orig - step
            f_minus = scalar_loss(fragment(x.detach())).item()
            flat[i] = orig
            num.view(-1)[i] = (f_plus - f_minus) / (2 * step)
        return num

    max_err = 0.0
    for tensor, ana in zip(grad_inputs, analytic):
        num = numeric_grad(tensor)
        denom = torch.maximum(torch.maximum(ana.abs(), num.abs()),
                              torch.full_like(ana, 1e-8))
        max_err = max(max_err, ((ana - num).abs() / denom).max().item())
    return max_err
