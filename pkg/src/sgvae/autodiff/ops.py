"""Differentiable 1-D network primitives on float64 torch tensors.

Torch autograd provides the tape; these wrappers pin down the conventions the
model relies on (shape checks, causal padding, the pooling partition rule)
and raise :class:`ShapeError` with both shapes on mismatch.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from ..errors import NumericAbort, ShapeError

DTYPE = torch.float64
LEAKY_SLOPE = 0.01


def _check_conv(x, weight, bias, transposed=False):
    if x.dim() != 3:
        raise ShapeError(f"expected input of shape (B, C, L), got {tuple(x.shape)}")
    if weight.dim() != 3:
        raise ShapeError(f"expected kernel of shape (C_out, C_in, k), got {tuple(weight.shape)}")
    c_in = weight.shape[0] if transposed else weight.shape[1]
    if x.shape[1] != c_in:
        raise ShapeError(f"input channels {x.shape[1]} do not match kernel {tuple(weight.shape)} (input {tuple(x.shape)})")
    c_out = weight.shape[1] if transposed else weight.shape[0]
    if bias is not None and tuple(bias.shape) != (c_out,):
        raise ShapeError(f"bias shape {tuple(bias.shape)} does not match kernel {tuple(weight.shape)}")


def conv_out_len(L, k, stride=1, padding=0, dilation=1):
    return (L + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv1d(x, weight, bias=None, stride=1, padding=0, dilation=1):
    """Cross-correlation; weight is (C_out, C_in, k)."""
    _check_conv(x, weight, bias)
    if conv_out_len(x.shape[2], weight.shape[2], stride, padding, dilation) < 1:
        raise ShapeError(f"kernel {tuple(weight.shape)} (dilation {dilation}) longer than input {tuple(x.shape)}")
    return F.conv1d(x, weight, bias, stride=stride, padding=padding, dilation=dilation)


def causal_dilated_conv1d(x, weight, bias=None, dilation=1):
    """Same-length convolution where output j sees only inputs <= j."""
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    _check_conv(x, weight, bias)
    pad = dilation * (weight.shape[2] - 1)
    return F.conv1d(F.pad(x, (pad, 0)), weight, bias, dilation=dilation)


def transposed_conv1d(x, weight, bias=None, stride=1, padding=0):
    """Adjoint of :func:`conv1d`; weight is (C_in, C_out, k) as for the forward conv it transposes."""
    _check_conv(x, weight, bias, transposed=True)
    return F.conv_transpose1d(x, weight, bias, stride=stride, padding=padding)


def receptive_field(kernel_size, dilations):
    return 1 + (kernel_size - 1) * sum(dilations)


def pool_bins(L, out_len):
    """Contiguous partition of range(L) into out_len bins with sizes differing by at most one.

    Bin i covers [floor(i L / out_len), floor((i+1) L / out_len)).
    """
    if out_len > L or out_len < 1:
        raise ShapeError(f"adaptive pooling to {out_len} bins needs 1 <= out_len <= L={L}")
    edges = [(i * L) // out_len for i in range(out_len + 1)]
    return [(edges[i], edges[i + 1]) for i in range(out_len)]


def _bin_index(L, out_len, device):
    bins = pool_bins(L, out_len)
    width = max(b - a for a, b in bins)
    idx = torch.zeros(out_len, width, dtype=torch.long, device=device)
    mask = torch.zeros(out_len, width, dtype=torch.bool, device=device)
    for i, (a, b) in enumerate(bins):
        idx[i, :b - a] = torch.arange(a, b)
        idx[i, b - a:] = a
        mask[i, :b - a] = True
    return idx, mask


def adaptive_pool(x, out_len, mode="avg"):
    if x.dim() != 3:
        raise ShapeError(f"expected input of shape (B, C, L), got {tuple(x.shape)}")
    idx, mask = _bin_index(x.shape[2], out_len, x.device)
    g = x[:, :, idx]  # (B, C, out_len, width)
    if mode == "avg":
        return (g * mask).sum(-1) / mask.sum(-1)
    if mode == "max":
        return g.masked_fill(~mask, -math.inf).amax(-1)
    raise ValueError(f"unknown pooling mode {mode!r}")


def linear(x, weight, bias=None):
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"input {tuple(x.shape)} does not match weight {tuple(weight.shape)}")
    return F.linear(x, weight, bias)


def leaky_relu(x, slope=LEAKY_SLOPE):
    return F.leaky_relu(x, slope)


def interpolate(x, size):
    """Linear interpolation along the length axis with endpoints aligned."""
    if x.dim() != 3:
        raise ShapeError(f"expected input of shape (B, C, L), got {tuple(x.shape)}")
    return F.interpolate(x, size=size, mode="linear", align_corners=True)


def gaussian_nll(target, mu, sigma):
    """Sum over all elements of log(sigma sqrt(2 pi)) + (target - mu)^2 / (2 sigma^2)."""
    if target.shape != mu.shape or mu.shape != sigma.shape:
        raise ShapeError(f"shape mismatch: target {tuple(target.shape)}, mu {tuple(mu.shape)}, sigma {tuple(sigma.shape)}")
    if not bool(torch.all(sigma > 0)):
        raise NumericAbort("gaussian_nll received non-positive sigma")
    return (torch.log(sigma) + 0.5 * math.log(2 * math.pi) + 0.5 * ((target - mu) / sigma) ** 2).sum()
