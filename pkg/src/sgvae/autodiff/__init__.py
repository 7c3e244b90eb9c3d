"""Float64 tensor kernels, optimiser and schedule used by the VAE."""
from .gradcheck import grad_check
from .ops import (
    DTYPE,
    adaptive_pool,
    causal_dilated_conv1d,
    conv1d,
    gaussian_nll,
    interpolate,
    leaky_relu,
    linear,
    pool_bins,
    receptive_field,
    transposed_conv1d,
)
from .optim import AdamState, adam_step, fan_out, kaiming_init, one_cycle_lr

__all__ = [
    "DTYPE", "AdamState", "adam_step", "adaptive_pool", "causal_dilated_conv1d", "conv1d", "fan_out",
    "gaussian_nll", "grad_check", "interpolate", "kaiming_init", "leaky_relu", "linear", "one_cycle_lr",
    "pool_bins", "receptive_field", "transposed_conv1d",
]
