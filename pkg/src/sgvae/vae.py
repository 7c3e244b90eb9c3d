"""Total-correlation VAE with an autoregressive (dilated causal conv) decoder.

Inputs are wrapped phase trajectories (B, L). The decoder predicts, at every
position j, a Gaussian over the increment t_j = wrap(phi_j - phi_{j-1}) with
phi_0 = 0, from the latent code and phi_{<j} only.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .autodiff import ops
from .autodiff.ops import DTYPE
from .autodiff.optim import AdamState, adam_step, kaiming_init, one_cycle_lr
from .dataset import Dataset, wrap
from .errors import ConfigError, NumericAbort, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    L: int = 35
    channels: int = 16
    enc_kernel: int = 3
    enc_layers: int = 4
    pool_len: int = 16
    enc_mlp: tuple = (200, 100)
    latent: int = 6
    dec_mlp: tuple = (100, 200)
    cond_channels: int = 6
    ar_channels: int = 16
    ar_kernel: int = 4
    dilations: tuple = (1, 2, 4)
    dec_layers: int = 3

    def __post_init__(self):
        object.__setattr__(self, "enc_mlp", tuple(self.enc_mlp))
        object.__setattr__(self, "dec_mlp", tuple(self.dec_mlp))
        object.__setattr__(self, "dilations", tuple(self.dilations))
        if self.conv_len < self.pool_len:
            raise ConfigError(f"encoder output length {self.conv_len} shorter than pool_len {self.pool_len}")
        if self.shrink < self.dec_layers:
            raise ConfigError("decoder needs at least one length step per transposed conv")

    @property
    def shrink(self) -> int:
        return self.enc_layers * (self.enc_kernel - 1)

    @property
    def conv_len(self) -> int:
        return self.L - self.shrink

    @property
    def flat(self) -> int:
        return self.channels * 2 * self.pool_len

    @property
    def dec_kernels(self) -> tuple:
        """Transposed-conv kernel sizes that grow L - shrink back to L."""
        base, extra = divmod(self.shrink, self.dec_layers)
        return tuple(1 + base + (1 if i < extra else 0) for i in range(self.dec_layers))

    def to_dict(self):
        d = asdict(self)
        for k in ("enc_mlp", "dec_mlp", "dilations"):
            d[k] = list(d[k])
        return d

    def arch_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


TINY = ModelConfig(L=12, channels=2, enc_kernel=3, enc_layers=4, pool_len=2, enc_mlp=(5, 4), latent=2,
                   dec_mlp=(4, 5), cond_channels=2, ar_channels=2, dilations=(1, 2, 4))


class _Affine(nn.Module):
    def __init__(self, n_in, n_out):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(n_out, n_in, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(n_out, dtype=DTYPE))

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class _Conv(nn.Module):
    def __init__(self, c_in, c_out, k, transposed=False, dilation=1, causal=False):
        super().__init__()
        shape = (c_in, c_out, k) if transposed else (c_out, c_in, k)
        self.weight = nn.Parameter(torch.zeros(shape, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(c_out, dtype=DTYPE))
        self.transposed, self.dilation, self.causal = transposed, dilation, causal

    def forward(self, x):
        if self.transposed:
            return ops.transposed_conv1d(x, self.weight, self.bias)
        if self.causal:
            return ops.causal_dilated_conv1d(x, self.weight, self.bias, self.dilation)
        return ops.conv1d(x, self.weight, self.bias)


class VaeModel(nn.Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.enc_convs = nn.ModuleList(
            [_Conv(1 if i == 0 else c, c, cfg.enc_kernel) for i in range(cfg.enc_layers)]
        )
        sizes = (cfg.flat,) + cfg.enc_mlp
        self.enc_mlp = nn.ModuleList([_Affine(a, b) for a, b in zip(sizes, sizes[1:])])
        self.mu_head = _Affine(sizes[-1], cfg.latent)
        self.logvar_head = _Affine(sizes[-1], cfg.latent)
        sizes = (cfg.latent,) + cfg.dec_mlp + (cfg.flat,)
        self.dec_mlp = nn.ModuleList([_Affine(a, b) for a, b in zip(sizes, sizes[1:])])
        self.dec_convs = nn.ModuleList([_Conv(c, c, k, transposed=True) for k in cfg.dec_kernels])
        self.cond_out = _Conv(c, cfg.cond_channels, 1, transposed=True)
        a = cfg.ar_channels
        self.ar_convs = nn.ModuleList(
            [_Conv(1 if i == 0 else a, a, cfg.ar_kernel, dilation=d, causal=True) for i, d in enumerate(cfg.dilations)]
        )
        self.ar_cond = nn.ModuleList([_Conv(cfg.cond_channels, a, 1) for _ in cfg.dilations])
        self.ar_head = _Conv(a, 2, 1)

    # -- initialisation ----------------------------------------------------

    def initialize(self, seed: int):
        """Kaiming (fan-out) weights, zero biases, zero log-variance heads."""
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x1417,)))
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                    continue
                module = self.get_submodule(name.rsplit(".", 1)[0])
                p.copy_(kaiming_init(tuple(p.shape), rng, transposed=getattr(module, "transposed", False)))
            self.logvar_head.weight.zero_()
            self.logvar_head.bias.zero_()
            self.ar_head.weight[1].zero_()
            self.ar_head.bias[1] = 0.0
        return self

    # -- encoder -----------------------------------------------------------

    def encode(self, phases):
        """(mu, logvar), each (B, latent), from wrapped phases (B, L)."""
        if phases.dim() != 2 or phases.shape[1] != self.cfg.L:
            raise ShapeError(f"expected trajectories of shape (B, {self.cfg.L}), got {tuple(phases.shape)}")
        h = phases[:, None, :]
        for conv in self.enc_convs:
            h = ops.leaky_relu(conv(h))
        h = torch.cat([ops.adaptive_pool(h, self.cfg.pool_len, "avg"), ops.adaptive_pool(h, self.cfg.pool_len, "max")], dim=2)
        h = h.reshape(h.shape[0], -1)
        for layer in self.enc_mlp:
            h = ops.leaky_relu(layer(h))
        return self.mu_head(h), self.logvar_head(h)

    # -- decoder -----------------------------------------------------------

    def condition(self, z):
        """Upsampled conditioning tensor (B, cond_channels, L)."""
        h = z
        for layer in self.dec_mlp:
            h = ops.leaky_relu(layer(h))
        h = h.reshape(h.shape[0], self.cfg.channels, 2 * self.cfg.pool_len)
        h = ops.interpolate(h, self.cfg.conv_len)
        for conv in self.dec_convs:
            h = ops.leaky_relu(conv(h))
        return self.cond_out(h)

    def autoregress(self, shifted, cond):
        """Increment parameters (mu, logvar), each (B, L); ``shifted`` is (B, L) = [0, phi_1..phi_{L-1}]."""
        h = shifted[:, None, :]
        for i, (conv, proj) in enumerate(zip(self.ar_convs, self.ar_cond)):
            out = ops.leaky_relu(conv(h) + proj(cond))
            h = out if i == 0 else h + out
        out = self.ar_head(h)
        return out[:, 0], out[:, 1]

    def decode(self, z, phases):
        """Teacher-forced increment parameters (mu, sigma), each (B, L)."""
        if phases.dim() != 2 or phases.shape[1] != self.cfg.L:
            raise ShapeError(f"expected trajectories of shape (B, {self.cfg.L}), got {tuple(phases.shape)}")
        if z.dim() != 2 or z.shape != (phases.shape[0], self.cfg.latent):
            raise ShapeError(f"latent shape {tuple(z.shape)} does not match batch {phases.shape[0]} x {self.cfg.latent}")
        mu, logvar = self.autoregress(shift(phases), self.condition(z))
        return mu, torch.exp(0.5 * logvar)


def shift(phases):
    """[0, phi_1, ..., phi_{L-1}]: the decoder input aligned with its targets."""
    return torch.nn.functional.pad(phases[:, :-1], (1, 0))


def increment_targets(phases):
    """t_1 = phi_1 and t_j = wrap(phi_j - phi_{j-1})."""
    d = phases - shift(phases)
    return torch.remainder(d + math.pi, 2 * math.pi) - math.pi


def shape_walk(model: VaeModel, batch: int):
    """(row label, output shape) for each stage of a forward pass on zeros."""
    cfg = model.cfg
    rows = []
    with torch.no_grad():
        x = torch.zeros(batch, cfg.L, dtype=DTYPE)
        rows.append(("Input", (batch, 1, cfg.L)))
        h = x[:, None, :]
        for conv in model.enc_convs:
            h = ops.leaky_relu(conv(h))
        rows.append(("Conv stack", tuple(h.shape)))
        h = torch.cat([ops.adaptive_pool(h, cfg.pool_len, "avg"), ops.adaptive_pool(h, cfg.pool_len, "max")], dim=2)
        rows.append(("Adaptive pooling", tuple(h.shape)))
        h = h.reshape(batch, -1)
        rows.append(("Flatten", tuple(h.shape)))
        for layer in model.enc_mlp:
            h = ops.leaky_relu(layer(h))
        rows.append(("MLP", tuple(h.shape)))
        mu, logvar = model.mu_head(h), model.logvar_head(h)
        rows.append(("Latent distribution", tuple(torch.cat([mu, logvar], 1).shape)))
        rows.append(("Latent layer", tuple(mu.shape)))
        h = mu
        for layer in model.dec_mlp:
            h = ops.leaky_relu(layer(h))
        rows.append(("Decoder MLP", tuple(h.shape)))
        h = h.reshape(batch, cfg.channels, 2 * cfg.pool_len)
        rows.append(("Reshape", tuple(h.shape)))
        h = ops.interpolate(h, cfg.conv_len)
        rows.append(("Interpolation", tuple(h.shape)))
        for conv in model.dec_convs:
            h = ops.leaky_relu(conv(h))
        rows.append(("Transposed conv stack", tuple(h.shape)))
        cond = model.cond_out(h)
        rows.append(("Conditioning", tuple(cond.shape)))
        m, lv = model.autoregress(shift(x), cond)
        rows.append(("Autoregressive head", tuple(torch.stack([m, lv], 1).shape)))
    return rows


# -- loss ---------------------------------------------------------------------

@dataclass
class LossBreakdown:
    nll: torch.Tensor
    kl: torch.Tensor
    tc: torch.Tensor
    mi: torch.Tensor
    total: torch.Tensor
    beta: float
    gamma: float
    alpha: float

    def values(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("nll", "kl", "tc", "mi", "total")}


def reparameterize(mu, sigma, noise):
    return mu + sigma * noise.detach()


def kl_standard_normal(mu, logvar):
    """Per-sample KL[N(mu, sigma^2) || N(0, 1)] summed over latent dims, shape (B,)."""
    return 0.5 * (mu**2 + torch.exp(logvar) - 1.0 - logvar).sum(1)


def _log_normal(z, mu, logvar):
    return -0.5 * (math.log(2 * math.pi) + logvar + (z - mu) ** 2 * torch.exp(-logvar))


def tc_mi_estimates(z, mu, logvar, dataset_size):
    """Minibatch-weighted sampling estimates of total correlation and index-code MI.

    Sample i came from its own shot with weight 1/N; the other B-1 batch members
    stand in for the remaining N-1 shots. Weights sum to one, so a factorised
    aggregate posterior scores zero when the batch is the whole dataset.
    """
    B = z.shape[0]
    N = max(int(dataset_size), B)
    mat = _log_normal(z[:, None, :], mu[None, :, :], logvar[None, :, :])  # (B, B, D)
    logw = torch.full((B, B), math.log((N - 1) / (N * (B - 1))), dtype=z.dtype)
    logw.fill_diagonal_(-math.log(N))
    log_qz = torch.logsumexp(mat.sum(2) + logw, dim=1)
    log_prod = torch.logsumexp(mat + logw[:, :, None], dim=1).sum(1)
    log_qz_x = _log_normal(z, mu, logvar).sum(1)
    return (log_qz - log_prod).mean(), (log_qz_x - log_qz).mean()


def loss(model: VaeModel, phases, noise, dataset_size, beta=3.0, gamma=0.1, alpha=1e-4) -> LossBreakdown:
    """Minimised objective nll + beta*kl + gamma*tc + alpha*mi, averaged per trajectory."""
    B = phases.shape[0]
    if B < 2:
        raise ConfigError("the TC/MI estimators need a batch of at least 2 trajectories")
    mu, logvar = model.encode(phases)
    z = reparameterize(mu, torch.exp(0.5 * logvar), noise)
    m, s = model.decode(z, phases)
    nll = ops.gaussian_nll(increment_targets(phases), m, s) / B
    kl = kl_standard_normal(mu, logvar).mean()
    tc, mi = tc_mi_estimates(z, mu, logvar, dataset_size)
    total = nll + beta * kl + gamma * tc + alpha * mi
    return LossBreakdown(nll, kl, tc, mi, total, beta, gamma, alpha)


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 128
    max_lr: float = 5e-4
    batch: int = 512
    seed: int = 0
    beta: float = 3.0
    gamma: float = 0.1
    alpha: float = 1e-4
    validation_fraction: float = 0.1
    threads: int = 1
    kl_warmup: float = 0.0  # fraction of steps over which beta ramps linearly from 0

    def beta_at(self, step, total_steps):
        if self.kl_warmup <= 0 or total_steps == 0:
            return self.beta
        return self.beta * min(1.0, step / (self.kl_warmup * total_steps))

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 2 or self.threads < 1:
            raise ConfigError("epochs must be >= 0, batch >= 2 and threads >= 1")
        if self.max_lr <= 0:
            raise ConfigError(f"max_lr must be > 0, got {self.max_lr}")
        if min(self.beta, self.gamma, self.alpha) < 0:
            raise ConfigError("loss weights must be >= 0")
        if not (0 <= self.validation_fraction < 1):
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if not (0 <= self.kl_warmup <= 1):
            raise ConfigError("kl_warmup must lie in [0, 1]")


HISTORY_COLUMNS = ("epoch", "nll", "kl", "tc", "mi", "total", "lr")


def stratified_split(ds: Dataset, fraction: float, seed: int):
    """Shot indices (train, validation), with validation drawn per Q level."""
    if fraction == 0:
        return np.arange(len(ds)), np.arange(0)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5917,)))
    levels = ds.spec.get("dataset_spec", {}).get("shots_per_Q")
    keys = ds.shot_id // levels if levels else np.round(ds.Q, 1)
    val = []
    for key in np.unique(keys):
        idx = np.flatnonzero(keys == key)
        n_val = int(round(fraction * len(idx)))
        val.extend(rng.permutation(idx)[:n_val].tolist())
    val = np.sort(np.asarray(val, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(ds)), val)
    return train, val


def median_sigma(model: VaeModel, phases) -> np.ndarray:
    _, sigma = encode(model, phases)
    return np.median(sigma, axis=0)


def train(model: VaeModel, ds: Dataset, cfg: TrainConfig, progress=None):
    """Adam + one-cycle training; returns (model, history rows)."""
    torch.set_num_threads(cfg.threads)
    if ds.L != model.cfg.L:
        raise ShapeError(f"dataset length {ds.L} does not match model L={model.cfg.L}")
    train_idx, val_idx = stratified_split(ds, cfg.validation_fraction, cfg.seed)
    x_train = torch.from_numpy(ds.phases[train_idx])
    x_val = torch.from_numpy(ds.phases[val_idx])
    n = len(train_idx)
    if cfg.epochs and n < cfg.batch:
        raise ConfigError(f"training set of {n} shots is smaller than the batch size {cfg.batch}")
    per_epoch = n // cfg.batch if cfg.epochs else 0
    total_steps = cfg.epochs * per_epoch
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(0x7241,)))
    noise_gen = torch.Generator().manual_seed(int(cfg.seed))
    params = list(model.parameters())
    state = AdamState()
    history = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sums = dict.fromkeys(("nll", "kl", "tc", "mi", "total"), 0.0)
        lr = 0.0
        for b in range(per_epoch):
            batch = x_train[order[b * cfg.batch:(b + 1) * cfg.batch]]
            noise = torch.randn(batch.shape[0], model.cfg.latent, generator=noise_gen, dtype=DTYPE)
            lr = one_cycle_lr(step, total_steps, cfg.max_lr)
            out = loss(model, batch, noise, n, cfg.beta_at(step, total_steps), cfg.gamma, cfg.alpha)
            if not torch.isfinite(out.total):
                raise NumericAbort(f"non-finite loss at epoch {epoch}, batch {b}, lr {lr:.3e}")
            grads = torch.autograd.grad(out.total, params)
            adam_step(params, grads, state, lr)
            step += 1
            for k, v in out.values().items():
                sums[k] += v
        row = {"epoch": epoch, **{k: v / per_epoch for k, v in sums.items()}, "lr": lr}
        for i, s in enumerate(median_sigma(model, x_train)):
            row[f"sigma_{i + 1}"] = float(s)
        if len(val_idx) >= 2:
            with torch.no_grad():
                vnoise = torch.zeros(len(val_idx), model.cfg.latent, dtype=DTYPE)
                row["val_total"] = float(loss(model, x_val, vnoise, n, cfg.beta, cfg.gamma, cfg.alpha).total)
        history.append(row)
        if progress:
            progress(row)
        log.debug("epoch %d total %.4f", epoch, row["total"])
    return model, history


# -- inference ----------------------------------------------------------------

def _as_tensor(phases):
    if isinstance(phases, Dataset):
        phases = phases.phases
    if isinstance(phases, torch.Tensor):
        return phases.to(DTYPE)
    return torch.from_numpy(np.ascontiguousarray(phases, dtype=np.float64))


def encode(model: VaeModel, phases, chunk=4096):
    """Posterior (mu, sigma) as numpy arrays of shape (N, latent)."""
    x = _as_tensor(phases)
    mus, sigmas = [], []
    with torch.no_grad():
        for i in range(0, x.shape[0], chunk):
            mu, logvar = model.encode(x[i:i + chunk])
            mus.append(mu)
            sigmas.append(torch.exp(0.5 * logvar))
    if not mus:
        return np.zeros((0, model.cfg.latent)), np.zeros((0, model.cfg.latent))
    return torch.cat(mus).numpy(), torch.cat(sigmas).numpy()


def decode_teacher_forced(model: VaeModel, z, phases):
    with torch.no_grad():
        mu, sigma = model.decode(_as_tensor(z), _as_tensor(phases))
    return mu.numpy(), sigma.numpy()


def generate(model: VaeModel, z, n_samples: int, seed: int, deterministic=False, pixel_size=2.0) -> Dataset:
    """Sample trajectories sequentially from the decoder at a fixed latent vector."""
    from .sampler import shot_rng

    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape != (model.cfg.latent,):
        raise ShapeError(f"latent vector must have {model.cfg.latent} entries, got {z.shape}")
    L = model.cfg.L
    noise = np.stack([shot_rng(seed, i).standard_normal(L) for i in range(n_samples)]) if n_samples else np.zeros((0, L))
    if deterministic:
        noise[:] = 0.0
    noise = torch.from_numpy(noise)
    unwrapped = torch.zeros(n_samples, L, dtype=DTYPE)
    with torch.no_grad():
        cond = model.condition(torch.from_numpy(np.tile(z, (n_samples, 1))))
        for j in range(L):
            inputs = shift(torch.remainder(unwrapped + math.pi, 2 * math.pi) - math.pi)
            mu, logvar = model.autoregress(inputs, cond)
            prev = unwrapped[:, j - 1] if j else torch.zeros(n_samples, dtype=DTYPE)
            unwrapped[:, j] = prev + mu[:, j] + torch.exp(0.5 * logvar[:, j]) * noise[:, j]
    spec = {"z": z.tolist(), "seed": int(seed), "deterministic": bool(deterministic)}
    return Dataset.from_phases(wrap(unwrapped.numpy()), pixel_size=pixel_size, kind="generated", seed=seed, spec=spec)


def model_manifest(model: VaeModel, cfg: TrainConfig | None = None, history=None, data_spec=None) -> dict:
    from .autodiff.checkpoint import state_checksum

    manifest = {
        "arch_hash": model.cfg.arch_hash(),
        "model_config": model.cfg.to_dict(),
        "L": model.cfg.L,
        "latent": model.cfg.latent,
        "param_checksum": state_checksum(model.state_dict()),
    }
    if cfg is not None:
        manifest["train_config"] = asdict(cfg)
    if history:
        last = history[-1]
        manifest["final_median_sigma"] = [last[f"sigma_{i + 1}"] for i in range(model.cfg.latent)]
    if data_spec is not None:
        manifest["data_drift_sign"] = data_spec.get("drift_sign")
    return manifest


def model_from_state(state: dict, manifest: dict) -> VaeModel:
    cfg = ModelConfig(**manifest["model_config"])
    model = VaeModel(cfg)
    model.load_state_dict(state)
    return model
