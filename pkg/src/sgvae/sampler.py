"""Synthetic phase trajectories: Ito sampling, imaging model, defects, datasets.

Lengths are in um and phases in radians. Shots draw their random numbers from
a stream derived from ``(seed, shot_index)`` only, so a dataset does not
depend on chunking or worker count.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import Dataset, wrap
from .errors import ConfigError, SolverError
from .transfer import GroundState, SgParams, cached_ground_state, stationary_density

TABLE_SIZE = 2048
DATASET_KINDS = ("equilibrium", "soliton_injected", "ood_uniform", "ood_quench_proxy")


@dataclass(frozen=True)
class ImagingConfig:
    sigma_psf: float = 3.0
    pixel_size: float = 2.0
    L: int = 35

    def __post_init__(self):
        if self.sigma_psf < 0:
            raise ConfigError(f"sigma_psf must be >= 0, got {self.sigma_psf}")
        if self.pixel_size <= 0:
            raise ConfigError(f"pixel_size must be > 0, got {self.pixel_size}")
        if self.L < 2:
            raise ConfigError(f"L must be >= 2, got {self.L}")

    def min_extent(self) -> float:
        # Kernel truncated at +-4 sigma on both sides of the pixel window.
        return self.L * self.pixel_size + 8.0 * self.sigma_psf


@dataclass
class FineField:
    """Unwrapped phase on the grid x_i = i * dx_fine, i = 0..n-1."""

    phases: np.ndarray
    dx_fine: float

    @property
    def extent(self) -> float:
        return (len(self.phases) - 1) * self.dx_fine

    @property
    def x(self) -> np.ndarray:
        return np.arange(len(self.phases)) * self.dx_fine


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "equilibrium"
    Q_values: tuple = (4.0,)
    shots_per_Q: int = 1000
    fluctuation: float = 0.08
    seed: int = 0
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    lambda_T: float = 25.0
    dx_fine: float = 0.1
    soliton_mean: float = 1.0
    soliton_width: float | None = None  # um; None -> l_J / sqrt(2)
    relax_length: float = 5.0  # quench proxy relaxation distance, um

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        object.__setattr__(self, "Q_values", tuple(float(q) for q in self.Q_values))
        if not self.Q_values:
            raise ConfigError("Q_values must not be empty")
        if any(not (q >= 0.0 and np.isfinite(q)) for q in self.Q_values):
            raise ConfigError(f"Q_values must be finite and >= 0, got {self.Q_values}")
        if self.shots_per_Q < 1:
            raise ConfigError(f"shots_per_Q must be >= 1, got {self.shots_per_Q}")
        if self.fluctuation < 0:
            raise ConfigError(f"fluctuation must be >= 0, got {self.fluctuation}")
        if self.soliton_mean < 0 or self.relax_length < 0:
            raise ConfigError("soliton_mean and relax_length must be >= 0")
        if isinstance(self.imaging, dict):
            object.__setattr__(self, "imaging", ImagingConfig(**self.imaging))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["Q_values"] = list(self.Q_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        if "imaging" in d and isinstance(d["imaging"], dict):
            d["imaging"] = ImagingConfig(**d["imaging"])
        return cls(**d)


def shot_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one shot, keyed on (seed, index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


# -- drift tables ---------------------------------------------------------------

_GRID = -math.pi + 2.0 * math.pi * np.arange(TABLE_SIZE) / TABLE_SIZE
_EDGES = np.append(_GRID, math.pi)


@functools.lru_cache(maxsize=2048)
def _tables(Q: float):
    """(d ln Psi0 / dphi on the grid, cumulative density on grid edges) for coupling Q."""
    return _tables_for(cached_ground_state(Q))


def _tables_for(gs: GroundState):
    psi, dpsi = gs.on_grid(TABLE_SIZE)
    if psi.min() <= 0:
        raise SolverError(f"ground state not positive on the grid at Q={gs.Q} (min {psi.min():.3e})")
    logd = dpsi / psi
    dens = psi**2
    # Trapezoid cell masses on the periodic grid.
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens + np.roll(dens, -1)))])
    cdf /= cdf[-1]
    logd.setflags(write=False)
    cdf.setflags(write=False)
    return logd, cdf


def _interp_periodic(tables, phi):
    """Row-wise linear interpolation of periodic tables (n, G) at phases phi (n,)."""
    h = 2.0 * math.pi / TABLE_SIZE
    u = (wrap(phi) + math.pi) / h
    i0 = np.floor(u).astype(np.int64) % TABLE_SIZE
    f = u - np.floor(u)
    rows = np.arange(tables.shape[0])
    return tables[rows, i0] * (1.0 - f) + tables[rows, (i0 + 1) % TABLE_SIZE] * f


def sample_stationary(Q: float, u):
    """Inverse-CDF draw from |Psi0|^2 given uniforms u in [0, 1)."""
    _, cdf = _tables(Q)
    return np.interp(u, cdf, _EDGES)


def euler_maruyama(logd_tables, two_D, phi0, noise, dx, sign=None):
    """Vectorised paths of dphi = sign*2D*(ln Psi0)'(phi) dx + sqrt(2 D dx) N(0,1).

    logd_tables: (n, G); two_D, phi0: (n,); noise: (n, steps). Returns (n, steps+1).
    """
    if sign is None:
        sign = drift_sign()
    n, steps = noise.shape
    out = np.empty((n, steps + 1))
    out[:, 0] = phi0
    amp = np.sqrt(two_D * dx)
    gain = sign * two_D * dx
    phi = np.array(phi0, dtype=np.float64)
    for s in range(steps):
        phi = phi + gain * _interp_periodic(logd_tables, phi) + amp * noise[:, s]
        out[:, s + 1] = phi
    return out


def stationary_chains(params: SgParams, chains: int, steps: int, dx: float, seed, sign=None) -> np.ndarray:
    """Independent Euler-Maruyama chains started from |Psi0|^2, shape (chains, steps + 1), unwrapped."""
    _check_step(params, dx)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    logd, _ = _tables(params.Q)
    phi0 = sample_stationary(params.Q, rng.random(chains))
    noise = rng.standard_normal((chains, steps))
    return euler_maruyama(np.broadcast_to(logd, (chains, TABLE_SIZE)), np.full(chains, 2.0 * params.D), phi0,
                          noise, dx, sign)


def _check_step(params: SgParams, dx_fine: float):
    limit = min(0.05 * params.lambda_T, 0.2 * params.l_J)
    if not (0 < dx_fine <= limit * (1 + 1e-12)):
        raise ConfigError(
            f"dx_fine={dx_fine} violates dx <= min(0.05 lambda_T, 0.2 l_J) = {limit:.4g} "
            f"(Q={params.Q:.4g}, lambda_T={params.lambda_T:.4g})"
        )


def integrate_ito(gs: GroundState, params: SgParams, extent: float, dx_fine: float, seed, sign=None) -> FineField:
    """Euler-Maruyama path over [0, extent] started from the stationary density.

    ``seed`` may be an int or a numpy Generator.
    """
    _check_step(params, dx_fine)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    steps = int(round(extent / dx_fine))
    logd, cdf = _tables_for(gs)
    phi0 = np.interp(rng.random(1), cdf, _EDGES)
    noise = rng.standard_normal((1, steps))
    path = euler_maruyama(logd[None, :], np.array([2.0 * params.D]), phi0, noise, dx_fine, sign)
    return FineField(path[0], dx_fine)


@functools.lru_cache(maxsize=1)
def drift_sign() -> int:
    """Sign of the drift that makes |Psi0|^2 stationary, chosen by simulation.

    Both signs are run from the stationary density at Q = 4; the one whose
    wrapped histogram stays closer (total variation) to |Psi0|^2 wins.
    """
    return _resolve_drift_sign()[0]


def _resolve_drift_sign(Q=4.0, chains=256, steps=2000, dx=0.005, bins=32):
    rng = np.random.default_rng(20240601)
    logd, _ = _tables(Q)
    tables = np.broadcast_to(logd, (chains, TABLE_SIZE))
    phi0 = sample_stationary(Q, rng.random(chains))
    noise = rng.standard_normal((chains, steps))
    gs = cached_ground_state(Q)
    tv = {}
    for sign in (+1, -1):
        paths = euler_maruyama(tables, np.full(chains, 4.0), phi0, noise, dx, sign)
        tv[sign] = histogram_tv(wrap(paths[:, steps // 2:]).ravel(), gs, bins)
    best = min(tv, key=tv.get)
    return best, tv


def histogram_tv(phases, gs: GroundState, bins=64) -> float:
    """Total-variation distance between a histogram of wrapped phases and |Psi0|^2."""
    edges = np.linspace(-math.pi, math.pi, bins + 1)
    counts, _ = np.histogram(wrap(phases), bins=edges)
    emp = counts / counts.sum()
    # Exact bin masses from the density (Simpson on a fine sub-grid).
    fine = np.linspace(-math.pi, math.pi, bins * 64 + 1)
    dens = stationary_density(gs, fine)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))])
    mass = np.diff(cum[::64])
    mass /= mass.sum()
    return 0.5 * float(np.abs(emp - mass).sum())


# -- imaging ------------------------------------------------------------------

def gaussian_kernel(sigma: float, dx: float) -> np.ndarray:
    if sigma == 0:
        return np.ones(1)
    half = int(math.ceil(4.0 * sigma / dx))
    x = dx * np.arange(-half, half + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _pixel_ratio(cfg: ImagingConfig, dx: float) -> int:
    ratio = cfg.pixel_size / dx
    n_per = int(round(ratio))
    if n_per < 1 or abs(ratio - n_per) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"pixel_size {cfg.pixel_size} must be an integer multiple of dx_fine {dx}")
    return n_per


def image_fine(phases: np.ndarray, dx: float, cfg: ImagingConfig, wrap_output=True) -> np.ndarray:
    """Blur + boxcar-average rows of unwrapped fine fields (n, m) into (n, L) pixels.

    The pixel window is centred in the field.
    """
    phases = np.atleast_2d(phases)
    n_fine = phases.shape[1]
    n_per = _pixel_ratio(cfg, dx)
    kernel = gaussian_kernel(cfg.sigma_psf, dx)
    half = (len(kernel) - 1) // 2
    window = cfg.L * n_per
    start = (n_fine - window) // 2
    if start < half or start + window + half > n_fine:
        raise ConfigError(
            f"fine field extent {(n_fine - 1) * dx:.4g} um is too short for imaging; "
            f"need at least {cfg.min_extent():.4g} um"
        )
    seg = phases[:, start - half:start + window + half]
    if half:
        # Valid-mode correlation with the symmetric kernel.
        cs = np.lib.stride_tricks.sliding_window_view(seg, len(kernel), axis=1)
        blurred = cs @ kernel
    else:
        blurred = seg
    pixels = blurred.reshape(phases.shape[0], cfg.L, n_per).mean(axis=2)
    return wrap(pixels) if wrap_output else pixels


def apply_imaging(fine: FineField, cfg: ImagingConfig):
    from .dataset import Trajectory

    pixels = image_fine(fine.phases[None, :], fine.dx_fine, cfg)[0]
    return Trajectory(pixels, cfg.pixel_size, {})


def sample_without_imaging(fine: FineField, cfg: ImagingConfig) -> np.ndarray:
    """Point samples of the unwrapped field at the pixel centres (no blur, no averaging)."""
    n_per = _pixel_ratio(cfg, fine.dx_fine)
    window = cfg.L * n_per
    start = (len(fine.phases) - window) // 2
    return fine.phases[start + n_per // 2:start + window:n_per]


# -- defects ------------------------------------------------------------------

def kink_profile(x, x0: float, width: float, charge: int):
    return charge * 4.0 * np.arctan(np.exp((np.asarray(x) - x0) / width))


def inject_soliton(fine: FineField, x0: float, width: float, charge: int) -> FineField:
    if not (0.0 <= x0 <= fine.extent):
        raise ConfigError(f"kink position {x0} outside field extent [0, {fine.extent}]")
    if width <= 0:
        raise ConfigError(f"kink width must be > 0, got {width}")
    if charge not in (1, -1):
        raise ConfigError(f"kink charge must be +1 or -1, got {charge}")
    return FineField(fine.phases + kink_profile(fine.x, x0, width, charge), fine.dx_fine)


# -- datasets -----------------------------------------------------------------

def _fine_points(spec: DatasetSpec, dx: float) -> int:
    cfg = spec.imaging
    n_per = _pixel_ratio(cfg, dx)
    half = len(gaussian_kernel(cfg.sigma_psf, dx)) // 2
    return cfg.L * n_per + 2 * half + 2 * n_per


def _level_dx(spec: DatasetSpec, Q: float) -> float:
    """Fine step for one Q level, shrunk (by integer division of the pixel) if needed."""
    f = spec.fluctuation
    q_max = Q * math.exp(4 * f)
    lam_min = spec.lambda_T * math.exp(-4 * f)
    limit = min(spec.dx_fine, 0.05 * lam_min, 0.2 * lam_min / q_max if q_max > 0 else math.inf)
    n_per = int(math.ceil(spec.imaging.pixel_size / limit - 1e-9))
    return spec.imaging.pixel_size / n_per


def _jitter(rng, value, f):
    return value * math.exp(f * rng.standard_normal()) if f > 0 else value


def _uniform_nodes(rng, n_nodes):
    """Pixel-spaced i.i.d. uniform wrapped phases."""
    return rng.uniform(-math.pi, math.pi, n_nodes)


def _join_nearest(nodes):
    """Continue wrapped node values along the last axis on the nearest branch, as a phase unwrapper would."""
    nodes = wrap(nodes)
    steps = np.cumsum(wrap(np.diff(nodes, axis=-1)), axis=-1)
    return nodes[..., :1] + np.concatenate([np.zeros(nodes.shape[:-1] + (1,)), steps], axis=-1)


def _nodes_to_fine(nodes, node_x, x):
    return np.interp(x, node_x, nodes)


def synthesize(spec: DatasetSpec) -> Dataset:
    """Build a labelled dataset of imaged trajectories according to ``spec``."""
    cfg = spec.imaging
    parts = []
    index = 0
    for Q in spec.Q_values:
        dx = _level_dx(spec, Q)
        n_fine = _fine_points(spec, dx)
        shots = range(index, index + spec.shots_per_Q)
        index += spec.shots_per_Q
        if spec.kind in ("equilibrium", "soliton_injected"):
            parts.append(_synth_equilibrium(spec, Q, shots, dx, n_fine))
        else:
            parts.append(_synth_ood(spec, Q, shots, dx, n_fine))
    meta = {"dataset_spec": spec.to_dict(), "drift_sign": drift_sign()}
    return Dataset.concat(parts, spec=meta)


def _synth_equilibrium(spec: DatasetSpec, Q, shots, dx, n_fine, chunk=256):
    cfg = spec.imaging
    x = dx * np.arange(n_fine)
    n_per = _pixel_ratio(cfg, dx)
    win_start = x[(n_fine - cfg.L * n_per) // 2]
    win_end = win_start + cfg.L * cfg.pixel_size
    out_phases, qs, lams, nsol = [], [], [], []
    shots = list(shots)
    for c0 in range(0, len(shots), chunk):
        block = shots[c0:c0 + chunk]
        q_shot, lam_shot, phi0, noise, kinks = [], [], [], [], []
        for s in block:
            rng = shot_rng(spec.seed, s)
            q = round(_jitter(rng, Q, spec.fluctuation), 3)
            lam = _jitter(rng, spec.lambda_T, spec.fluctuation)
            q_shot.append(q)
            lam_shot.append(lam)
            phi0.append(sample_stationary(q, rng.random()))
            noise.append(rng.standard_normal(n_fine - 1))
            if spec.kind == "soliton_injected":
                count = int(rng.poisson(spec.soliton_mean))
                pos = rng.uniform(win_start, win_end, count)
                charge = rng.choice([-1, 1], count)
                kinks.append((pos, charge))
        tables = np.stack([_tables(q)[0] for q in q_shot])
        two_D = 4.0 / np.asarray(lam_shot)
        paths = euler_maruyama(tables, two_D, np.asarray(phi0), np.stack(noise), dx)
        counts = np.zeros(len(block), dtype=np.int64)
        for i, k in enumerate(kinks):
            pos, charge = k
            width = spec.soliton_width
            if width is None:
                width = lam_shot[i] / q_shot[i] / math.sqrt(2.0) if q_shot[i] > 0 else lam_shot[i]
            for p, ch in zip(pos, charge):
                paths[i] += kink_profile(x, p, width, int(ch))
            counts[i] = len(pos)
        out_phases.append(image_fine(paths, dx, cfg))
        qs += q_shot
        lams += lam_shot
        nsol.append(counts)
    n = len(shots)
    return Dataset(
        phases=np.concatenate(out_phases),
        pixel_size=cfg.pixel_size,
        shot_id=np.asarray(shots),
        Q=qs,
        lambda_T=lams,
        kind=[spec.kind] * n,
        n_solitons=np.concatenate(nsol),
        seed=[spec.seed] * n,
    )


def _synth_ood(spec: DatasetSpec, Q, shots, dx, n_fine):
    cfg = spec.imaging
    x = dx * np.arange(n_fine)
    n_nodes = int(math.ceil(x[-1] / cfg.pixel_size)) + 2
    node_x = (np.arange(n_nodes) - 0.5) * cfg.pixel_size
    nodes, lams = [], []
    rngs = [shot_rng(spec.seed, s) for s in shots]
    for rng in rngs:
        lams.append(_jitter(rng, spec.lambda_T, spec.fluctuation))
        nodes.append(_uniform_nodes(rng, n_nodes))
    nodes = np.stack(nodes)
    q_level = Q if spec.kind == "ood_quench_proxy" else 0.0
    if spec.kind == "ood_quench_proxy" and spec.relax_length > 0:
        # Each node relaxes independently in the target-Q potential (no spatial coupling).
        steps = int(math.ceil(spec.relax_length / dx))
        step = spec.relax_length / steps
        noise = np.stack([rng.standard_normal((n_nodes, steps)) for rng in rngs])
        flat = noise.reshape(-1, steps)
        logd, _ = _tables(round(Q, 3))
        tables = np.broadcast_to(logd, (flat.shape[0], TABLE_SIZE))
        two_D = np.repeat(4.0 / np.asarray(lams), n_nodes)
        relaxed = euler_maruyama(tables, two_D, nodes.ravel(), flat, step)[:, -1]
        nodes = relaxed.reshape(nodes.shape)
    fine = np.stack([_nodes_to_fine(row, node_x, x) for row in _join_nearest(nodes)])
    n = len(rngs)
    return Dataset(
        phases=image_fine(fine, dx, cfg),
        pixel_size=cfg.pixel_size,
        shot_id=np.asarray(list(shots)),
        Q=[q_level] * n,
        lambda_T=lams,
        kind=[spec.kind] * n,
        n_solitons=np.zeros(n, dtype=np.int64),
        seed=[spec.seed] * n,
    )


def filter_unwrap_suspects(ds: Dataset, threshold: float = 0.9 * math.pi):
    """Drop shots with any nearest-neighbour wrapped increment |dphi| >= threshold."""
    if not (0 < threshold <= math.pi):
        raise ConfigError(f"threshold must lie in (0, pi], got {threshold}")
    inc = np.abs(wrap(np.diff(ds.phases, axis=1)))
    # wrap maps +pi onto -pi, so |inc| == pi is kept as pi.
    bad = np.any(inc >= threshold, axis=1)
    return ds.subset(np.flatnonzero(~bad)), int(bad.sum())


def tune_quench_proxy(spec: DatasetSpec, target_coherence: float, pilot_shots=256, tol=0.005,
                      max_relax=400.0, max_iter=40) -> DatasetSpec:
    """Copy of an ood_quench_proxy ``spec`` whose relax_length gives the target coherence.

    Bisection on a seeded pilot ensemble (common random numbers across trials).
    """
    if spec.kind != "ood_quench_proxy":
        raise ConfigError(f"tuning applies to ood_quench_proxy specs, got {spec.kind!r}")

    def coh(length):
        pilot = replace(spec, relax_length=length, shots_per_Q=pilot_shots)
        return float(np.cos(synthesize(pilot).phases).mean())

    lo, hi = 0.0, 1.0
    while coh(hi) < target_coherence:
        lo, hi = hi, 2.0 * hi
        if hi > max_relax:
            raise ConfigError(f"coherence {target_coherence} not reached within relax_length {max_relax} um")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        c = coh(mid)
        if abs(c - target_coherence) < tol:
            return replace(spec, relax_length=mid)
        lo, hi = (mid, hi) if c < target_coherence else (lo, mid)
    return replace(spec, relax_length=0.5 * (lo + hi))
