"""Observables of phase-trajectory ensembles.

Estimators take a :class:`~sgvae.dataset.Dataset` or a plain (shots, L) array
of wrapped phases. Resampling is always over whole shots.
"""
from __future__ import annotations

import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, wrap
from .errors import DataError


def _phases(ds) -> np.ndarray:
    arr = ds.phases if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DataError(f"need a non-empty (shots, L) ensemble, got shape {arr.shape}")
    return arr


def unwrap(phases) -> np.ndarray:
    """Unwrap along the pixel axis (nearest-branch continuation from the first pixel)."""
    return np.unwrap(np.asarray(phases, dtype=np.float64), axis=-1)


# -- coherence and correlations ---------------------------------------------------

def coherence(ds, resamples=1000, seed=0):
    """(<cos phi>, shot-bootstrap standard error)."""
    per_shot = np.cos(_phases(ds)).mean(axis=1)
    value = float(per_shot.mean())
    if resamples == 0 or len(per_shot) < 2:
        return value, math.nan
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(per_shot), size=(resamples, len(per_shot)))
    return value, float(per_shot[idx].mean(axis=1).std(ddof=1))


def circular_corr(ds, reference=None):
    """(C(d), standard error) for d = 0..L-1, with C(d) = <cos(phi_{j+d} - phi_j)>.

    Translation-averaged over all valid j by default; ``reference=j0`` fixes j = j0.
    """
    phi = _phases(ds)
    N, L = phi.shape
    dmax = L if reference is None else L - reference
    C, se = np.empty(dmax), np.empty(dmax)
    for d in range(dmax):
        if reference is None:
            per_shot = np.cos(phi[:, d:] - phi[:, :L - d]).mean(axis=1)
        else:
            per_shot = np.cos(phi[:, reference + d] - phi[:, reference])
        C[d] = per_shot.mean()
        se[d] = per_shot.std(ddof=1) / math.sqrt(N) if N > 1 else math.nan
    C[0] = 1.0
    return C, se


# -- increments -------------------------------------------------------------------

@dataclass
class IncrementStats:
    centers: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    sem: np.ndarray
    separation: int
    flagged: np.ndarray  # bins with fewer than min_count samples


def increment_pairs(phases, n=1):
    """(phi_{i-n} wrapped, wrap(phi_i - phi_{i-n})) flattened over shots and positions."""
    phi = np.asarray(phases, dtype=np.float64)
    if n < 1 or n >= phi.shape[-1]:
        raise DataError(f"separation n={n} must satisfy 1 <= n < L={phi.shape[-1]}")
    base = wrap(phi[..., :-n]).ravel()
    inc = -wrap(-(phi[..., n:] - phi[..., :-n])).ravel()  # onto (-pi, pi]
    return base, inc


def increment_stats(ds, n=1, bins=32, min_count=200) -> IncrementStats:
    base, inc = increment_pairs(_phases(ds), n)
    return bin_increments(base, inc, bins, n, min_count)


def bin_increments(base, inc, bins=32, separation=1, min_count=200) -> IncrementStats:
    edges = np.linspace(-math.pi, math.pi, bins + 1)
    which = np.clip(np.digitize(base, edges) - 1, 0, bins - 1)
    count = np.bincount(which, minlength=bins)
    s1 = np.bincount(which, weights=inc, minlength=bins)
    s2 = np.bincount(which, weights=inc**2, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / count
        var = (s2 - count * mean**2) / (count - 1)
        std = np.sqrt(np.maximum(var, 0.0))
        sem = std / np.sqrt(count)
    return IncrementStats(
        centers=0.5 * (edges[1:] + edges[:-1]), mean=mean, std=std, count=count, sem=sem,
        separation=separation, flagged=count < min_count,
    )


# -- connected fourth moment ------------------------------------------------------------

@dataclass
class M4Result:
    value: float
    numerator: float
    denominator: float
    reference: int
    tuples: int
    interval: tuple | None = None
    degenerate: bool = False


def m4_variables(phases, reference=0):
    """v_j = u_j - u_ref over non-reference pixels, u the unwrapped trajectory."""
    u = unwrap(phases)
    L = u.shape[1]
    if not (0 <= reference < L):
        raise DataError(f"reference pixel {reference} outside 0..{L - 1}")
    keep = [j for j in range(L) if j != reference]
    return u[:, keep] - u[:, [reference]]


def _m4_from_variables(v, reference):
    N, M = v.shape
    pa, pb = np.triu_indices(M)  # pairs a <= b, ordered lexicographically
    pair_id = np.full((M, M), -1)
    pair_id[pa, pb] = np.arange(len(pa))
    w = v - v.mean(axis=0)
    raw = (v[:, pa] * v[:, pb]).T @ (v[:, pa] * v[:, pb]) / N
    cen_pairs = w[:, pa] * w[:, pb]
    cen = cen_pairs.T @ cen_pairs / N
    c2 = w.T @ w / N
    # Tuples a <= b <= c <= d  <->  pair (a, b), pair (c, d) with b <= c.
    left, right = np.nonzero(pb[:, None] <= pa[None, :])
    a, b, c, d = pa[left], pb[left], pa[right], pb[right]
    kappa = cen[left, right] - c2[a, b] * c2[c, d] - c2[a, c] * c2[b, d] - c2[a, d] * c2[b, c]
    num = float(np.abs(kappa).sum())
    den = float(np.abs(raw[left, right]).sum())
    degenerate = not den > 0
    return M4Result(num / den if not degenerate else math.nan, num, den, reference, len(left), degenerate=degenerate)


def m4(ds, reference=0, bootstrap=None, level=0.8, seed=0) -> M4Result:
    """Normalised connected fourth moment of phase differences to a reference pixel.

    Sums |joint fourth cumulant| over j1 <= j2 <= j3 <= j4 (non-reference pixels,
    repeats allowed) and divides by the same sum of |raw fourth moments|.
    ``bootstrap=k`` adds a k-resample percentile interval at ``level``.
    """
    phi = _phases(ds)
    if phi.shape[0] < 2 or phi.shape[1] < 2:
        raise DataError("M4 needs at least 2 shots and 2 pixels")
    res = _m4_from_variables(m4_variables(phi, reference), reference)
    if bootstrap:
        res.interval = bootstrap_ci(lambda p: m4(p, reference).value, phi, level, bootstrap, seed)
    return res


def m4_bruteforce(ds, reference=0) -> M4Result:
    """Direct enumeration of the tuple sums (reference oracle for :func:`m4`)."""
    v = m4_variables(_phases(ds), reference)
    N, M = v.shape
    mean = v.mean(axis=0)
    w = v - mean
    num = den = 0.0
    count = 0
    for a, b, c, d in itertools.combinations_with_replacement(range(M), 4):
        m_raw = np.mean(v[:, a] * v[:, b] * v[:, c] * v[:, d])
        k = (
            np.mean(w[:, a] * w[:, b] * w[:, c] * w[:, d])
            - np.mean(w[:, a] * w[:, b]) * np.mean(w[:, c] * w[:, d])
            - np.mean(w[:, a] * w[:, c]) * np.mean(w[:, b] * w[:, d])
            - np.mean(w[:, a] * w[:, d]) * np.mean(w[:, b] * w[:, c])
        )
        num += abs(k)
        den += abs(m_raw)
        count += 1
    return M4Result(num / den if den > 0 else math.nan, num, den, reference, count, degenerate=not den > 0)


def m4_gaussian_null(ds, reference=0, draws=100, level=0.95, seed=0):
    """Upper ``level`` quantile of M4 over Gaussian surrogates with the data's mean and covariance.

    Returns (quantile, samples).
    """
    v = m4_variables(_phases(ds), reference)
    N = v.shape[0]
    mean, cov = v.mean(axis=0), np.cov(v, rowvar=False)
    rng = np.random.default_rng(seed)
    samples = np.array([
        _m4_from_variables(rng.multivariate_normal(mean, cov, size=N, method="eigh"), reference).value
        for _ in range(draws)
    ])
    return float(np.quantile(samples, level)), samples


# -- resampling, histograms, tables --------------------------------------------------

def bootstrap_ci(statistic, ds, level=0.8, resamples=1000, seed=0):
    """Percentile interval of ``statistic(phases)`` over shot-level resamples."""
    phi = _phases(ds)
    rng = np.random.default_rng(seed)
    vals = np.array([statistic(phi[rng.integers(0, len(phi), len(phi))]) for _ in range(resamples)])
    tail = (1.0 - level) / 2.0
    return float(np.quantile(vals, tail)), float(np.quantile(vals, 1.0 - tail))


def phase_histogram(ds, bins=64, range=(-math.pi, math.pi), unwrapped=False):
    """(density, edges) of all pixel phases; ``unwrapped`` continues each shot along its pixels."""
    phi = _phases(ds)
    values = unwrap(phi) if unwrapped else phi
    density, edges = np.histogram(values.ravel(), bins=bins, range=range, density=True)
    return density, edges


def table_csv(name, columns, rows, **meta) -> str:
    """CSV text with a one-line JSON header: ``# {"estimator": name, ...}``."""
    out = io.StringIO()
    out.write("# " + json.dumps({"estimator": name, **meta}, sort_keys=True, default=_jsonable) + "\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def read_table(text):
    """Inverse of :func:`table_csv`: (meta, columns, rows of strings)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise DataError("table is missing its structured header")
    meta = json.loads(lines[0][2:])
    columns = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:] if line]
    return meta, columns, rows
