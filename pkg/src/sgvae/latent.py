"""Latent-space analysis of a trained model: neuron activity, probing, sweeps, discrimination."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import diptest
import numpy as np
from scipy.stats import spearmanr
from sklearn.metrics import roc_auc_score, roc_curve
from sklearn.mixture import GaussianMixture

from . import stats
from .dataset import Dataset
from .errors import DataError, ShapeError
from .sampler import shot_rng
from .vae import VaeModel, encode, generate

log = logging.getLogger(__name__)

QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class NeuronReport:
    median_sigma: np.ndarray
    threshold: float

    @property
    def active(self) -> np.ndarray:
        return self.median_sigma < self.threshold

    @property
    def active_set(self) -> list:
        return [int(i) for i in np.flatnonzero(self.active)]

    @property
    def active_index(self) -> int | None:
        s = self.active_set
        return s[0] if len(s) == 1 else None

    @property
    def unique(self) -> bool:
        return self.active_index is not None

    def summary(self) -> dict:
        return {
            "median_sigma": [float(s) for s in self.median_sigma],
            "threshold": self.threshold,
            "active": self.active_set,
            "unique": self.unique,
        }


def classify_neurons(model: VaeModel, ds, threshold=0.5) -> NeuronReport:
    _, sigma = encode(model, _checked(model, ds))
    return NeuronReport(np.median(sigma, axis=0), float(threshold))


def _checked(model, ds):
    phases = ds.phases if isinstance(ds, Dataset) else np.asarray(ds)
    if phases.ndim != 2 or phases.shape[1] != model.cfg.L:
        raise ShapeError(f"model expects trajectories of length {model.cfg.L}, got shape {phases.shape}")
    return phases


@dataclass
class LatentReport:
    mu: np.ndarray
    sigma: np.ndarray
    labels: np.ndarray
    Q: np.ndarray
    shot_coherence: np.ndarray
    active_index: int | None
    orientation: int = 1  # sign making orientation*z_a increase as coherence decreases

    @property
    def z_a(self) -> np.ndarray | None:
        return None if self.active_index is None else self.mu[:, self.active_index]

    def quantiles(self) -> dict:
        """z_a quantiles per dataset label (plus the pooled '*' entry)."""
        if self.z_a is None:
            return {}
        out = {"*": _quantiles(self.z_a)}
        for lab in sorted(set(self.labels.tolist())):
            out[lab] = _quantiles(self.z_a[self.labels == lab])
        return out

    def drift(self) -> dict:
        """Median and interquartile range of z_a per label."""
        q = self.quantiles()
        return {k: {"median": v[0.5], "iqr": v[0.75] - v[0.25]} for k, v in q.items()}


def _quantiles(x):
    return {p: float(np.quantile(x, p)) for p in QUANTILES}


def probe(model: VaeModel, ds: Dataset, active_index=None, neurons: NeuronReport | None = None) -> LatentReport:
    """Encode ``ds`` and attach per-shot activations (z_a = mu_a, no sampling)."""
    phases = _checked(model, ds)
    mu, sigma = encode(model, phases)
    if active_index is None:
        report = neurons if neurons is not None else NeuronReport(np.median(sigma, axis=0), 0.5)
        active_index = report.active_index
        if active_index is None:
            log.warning("no unique active neuron (active set %s); z_a unavailable", report.active_set)
    coh = np.cos(phases).mean(axis=1)
    orientation = 1
    if active_index is not None and len(phases) > 2 and np.ptp(mu[:, active_index]) > 0 and np.ptp(coh) > 0:
        rho = spearmanr(mu[:, active_index], coh).correlation
        orientation = -1 if rho > 0 else 1
    return LatentReport(
        mu=mu, sigma=sigma, labels=np.asarray(ds.kind, dtype=object), Q=np.asarray(ds.Q, dtype=np.float64),
        shot_coherence=coh, active_index=active_index, orientation=orientation,
    )


# -- sweeps --------------------------------------------------------------------------

@dataclass
class SweepPoint:
    z_a: float
    seed: int
    samples: int
    coherence: float
    coherence_se: float
    m4: float
    increments: stats.IncrementStats
    histogram: np.ndarray
    circular_corr: np.ndarray


@dataclass
class SweepResult:
    grid: np.ndarray
    active_index: int | None
    points: list = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])


def point_seed(seed: int, index: int) -> int:
    return int(shot_rng(seed, index).integers(0, 2**63 - 1))


def latent_sweep(model: VaeModel, z_grid, samples_per_point: int, seed: int, active_index: int,
                 reference=0, hist_bins=64) -> SweepResult:
    """Generate an ensemble at each z_a (other neurons at 0) and summarise it."""
    grid = np.asarray(z_grid, dtype=np.float64).reshape(-1)
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise DataError("z grid must be strictly increasing")
    result = SweepResult(grid, active_index)
    for i, za in enumerate(grid):
        z = np.zeros(model.cfg.latent)
        z[active_index] = za
        s = point_seed(seed, i)
        ens = generate(model, z, samples_per_point, s)
        coh, coh_se = stats.coherence(ens, resamples=200, seed=s)
        hist, _ = stats.phase_histogram(ens, bins=hist_bins)
        C, _ = stats.circular_corr(ens)
        result.points.append(SweepPoint(
            z_a=float(za), seed=s, samples=samples_per_point, coherence=coh, coherence_se=coh_se,
            m4=stats.m4(ens, reference).value, increments=stats.increment_stats(ens), histogram=hist,
            circular_corr=C,
        ))
    return result


# -- discrimination --------------------------------------------------------------------

@dataclass
class Separation:
    auc: float
    threshold: float
    peaks: tuple
    weights: tuple
    dip_pvalue: float
    n_reference: int
    n_test: int
    degenerate: bool = False


def _score(report: LatentReport, orientation: int):
    if report.z_a is None:
        raise DataError("report has no unique active neuron")
    return orientation * report.z_a


def two_peak_summary(x, seed=0):
    """Means and weights of a two-component Gaussian fit, sorted by mean."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    gm = GaussianMixture(2, random_state=seed, n_init=3).fit(x)
    order = np.argsort(gm.means_.ravel())
    return tuple(float(m) for m in gm.means_.ravel()[order]), tuple(float(w) for w in gm.weights_[order])


def dip_pvalue(x) -> float:
    _, p = diptest.diptest(np.asarray(x, dtype=np.float64))
    return float(p)


def discriminate(report_eq: LatentReport, report_test: LatentReport) -> Separation:
    """ROC-AUC of oriented z_a for test-vs-reference membership, plus peaks of the test histogram.

    z_a is oriented with the reference report's gauge, so AUC > 0.5 means the test
    shots sit on the less coherent side.
    """
    if report_eq.active_index != report_test.active_index:
        raise DataError("reports come from different active neurons")
    ref = _score(report_eq, report_eq.orientation)
    test = _score(report_test, report_eq.orientation)
    n0, n1 = len(ref), len(test)
    if n0 == 0 or n1 == 0 or np.ptp(np.concatenate([ref, test])) == 0:
        return Separation(math.nan, math.nan, (), (), math.nan, n0, n1, degenerate=True)
    y = np.r_[np.zeros(n0), np.ones(n1)]
    s = np.r_[ref, test]
    auc = float(roc_auc_score(y, s))
    fpr, tpr, thr = roc_curve(y, s)
    best = int(np.argmax(tpr - fpr))
    peaks, weights = two_peak_summary(test) if n1 >= 4 else ((), ())
    return Separation(
        auc=auc, threshold=float(thr[best]) * report_eq.orientation, peaks=peaks, weights=weights,
        dip_pvalue=dip_pvalue(test) if n1 >= 4 else math.nan, n_reference=n0, n_test=n1,
    )


def disjoint_at(report_a: LatentReport, report_b: LatentReport, lo=0.1, hi=0.9) -> bool:
    """True when the [lo, hi] quantile ranges of z_a do not overlap."""
    a, b = report_a.z_a, report_b.z_a
    if a is None or b is None:
        raise DataError("both reports need a unique active neuron")
    qa, qb = np.quantile(a, [lo, hi]), np.quantile(b, [lo, hi])
    return bool(qa[1] < qb[0] or qb[1] < qa[0])
