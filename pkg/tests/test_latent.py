import math

import numpy as np
import pytest
import torch

from sgvae.dataset import Dataset
from sgvae.errors import DataError, ShapeError
from sgvae.latent import (
    LatentReport,
    classify_neurons,
    disjoint_at,
    discriminate,
    dip_pvalue,
    latent_sweep,
    point_seed,
    probe,
    two_peak_summary,
)
from sgvae.sampler import DatasetSpec, synthesize
from sgvae.vae import VaeModel


@pytest.fixture(scope="module")
def corpus():
    return synthesize(DatasetSpec(Q_values=(1.0, 8.0), shots_per_Q=60, seed=3))


def crafted(active=2, log_var=-4.0, others=0.0):
    """Fresh model whose neuron ``active`` has a narrow posterior."""
    m = VaeModel().initialize(1)
    with torch.no_grad():
        m.logvar_head.bias.fill_(others)
        m.logvar_head.bias[active] = log_var
    return m


def report(z, labels="equilibrium", orientation=1, active=0):
    z = np.asarray(z, dtype=np.float64)
    mu = np.zeros((len(z), 6))
    mu[:, active] = z
    return LatentReport(mu=mu, sigma=np.ones_like(mu), labels=np.array([labels] * len(z), dtype=object),
                        Q=np.zeros(len(z)), shot_coherence=np.zeros(len(z)), active_index=active,
                        orientation=orientation)


def test_fresh_model_has_no_active_neuron(corpus):
    rep = classify_neurons(VaeModel().initialize(0), corpus)
    assert rep.active_set == [] and not rep.unique and rep.active_index is None
    assert np.all(rep.median_sigma == 1.0)
    assert rep.summary()["threshold"] == 0.5


def test_single_active_neuron_and_threshold(corpus):
    rep = classify_neurons(crafted(), corpus)
    assert rep.active_set == [2] and rep.unique and rep.active_index == 2
    assert rep.median_sigma[2] == pytest.approx(math.exp(-2.0))
    everything = classify_neurons(crafted(others=-0.01), corpus, threshold=1.0)
    assert everything.active_set == list(range(6)) and not everything.unique
    with pytest.raises(ShapeError):
        classify_neurons(crafted(), np.zeros((3, 20)))


def test_probe_uses_posterior_mean_and_orients_by_coherence(corpus):
    model = crafted()
    rep = probe(model, corpus)
    assert rep.active_index == 2
    assert np.array_equal(rep.z_a, rep.mu[:, 2])
    assert np.allclose(rep.shot_coherence, np.cos(corpus.phases).mean(1))
    # orientation * z_a must not increase with coherence
    from scipy.stats import spearmanr
    assert spearmanr(rep.orientation * rep.z_a, rep.shot_coherence).correlation <= 0
    q = rep.quantiles()
    assert set(q) == {"*", "equilibrium"} and list(q["*"]) == [0.1, 0.25, 0.5, 0.75, 0.9]
    d = rep.drift()
    assert d["*"]["iqr"] >= 0
    none = probe(VaeModel().initialize(0), corpus)
    assert none.z_a is None and none.quantiles() == {}


def test_sweep_grid_and_determinism():
    model = crafted()
    with pytest.raises(DataError):
        latent_sweep(model, [0.0, 0.0, 1.0], 5, seed=1, active_index=2)
    a = latent_sweep(model, [-1.0, 0.0, 1.0], 8, seed=1, active_index=2)
    b = latent_sweep(model, [-1.0, 0.0, 1.0], 8, seed=1, active_index=2)
    assert np.array_equal(a.column("coherence"), b.column("coherence"))
    assert len(set(a.column("seed"))) == 3
    assert a.column("samples").tolist() == [8, 8, 8]
    assert a.points[0].histogram.shape == (64,)
    assert point_seed(1, 0) != point_seed(1, 1) and point_seed(1, 0) == point_seed(1, 0)


def test_discrimination_metrics():
    rng = np.random.default_rng(0)
    eq = report(rng.normal(0, 1, 400))
    same = discriminate(eq, eq)
    assert same.auc == 0.5
    shifted = report(np.r_[rng.normal(0, 1, 200), rng.normal(6, 1, 200)], labels="soliton_injected")
    sep = discriminate(eq, shifted)
    assert 0.7 < sep.auc < 0.8
    assert sep.peaks[0] == pytest.approx(0.0, abs=0.3) and sep.peaks[1] == pytest.approx(6.0, abs=0.3)
    assert sep.weights[0] == pytest.approx(0.5, abs=0.05)
    assert sep.dip_pvalue < 0.01
    flipped = discriminate(report(eq.z_a, orientation=-1), shifted)
    assert flipped.auc == pytest.approx(1 - sep.auc)
    with pytest.raises(DataError):
        discriminate(eq, report([1.0, 2.0], active=3))
    assert discriminate(report(np.zeros(5)), report(np.zeros(5))).degenerate


def test_two_peak_and_dip_on_unimodal_data():
    x = np.random.default_rng(1).normal(0, 1, 2000)
    assert dip_pvalue(x) > 0.05
    peaks, weights = two_peak_summary(np.r_[x - 5, x + 5])
    assert peaks == pytest.approx((-5.0, 5.0), abs=0.1)
    assert sum(weights) == pytest.approx(1.0)


def test_disjoint_at():
    a, b = report(np.linspace(0, 1, 101)), report(np.linspace(0.95, 2, 101))
    assert disjoint_at(a, b)
    assert not disjoint_at(a, b, lo=0.0, hi=1.0)
    assert not disjoint_at(a, a)
    none = LatentReport(np.zeros((2, 6)), np.ones((2, 6)), np.array(["x", "x"], dtype=object), np.zeros(2),
                        np.zeros(2), None)
    with pytest.raises(DataError):
        disjoint_at(a, none)


def test_probe_accepts_generic_datasets():
    ds = Dataset.from_phases(np.zeros((4, 35)))
    rep = probe(crafted(), ds)
    assert rep.labels.tolist() == ["generated"] * 4
