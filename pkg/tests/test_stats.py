import math
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np
import pytest

from sgvae.dataset import Dataset
from sgvae.errors import DataError
from sgvae.sampler import ImagingConfig, integrate_ito, sample_without_imaging
from sgvae.stats import (
    bin_increments,
    bootstrap_ci,
    circular_corr,
    coherence,
    increment_pairs,
    increment_stats,
    m4,
    m4_bruteforce,
    m4_gaussian_null,
    phase_histogram,
    read_table,
    table_csv,
)
from sgvae.transfer import SgParams, ground_state


def fraction_m4(rows, reference=0):
    """Exact rational M4 for small integer-valued toys (no unwrapping needed)."""
    N = len(rows)
    v = [[Fraction(r[j]) - Fraction(r[reference]) for j in range(len(r)) if j != reference] for r in rows]
    M = len(v[0])
    mean = [sum(x[j] for x in v) / N for j in range(M)]
    w = [[x[j] - mean[j] for j in range(M)] for x in v]

    def E(arr, *idx):
        total = Fraction(0)
        for x in arr:
            p = Fraction(1)
            for i in idx:
                p *= x[i]
            total += p
        return total / N

    num = den = Fraction(0)
    for a, b, c, d in combinations_with_replacement(range(M), 4):
        k = E(w, a, b, c, d) - E(w, a, b) * E(w, c, d) - E(w, a, c) * E(w, b, d) - E(w, a, d) * E(w, b, c)
        num += abs(k)
        den += abs(E(v, a, b, c, d))
    return num, den


def dyadic_toy(seed, N=16, L=5):
    # multiples of 1/8 inside (-1, 1): all products and means are exact in binary64
    rng = np.random.default_rng(seed)
    return rng.integers(-7, 8, size=(N, L)) / 8.0


@pytest.mark.parametrize("seed,L", [(0, 3), (1, 5), (2, 6), (3, 6)])
def test_m4_exact_against_rational_oracle(seed, L):
    toy = dyadic_toy(seed, L=L)
    num, den = fraction_m4([[Fraction(x).limit_denominator(8) for x in row] for row in toy])
    fast = m4(toy)
    brute = m4_bruteforce(toy)
    assert fast.numerator == float(num) and fast.denominator == float(den)
    assert brute.numerator == float(num) and brute.denominator == float(den)
    assert fast.value == float(num) / float(den)
    assert fast.tuples == math.comb(L - 1 + 3, 4)


def test_m4_fast_matches_bruteforce_full_length():
    rng = np.random.default_rng(5)
    phi = np.cumsum(rng.normal(0, 0.4, size=(60, 35)), axis=1)
    phi = np.mod(phi + math.pi, 2 * math.pi) - math.pi
    for ref in (0, 17):
        a, b = m4(phi, reference=ref), m4_bruteforce(phi, reference=ref)
        assert a.tuples == b.tuples == math.comb(34 + 3, 4)
        assert a.value == pytest.approx(b.value, rel=1e-12)
        assert a.numerator == pytest.approx(b.numerator, rel=1e-12)


def test_m4_gaussian_data_sits_in_null_band():
    rng = np.random.default_rng(1)
    cov = 0.2 * np.minimum.outer(np.arange(1, 13), np.arange(1, 13)) / 12
    x = np.concatenate([np.zeros((3000, 1)), rng.multivariate_normal(np.zeros(12), cov, size=3000)], axis=1)
    q95, samples = m4_gaussian_null(x, draws=40, seed=2)
    assert len(samples) == 40
    assert m4(x).value < q95


def test_m4_degenerate_and_errors():
    res = m4(np.zeros((4, 5)))
    assert res.degenerate and math.isnan(res.value)
    with pytest.raises(DataError):
        m4(np.zeros((1, 5)))
    with pytest.raises(DataError):
        m4(np.zeros((4, 5)), reference=5)
    res = m4(dyadic_toy(0), bootstrap=50, seed=1)
    lo, hi = res.interval
    assert lo <= hi


def test_coherence_values():
    assert coherence(np.zeros((5, 7)))[0] == 1.0
    value, se = coherence(np.full((10, 3), math.pi / 2) + np.linspace(-0.1, 0.1, 10)[:, None])
    assert value == pytest.approx(np.cos(math.pi / 2 + np.linspace(-0.1, 0.1, 10)).mean())
    assert se > 0
    with pytest.raises(DataError):
        coherence(np.zeros((0, 3)))


def test_correlation_of_free_phase_matches_brownian_oracle():
    lam = 25.0
    p = SgParams(0.0, lam)
    gs = ground_state(p)
    cfg = ImagingConfig(sigma_psf=0.0, pixel_size=2.0, L=35)
    shots = np.stack([sample_without_imaging(integrate_ito(gs, p, 70.0, 0.1, seed=s), cfg) for s in range(600)])
    C, se = circular_corr(shots)
    d = np.arange(12)
    oracle = np.exp(-0.5 * 2 * p.D * d * 2.0)  # E cos(dW) = exp(-Var/2), Var = 2 D d dx
    assert C[0] == 1.0
    assert np.all(np.abs(C[1:12] - oracle[1:]) < 4 * se[1:12])
    Cref, _ = circular_corr(shots, reference=0)
    assert len(Cref) == 35 and Cref[0] == 1.0


def test_increment_pairs_and_binning():
    phi = np.array([[3.0, -3.0, -2.5]])
    base, inc = increment_pairs(phi)
    assert np.allclose(base, [3.0, -3.0])
    assert np.allclose(inc, [2 * math.pi - 6.0, 0.5])
    with pytest.raises(DataError):
        increment_pairs(phi, n=3)
    rng = np.random.default_rng(0)
    b = rng.uniform(-math.pi, math.pi, 200000)
    i = 0.1 * np.sin(b) + rng.normal(0, 0.2, b.size)
    st = bin_increments(b, i, bins=16, min_count=10000)
    assert np.all(np.abs(st.mean - 0.1 * np.sin(st.centers)) < 4 * st.sem + 0.01)
    assert np.allclose(st.std, 0.2, atol=0.01)
    assert not st.flagged.any()
    assert st.count.sum() == b.size


def test_increment_stats_of_dataset():
    ds = Dataset.from_phases(np.tile(np.linspace(-1, 1, 35), (10, 1)))
    st = increment_stats(ds, n=2, bins=8, min_count=1)
    occupied = st.count > 0
    assert np.allclose(st.mean[occupied], 4 / 34)
    assert st.separation == 2


def test_bootstrap_and_histogram():
    x = np.random.default_rng(3).normal(0, 1, size=(200, 4))
    lo, hi = bootstrap_ci(lambda p: p.mean(), x, level=0.8, resamples=300)
    assert lo < x.mean() < hi
    dens, edges = phase_histogram(np.zeros((3, 3)), bins=4)
    assert len(edges) == 5 and dens.sum() * (edges[1] - edges[0]) == pytest.approx(1.0)
    dens, _ = phase_histogram(np.array([[3.0, -3.0]]), bins=2, range=(2.9, 3.5), unwrapped=True)
    assert dens[0] > 0 and dens[1] > 0  # -3 continues to 2pi - 3


def test_table_round_trip():
    text = table_csv("demo", ["a", "b"], [(1, 0.1), (2, np.float64(1 / 3))], hash="abc", Q=np.array([1.0, 2.0]))
    meta, cols, rows = read_table(text)
    assert meta == {"estimator": "demo", "hash": "abc", "Q": [1.0, 2.0]}
    assert cols == ["a", "b"]
    assert float(rows[1][1]) == 1 / 3
    with pytest.raises(DataError):
        read_table("a,b\n1,2\n")
