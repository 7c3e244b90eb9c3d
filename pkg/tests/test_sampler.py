import math

import numpy as np
import pytest
from scipy.integrate import quad

from sgvae.dataset import wrap
from sgvae.errors import ConfigError
from sgvae.sampler import (
    DatasetSpec,
    FineField,
    ImagingConfig,
    _resolve_drift_sign,
    apply_imaging,
    drift_sign,
    euler_maruyama,
    filter_unwrap_suspects,
    gaussian_kernel,
    histogram_tv,
    image_fine,
    inject_soliton,
    integrate_ito,
    kink_profile,
    sample_stationary,
    sample_without_imaging,
    shot_rng,
    synthesize,
    tune_quench_proxy,
    _tables,
)
from sgvae.transfer import SgParams, cached_ground_state, coherence_of_Q, ground_state, stationary_density


def test_drift_sign_is_restoring_and_decisive():
    best, tv = _resolve_drift_sign()
    assert best == drift_sign() == 1
    assert tv[1] < 0.03 < 0.3 < tv[-1]


def test_stationary_sampling_matches_cdf():
    gs = cached_ground_state(5.0)
    u = np.array([0.1, 0.5, 0.9])
    x = sample_stationary(5.0, u)
    for ui, xi in zip(u, x):
        mass, _ = quad(lambda p: stationary_density(gs, p), -math.pi, xi, limit=200)
        assert mass == pytest.approx(ui, abs=1e-5)
    assert x[1] == pytest.approx(0.0, abs=1e-6)


def test_euler_maruyama_zero_noise_relaxes_to_zero():
    logd, _ = _tables(4.0)
    out = euler_maruyama(logd[None, :], np.array([0.2]), np.array([1.5]), np.zeros((1, 4000)), 0.05, sign=1)
    assert abs(out[0, -1]) < 1e-3
    assert np.all(np.diff(out[0]) <= 0)


def test_integrate_ito_step_guard_and_determinism():
    p = SgParams(4.0, 20.0)
    gs = ground_state(p)
    with pytest.raises(ConfigError):
        integrate_ito(gs, p, 10.0, 2.0, seed=0)  # dx > 0.2 l_J
    a = integrate_ito(gs, p, 50.0, 0.1, seed=3)
    b = integrate_ito(gs, p, 50.0, 0.1, seed=3)
    assert np.array_equal(a.phases, b.phases)
    assert len(a.phases) == 501
    assert a.extent == pytest.approx(50.0)


def test_short_run_histogram_close_to_density():
    Q = 3.0
    rng = np.random.default_rng(7)
    logd, _ = _tables(Q)
    chains, steps = 200, 3000
    phi0 = sample_stationary(Q, rng.random(chains))
    paths = euler_maruyama(np.broadcast_to(logd, (chains, logd.size)), np.full(chains, 0.2), phi0,
                           rng.standard_normal((chains, steps)), 0.05)
    assert histogram_tv(paths[:, ::10].ravel(), cached_ground_state(Q), bins=32) < 0.03


# -- imaging -------------------------------------------------------------------

def test_kernel_normalised_and_truncated_at_four_sigma():
    k = gaussian_kernel(3.0, 0.1)
    assert k.sum() == pytest.approx(1.0)
    assert len(k) == 2 * 120 + 1
    assert np.array_equal(k, k[::-1])
    assert np.array_equal(gaussian_kernel(0.0, 0.1), [1.0])


def test_imaging_constant_and_linear_fields():
    cfg = ImagingConfig(sigma_psf=3.0, pixel_size=2.0, L=35)
    dx = 0.1
    n = int(round(cfg.min_extent() / dx)) + 41
    x = dx * np.arange(n)
    const = image_fine(np.full((1, n), 0.7), dx, cfg)
    assert np.allclose(const, 0.7)
    # A linear ramp is unchanged by a symmetric blur; the boxcar returns the pixel-centre value.
    slope = 0.01
    pix = image_fine((slope * x)[None, :], dx, cfg, wrap_output=False)[0]
    start = (n - cfg.L * 20) // 2
    centres = x[start] + dx * (np.arange(cfg.L) * 20 + 9.5)
    assert np.allclose(pix, slope * centres, atol=1e-12)


def test_imaging_errors():
    cfg = ImagingConfig()
    with pytest.raises(ConfigError):
        image_fine(np.zeros((1, 500)), 0.1, cfg)  # too short
    with pytest.raises(ConfigError):
        image_fine(np.zeros((1, 2000)), 0.3, cfg)  # 2 um is not a multiple of 0.3 um
    with pytest.raises(ConfigError):
        ImagingConfig(sigma_psf=-1.0)


def test_imaging_wraps_output_and_sample_without_imaging():
    cfg = ImagingConfig(sigma_psf=0.0, pixel_size=1.0, L=4)
    fine = FineField(np.full(10, 3.5), 0.5)
    traj = apply_imaging(fine, cfg)
    assert np.allclose(traj.phases, wrap(3.5))
    ramp = FineField(np.arange(10.0), 0.5)
    assert np.array_equal(sample_without_imaging(ramp, cfg), [2.0, 4.0, 6.0, 8.0])


def test_kink_profile_winds_by_two_pi():
    x = np.linspace(-50, 50, 2001)
    k = kink_profile(x, 0.0, 2.0, 1)
    assert k[0] == pytest.approx(0.0, abs=1e-9)
    assert k[-1] == pytest.approx(2 * math.pi, abs=1e-9)
    assert k[1000] == pytest.approx(math.pi)
    assert np.allclose(kink_profile(x, 0.0, 2.0, -1), -k)


def test_inject_soliton_validation():
    fine = FineField(np.zeros(101), 0.5)
    with pytest.raises(ConfigError):
        inject_soliton(fine, 60.0, 1.0, 1)
    with pytest.raises(ConfigError):
        inject_soliton(fine, 10.0, 0.0, 1)
    with pytest.raises(ConfigError):
        inject_soliton(fine, 10.0, 1.0, 2)
    out = inject_soliton(fine, 25.0, 1.0, -1)
    assert out.phases[-1] == pytest.approx(-2 * math.pi, abs=1e-6)


# -- datasets --------------------------------------------------------------------

def test_spec_validation_and_round_trip():
    with pytest.raises(ConfigError):
        DatasetSpec(kind="bogus")
    with pytest.raises(ConfigError):
        DatasetSpec(shots_per_Q=0)
    with pytest.raises(ConfigError):
        DatasetSpec(fluctuation=-0.1)
    spec = DatasetSpec(Q_values=(1, 2), seed=5, soliton_width=2.5)
    assert DatasetSpec.from_dict(spec.to_dict()) == spec


def test_single_shot_deterministic():
    spec = DatasetSpec(Q_values=(3.0,), shots_per_Q=1, fluctuation=0.0, seed=42)
    a, b = synthesize(spec), synthesize(spec)
    assert len(a) == 1 and a.L == 35
    assert np.array_equal(a.phases, b.phases)
    assert a.Q[0] == 3.0 and a.lambda_T[0] == spec.lambda_T
    assert a.spec["drift_sign"] == 1


def test_shots_independent_of_batch_composition():
    big = synthesize(DatasetSpec(Q_values=(2.0,), shots_per_Q=300, seed=9))
    small = synthesize(DatasetSpec(Q_values=(2.0,), shots_per_Q=5, seed=9))
    assert np.array_equal(big.phases[:5], small.phases)
    other = synthesize(DatasetSpec(Q_values=(2.0,), shots_per_Q=5, seed=10))
    assert not np.allclose(other.phases, small.phases)


def test_jitter_is_log_normal_around_level():
    ds = synthesize(DatasetSpec(Q_values=(4.0,), shots_per_Q=400, fluctuation=0.1, seed=1))
    r = np.log(ds.Q / 4.0)
    assert abs(r.mean()) < 0.02 and r.std() == pytest.approx(0.1, rel=0.15)
    assert np.all(ds.Q > 0) and np.all(ds.lambda_T > 0)


def test_equilibrium_coherence_increases_with_Q():
    ds = synthesize(DatasetSpec(Q_values=(1.0, 4.0, 8.0), shots_per_Q=200, seed=2))
    coh = [np.cos(ds.phases[i * 200:(i + 1) * 200]).mean() for i in range(3)]
    assert coh[0] < coh[1] < coh[2]
    # the point-spread blur smooths phase fluctuations, so imaged coherence exceeds the bare value
    assert coherence_of_Q(cached_ground_state(8.0)) < coh[2] < 1.0


def test_ood_kinds():
    uni = synthesize(DatasetSpec(kind="ood_uniform", Q_values=(6.0,), shots_per_Q=300, seed=3))
    assert abs(np.cos(uni.phases).mean()) < 0.05
    assert np.all(uni.Q == 0.0)
    relaxed = synthesize(DatasetSpec(kind="ood_quench_proxy", Q_values=(6.0,), shots_per_Q=300, relax_length=8.0, seed=3))
    assert np.cos(relaxed.phases).mean() > 0.8
    assert set(relaxed.kind) == {"ood_quench_proxy"}


def test_soliton_counts_follow_poisson_mean():
    ds = synthesize(DatasetSpec(kind="soliton_injected", Q_values=(8.0,), shots_per_Q=600, soliton_mean=1.5, seed=4))
    assert ds.n_solitons.mean() == pytest.approx(1.5, abs=0.15)
    eq = synthesize(DatasetSpec(Q_values=(8.0,), shots_per_Q=600, seed=4))
    assert np.cos(ds.phases).mean() < np.cos(eq.phases).mean() - 0.1


def test_tune_quench_proxy_hits_target():
    spec = DatasetSpec(kind="ood_quench_proxy", Q_values=(8.0,), shots_per_Q=10, seed=11)
    tuned = tune_quench_proxy(spec, 0.6, pilot_shots=128, tol=0.01)
    pilot = synthesize(DatasetSpec(**{**tuned.to_dict(), "shots_per_Q": 128}))
    assert np.cos(pilot.phases).mean() == pytest.approx(0.6, abs=0.01)
    with pytest.raises(ConfigError):
        tune_quench_proxy(DatasetSpec(), 0.5)


def test_filter_unwrap_suspects():
    ds = synthesize(DatasetSpec(Q_values=(1.0,), shots_per_Q=50, seed=8))
    ds.phases[3, 10] = wrap(ds.phases[3, 9] + 3.0)
    kept, removed = filter_unwrap_suspects(ds, threshold=2.9)
    assert removed >= 1 and 3 not in kept.shot_id
    with pytest.raises(ConfigError):
        filter_unwrap_suspects(ds, threshold=4.0)


def test_shot_rng_streams_are_distinct():
    a = shot_rng(1, 0).random(4)
    assert np.array_equal(a, shot_rng(1, 0).random(4))
    assert not np.array_equal(a, shot_rng(1, 1).random(4))
