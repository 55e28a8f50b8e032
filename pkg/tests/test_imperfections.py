import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualrail.chain_model import ChainSpec, Model
from dualrail.evolution import amplitude, spectral_data
from dualrail.imperfections import (
    DisorderEnsemble,
    InitNoiseError,
    SingleExcitationNoise,
    average_single_excitation_success,
    collective_coefficients,
    collective_polynomial,
    collective_success_exact,
    collective_success_truncated,
    disorder_average_success,
    ensemble_success,
    p1_profile,
    sample_disorder,
    single_excitation_success,
)
from dualrail.protocol import best_intersection_success

from oracles import full_propagator, two_rail_perfect_weight


def test_zero_disorder_is_all_zero():
    np.testing.assert_array_equal(sample_disorder(0.0, 5, seed=1), np.zeros(5))


def test_fixture_disorder_sample():
    d = sample_disorder(0.01, 29, fixture=2)
    assert d[0] == 0.0057 and len(d) == 29
    with pytest.raises(ValueError):
        sample_disorder(0.01, 10, fixture=1)


def test_disorder_statistics():
    d = sample_disorder(0.01, 200_000, seed=5)
    assert np.abs(d).max() <= 0.01
    assert abs(d.mean()) < 1e-4
    assert d.var() == pytest.approx(0.01**2 / 3, rel=0.02)


def test_ensemble_determinism_and_prefix():
    a = DisorderEnsemble.generate(30, 0.01, 5, seed=11)
    b = DisorderEnsemble.generate(30, 0.01, 5, seed=11)
    longer = DisorderEnsemble.generate(30, 0.01, 8, seed=11)
    assert a.samples == b.samples
    assert longer.samples[:5] == a.samples
    assert DisorderEnsemble.generate(30, 0.01, 5, seed=12).samples != a.samples
    assert DisorderEnsemble.from_json(a.to_json()) == a


def test_ensemble_samples_bounded():
    ens = DisorderEnsemble.generate(20, 0.02, 4, seed=0)
    for d1, d2 in ens.samples:
        assert len(d1) == len(d2) == 19
        assert max(map(abs, d1 + d2)) <= 0.02
        assert d1 != d2


def test_zero_disorder_recovers_clean_transfer():
    ens = DisorderEnsemble.generate(12, 0.0, 3, seed=4)
    curve = ensemble_success(ens, [0.3, 1.0], t_max=100.0)
    for a, row in zip([0.3, 1.0], curve.per_sample):
        spec = ChainSpec(12, end_coupling=a)
        clean = best_intersection_success(spec, spec, 100.0)
        np.testing.assert_allclose(row, clean.probability, atol=1e-12)
    assert not curve.missing.any()
    np.testing.assert_allclose(curve.stderr, 0.0, atol=1e-12)


def test_fixture_ensemble_curve():
    curve = ensemble_success(DisorderEnsemble.fixture(), [0.11], t_max=1000.0)
    assert curve.per_sample.shape == (1, 1)
    assert curve.mean[0] >= 0.85


def test_disorder_average_is_seeded():
    kw = dict(n_sites=16, a_values=[0.2, 1.0], delta=0.01, n_samples=3, t_max=200.0, seed=9)
    first, second = disorder_average_success(**kw), disorder_average_success(**kw)
    np.testing.assert_array_equal(first.per_sample, second.per_sample)
    assert np.all((first.per_sample >= 0) & (first.per_sample <= 1))


# --- single stray excitation ----------------------------------------------

def test_noise_validation():
    with pytest.raises(InitNoiseError):
        SingleExcitationNoise(0.2, 3)
    with pytest.raises(InitNoiseError):
        SingleExcitationNoise(0.05, 1)
    with pytest.raises(InitNoiseError):
        single_excitation_success(ChainSpec(5), SingleExcitationNoise(0.05, 6), 1.0)
    SingleExcitationNoise(0.5, 3, x_guard=1.0)


def test_noise_free_limit():
    spec = ChainSpec(20, end_coupling=0.1)
    r = single_excitation_success(spec, SingleExcitationNoise(0.0, 5), 80.0)
    f = amplitude(spectral_data(spec, 1), 1, 20, 80.0)
    assert r.p_success == pytest.approx(abs(f) ** 2, abs=1e-14)


def test_certain_noise_limit():
    spec = ChainSpec(20, end_coupling=0.1)
    r = single_excitation_success(spec, SingleExcitationNoise(1.0, 7, x_guard=1.0), 80.0)
    assert r.p_success == pytest.approx(r.p1, abs=1e-15)


@given(x=st.floats(0, 0.1), m=st.integers(2, 9))
def test_quadratic_in_x(x, m):
    spec = ChainSpec(9, end_coupling=0.3)
    r = single_excitation_success(spec, SingleExcitationNoise(x, m), 14.0)
    assert r.p_success == pytest.approx((1 - x) ** 2 * r.p0 + x * x * r.p1, abs=1e-14)
    assert 0 <= r.p1 <= 1


def _two_rail_weight(spec, t, s1, s2):
    U = full_propagator(spec, t)
    return two_rail_perfect_weight(U, U, spec.n_sites, [(1.0, s1, s2)])


@pytest.mark.parametrize("m", [2, 4, 6])
def test_single_noise_matches_two_rail_oracle(m):
    spec = ChainSpec(6, end_coupling=0.4)
    t, x = 9.0, 0.1
    clean = _two_rail_weight(spec, t, (), ())
    both = _two_rail_weight(spec, t, (m,), (m,))
    cross = _two_rail_weight(spec, t, (m,), ()) + _two_rail_weight(spec, t, (), (m,))
    assert cross == 0.0
    oracle = (1 - x) ** 2 * clean + x * x * both
    r = single_excitation_success(spec, SingleExcitationNoise(x, m), t)
    assert r.p0 == pytest.approx(clean, abs=1e-10)
    assert r.p1 == pytest.approx(both, abs=1e-10)
    assert r.p_success == pytest.approx(oracle, abs=1e-10)


def test_coherent_sum_bounded_by_incoherent_times_count():
    spec = ChainSpec(12, end_coupling=0.2)
    inc = p1_profile(spec, 40.0)
    coh = p1_profile(spec, 40.0, coherent=True)
    assert np.all(coh <= (spec.n_sites - 1) * inc + 1e-12)
    assert not np.allclose(inc, coh)


def test_profile_shape_and_receiver_site():
    # with the stray excitation already at the receiver, the two-excitation
    # term reduces to one-excitation physics in the reversed direction
    spec = ChainSpec(30, end_coupling=0.06)
    profile = p1_profile(spec, 488.0)
    assert profile.shape == (29,)
    assert int(np.argmax(profile)) + 2 == 30


def test_averaged_noise_single_time():
    spec = ChainSpec(10, end_coupling=0.3)
    pt = average_single_excitation_success(spec, 0.1, times=[12.0])
    p1 = p1_profile(spec, 12.0).mean()
    assert pt.t_star == 12.0
    assert pt.p_ave == pytest.approx(0.81 * pt.p0 + 0.01 * p1, abs=1e-14)
    with pytest.raises(InitNoiseError):
        average_single_excitation_success(spec, 0.2)


# --- collective noise -----------------------------------------------------

def _mixture_oracle(spec, t, x, same_environment=False):
    N = spec.n_sites
    sets = [s for k in range(N) for s in itertools.combinations(range(2, N + 1), k)]
    U = full_propagator(spec, t)
    total = 0.0
    for s1 in sets:
        for s2 in sets:
            w = two_rail_perfect_weight(U, U, N, [(1.0, s1, s2)], same_environment=same_environment)
            if w:
                k = len(s1) + len(s2)
                total += x**k * (1 - x) ** (2 * (N - 1) - k) * w
    return total


@pytest.mark.parametrize("x", [0.0, 0.05, 0.3, 0.7])
def test_collective_matches_mixture_oracle(x):
    # without mirror symmetry no accidental amplitude coincidences survive
    spec = ChainSpec(4, end_coupling=0.5, bond_disorder=(0.003, -0.007, 0.009))
    r = collective_success_exact(spec, x, 3.0)
    assert r.p_success == pytest.approx(_mixture_oracle(spec, 3.0, x), abs=1e-10)


@pytest.mark.parametrize("x", [0.05, 0.5])
def test_collective_matches_oracle_with_matching_spectators(x):
    spec = ChainSpec(5, end_coupling=0.5)
    r = collective_success_exact(spec, x, 3.0)
    assert r.p_success == pytest.approx(_mixture_oracle(spec, 3.0, x, same_environment=True), abs=1e-10)


def test_collective_coefficient_structure():
    spec = ChainSpec(5, end_coupling=0.3)
    c = collective_coefficients(spec, 6.0)
    assert c[0] == pytest.approx(abs(amplitude(spectral_data(spec, 1), 1, 5, 6.0)) ** 2, abs=1e-14)
    assert c[1] == pytest.approx(p1_profile(spec, 6.0).sum(), abs=1e-14)
    # particle-hole duality pairs C_j with C_{N-1-j}
    np.testing.assert_allclose(c, c[::-1], atol=1e-13)


def test_collective_polynomial_recovers_coefficients():
    spec = ChainSpec(5, end_coupling=0.6)
    c = collective_coefficients(spec, 4.0)
    xs = np.linspace(0.05, 0.95, 12)
    basis = np.stack([xs ** (2 * j) * (1 - xs) ** (2 * (4 - j)) for j in range(5)], axis=1)
    fit, *_ = np.linalg.lstsq(basis, collective_polynomial(c, xs), rcond=None)
    np.testing.assert_allclose(fit, c, atol=1e-10)


def test_collective_symmetry_in_x():
    spec = ChainSpec(6, end_coupling=0.2)
    c = collective_coefficients(spec, 11.0)
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(collective_polynomial(c, x), collective_polynomial(c, 1 - x), atol=1e-12)


@pytest.mark.parametrize("x", [0.01, 0.05, 0.09])
def test_truncation_error_bounded(x):
    spec = ChainSpec(8, end_coupling=0.3)
    exact = collective_success_exact(spec, x, 20.0).p_success
    trunc = collective_success_truncated(spec, x, 20.0).p_success
    assert abs(exact - trunc) <= 8 * x**4 + 1e-14


def test_truncation_rejects_large_x():
    with pytest.raises(InitNoiseError):
        collective_success_truncated(ChainSpec(6), 0.1, 1.0)


def test_exact_collective_size_limit():
    with pytest.raises(InitNoiseError):
        collective_coefficients(ChainSpec(13), 1.0)


def test_collective_high_noise_beats_clean_baseline_at_good_time():
    # x near 1 puts the chain close to the fully excited mirror of the clean case
    spec = ChainSpec(4, end_coupling=0.06)
    c = collective_coefficients(spec, 18.0)
    assert collective_polynomial(c, 0.99) == pytest.approx(collective_polynomial(c, 0.01), abs=1e-12)


def test_coherent_profile_dips():
    # the amplitude-summed reading of the profile has near-zero dips at these sites
    profile = p1_profile(ChainSpec(30, end_coupling=0.06), 488.0, coherent=True)
    assert all(profile[m - 2] < 0.02 for m in (5, 10, 13, 21))
    assert int(np.argmax(profile)) + 2 == 30


def _best_time(spec, times=np.arange(1.0, 1001.0)):
    return float(times[np.argmax(np.abs(amplitude(spectral_data(spec, 1), 1, spec.n_sites, times)))])


def test_improved_chain_more_robust_to_collective_noise():
    improved, uniform = ChainSpec(30, end_coupling=0.06), ChainSpec(30, end_coupling=1.0)
    ti, tu = _best_time(improved), _best_time(uniform)
    for x in np.arange(0.005, 0.1, 0.005):
        p_imp = collective_success_truncated(improved, x, ti).p_success
        p_uni = collective_success_truncated(uniform, x, tu).p_success
        assert p_imp > p_uni
