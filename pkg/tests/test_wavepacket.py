import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.stats import kstest

from srfock.wavepacket import (
    ATOM_LINEWIDTH,
    EnsembleGeometry,
    OverdampedError,
    WavepacketParams,
    biphoton_joint_density,
    chi_from_geometry,
    chi_scaled,
    delay_density,
    density_with_background,
    emission_cdf,
    envelope_curve,
    first_photon_density,
    marginal_constants,
    omega0_scaled,
    sample_biphoton_times,
    sample_times,
    sample_times_with_background,
    single_photon_density,
    survival,
)

FIG_SETS = [(0.4e9, 4.0), (0.27e9, 4.0), (0.4e9, 2.52), (0.27e9, 2.52)]


def _quad_density(fn, params, t_end):
    """Piecewise quadrature of a per-bin density divided by dt."""
    period = 2 * math.pi / params.rabi
    edges = np.append(np.arange(0.0, t_end, period), t_end)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda t: fn(params, t) / params.dt, a, b,
                      epsabs=1e-16, epsrel=1e-13)
        total += val
    return total


def _t_end(params):
    # envelope decayed to ~1e-14 of its peak
    return 70.0 / params.decay_rate


def test_linewidth_value():
    assert np.isclose(ATOM_LINEWIDTH, 2 * math.pi * 6.065e6, rtol=1e-15)


def test_derived_quantities_frozen():
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    assert np.isclose(p.decay_rate, 152430075.55217677, rtol=1e-14)
    assert np.isclose(p.rabi, 392671959.8046051, rtol=1e-14)
    assert np.isclose(p.amplitude, 158172459.45271462, rtol=1e-14)
    assert np.isclose(p.envelope_time, 1.3120770246652542e-08, rtol=1e-14)
    # Omega = sqrt(Omega0^2 - (chi Gamma)^2 / 4) by definition
    assert np.isclose(p.rabi, math.sqrt(p.omega0**2 - p.decay_rate**2 / 4), rtol=1e-15)


def test_parameter_validation():
    with pytest.raises(ValueError):
        WavepacketParams(omega0=-1.0, chi=4.0)
    with pytest.raises(ValueError):
        WavepacketParams(omega0=0.4e9, chi=0.5)  # no de-enhancement below 1
    with pytest.raises(ValueError):
        WavepacketParams(omega0=0.4e9, chi=4.0, dt=0.0)
    with pytest.raises(OverdampedError):
        WavepacketParams(omega0=1e7, chi=4.0)  # chi*Gamma/2 > Omega0


def test_single_atom_limit():
    # chi = 1 and strong driving: envelope decays at the bare linewidth
    p = WavepacketParams(omega0=1e10, chi=1.0)
    assert np.isclose(p.decay_rate, ATOM_LINEWIDTH, rtol=1e-15)
    assert np.isclose(p.rabi, 1e10, rtol=1e-4)


def test_densities_normalized():
    for om0, chi in FIG_SETS:
        p = WavepacketParams(omega0=om0, chi=chi)
        for fn in (single_photon_density, first_photon_density, delay_density):
            assert np.isclose(_quad_density(fn, p, _t_end(p)), 1.0, rtol=0, atol=1e-10)


def test_density_zero_at_origin_and_nonnegative():
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    assert single_photon_density(p, 0.0) == 0.0
    assert first_photon_density(p, 0.0) == 0.0
    t = np.linspace(0, 60e-9, 4001)
    assert np.all(np.asarray(single_photon_density(p, t)) >= 0)
    assert np.all(np.asarray(first_photon_density(p, t)) >= 0)
    assert np.all(np.asarray(delay_density(p, t)) >= 0)
    # the delay density starts at its maximum instead of a node
    d = np.asarray(delay_density(p, t))
    assert d[0] == d.max()


def test_negative_times_rejected():
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    with pytest.raises(ValueError):
        single_photon_density(p, -1e-9)


def test_survival_is_complement_of_quadrature():
    p = WavepacketParams(omega0=0.27e9, chi=4.0)
    for t_val in (0.0, 2e-9, 10e-9, 30e-9):
        left = _quad_density(single_photon_density, p, t_val) if t_val else 0.0
        assert np.isclose(survival(p, t_val), 1.0 - left, rtol=0, atol=1e-12)
    assert np.isclose(survival(p, 0.0), 1.0, rtol=1e-14)
    t = np.linspace(0, 80e-9, 3000)
    s = np.asarray(survival(p, t))
    assert np.all(np.diff(s) <= 1e-15)
    assert np.isclose(emission_cdf(p, _t_end(p)), 1.0, atol=1e-9)


def test_read_window_truncation_mass():
    # mass beyond a 190 ns gate, small but parameter dependent
    tail = {chi: float(survival(WavepacketParams(omega0=0.4e9, chi=chi), 190e-9))
            for chi in (4.0, 2.52)}
    assert tail[4.0] < 1e-6
    assert tail[2.52] < 2e-4


def test_biphoton_joint_density_symmetric_product():
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    t1, t2 = 3.1e-9, 7.7e-9
    j12 = biphoton_joint_density(p, t1, t2)
    assert np.isclose(j12, biphoton_joint_density(p, t2, t1), rtol=1e-15)
    assert np.isclose(
        j12,
        single_photon_density(p, t1) * single_photon_density(p, t2),
        rtol=1e-15,
    )


def test_first_photon_closed_form_matches_quadrature():
    p = WavepacketParams(omega0=0.35e9, chi=3.3)

    def marginal(t):
        upper = _t_end(p)
        period = 2 * math.pi / p.rabi
        edges = np.arange(t, upper + period, period)
        tail = sum(
            quad(lambda u: single_photon_density(p, u) / p.dt, a, b,
                 epsabs=1e-16, epsrel=1e-13)[0]
            for a, b in zip(edges[:-1], edges[1:])
        )
        return 2.0 * (single_photon_density(p, t) / p.dt) * tail

    for t in (0.5e-9, 2e-9, 5e-9, 11e-9, 20e-9):
        want = marginal(t) * p.dt
        assert np.isclose(first_photon_density(p, t), want, rtol=1e-9, atol=1e-18)


def test_delay_closed_form_matches_quadrature():
    p = WavepacketParams(omega0=0.35e9, chi=3.3)

    def marginal(tau):
        upper = _t_end(p)
        period = 2 * math.pi / p.rabi
        edges = np.arange(0.0, upper + period, period)
        return 2.0 * sum(
            quad(
                lambda u: (single_photon_density(p, u) / p.dt)
                * (single_photon_density(p, u + tau) / p.dt),
                a, b, epsabs=1e-16, epsrel=1e-13,
            )[0]
            for a, b in zip(edges[:-1], edges[1:])
        )

    for tau in (0.0, 1e-9, 4e-9, 9e-9, 25e-9):
        want = marginal(tau) * p.dt
        assert np.isclose(delay_density(p, tau), want, rtol=1e-9, atol=1e-18)


@given(
    omega0=st.floats(min_value=1.5e8, max_value=8e8),
    chi=st.floats(min_value=1.0, max_value=7.0),
)
def test_normalization_property(omega0, chi):
    p = WavepacketParams(omega0=omega0, chi=chi)
    assert np.isclose(_quad_density(single_photon_density, p, _t_end(p)),
                      1.0, rtol=0, atol=1e-8)


def test_envelope_curve_rates():
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    t = np.array([0.0, 5e-9, 10e-9])
    for model, rate in (("single", p.decay_rate / 2),
                        ("first", p.decay_rate),
                        ("delay", p.decay_rate / 2)):
        env = np.asarray(envelope_curve(p, t, model))
        assert np.allclose(env[1:] / env[0], np.exp(-rate * t[1:]), rtol=1e-12)
    with pytest.raises(ValueError):
        envelope_curve(p, t, "unknown")


def test_chi_from_geometry_value():
    geom = EnsembleGeometry(n_atoms=1.1e6, waist=75e-6, wavelength=780e-9)
    assert np.isclose(chi_from_geometry(geom), 4.013697286257696, rtol=1e-12)


def test_parameter_scalings():
    assert np.isclose(chi_scaled(4.0, 15.9 / 31.4), 2.519108280254777, rtol=1e-13)
    assert np.isclose(omega0_scaled(0.4e9, 1.76 / 3.95), 267004006.03831086, rtol=1e-13)
    # scaling by 1 is the identity; chi = 1 is a fixed point
    assert chi_scaled(3.7, 1.0) == 3.7
    assert chi_scaled(1.0, 0.123) == 1.0
    assert omega0_scaled(2.5e8, 1.0) == 2.5e8


def test_sampler_deterministic_and_matches_cdf():
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    a = sample_times(p, 20_000, seed=13)
    b = sample_times(p, 20_000, seed=13)
    assert np.array_equal(a, b)
    assert np.all(a >= 0)
    stat = kstest(a, lambda t: np.asarray(emission_cdf(p, t)))
    assert stat.pvalue > 1e-3


def test_biphoton_sampler_consistency():
    p = WavepacketParams(omega0=0.27e9, chi=2.52)
    first, second, delay = sample_biphoton_times(p, 20_000, seed=14)
    assert np.all(first <= second)
    assert np.allclose(delay, second - first, rtol=0, atol=0)
    # the minimum of two independent draws follows the first-photon marginal
    def first_cdf(t):
        s = np.asarray(survival(p, t))
        return 1.0 - s**2
    stat = kstest(first, first_cdf)
    assert stat.pvalue > 1e-3


def test_background_sampler_and_density(tmp_path):
    p = WavepacketParams(omega0=0.4e9, chi=4.0)
    window = 190e-9
    frac = 0.25
    times = sample_times_with_background(p, 200_000, seed=15,
                                         background=frac, window=window)
    assert np.all((times >= 0) & (times <= window))
    # long-time plateau: beyond the signal support only background remains
    tail = np.mean(times > 120e-9)
    assert np.isclose(tail, frac * (window - 120e-9) / window, rtol=0.05)
    # per-bin density sums to 1 on the gate
    t = (np.arange(int(window / p.dt)) + 0.5) * p.dt
    dens = np.asarray(density_with_background(p, t, frac, window))
    assert np.isclose(dens.sum(), 1.0, rtol=0, atol=1e-6)
    with pytest.raises(ValueError):
        density_with_background(p, t, 1.5, window)
