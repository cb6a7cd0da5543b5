import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst
from scipy.integrate import trapezoid

from phaseopt import optimizer as opt
from phaseopt import phasespace as ps
from phaseopt import timefreq as tf
from phaseopt.errors import GridFormatError

FS = 16.0
OMEGA0 = 25.0


def pulse(center=0.0, omega=OMEGA0, t=None):
    t = np.arange(-8, 8, 1 / FS) if t is None else t
    return np.pi**-0.25 * np.exp(-((t - center) ** 2) / 2) * np.exp(1j * omega * t)


@pytest.fixture(scope="module")
def gauss():
    return tf.SignalRecord(pulse(), FS, analytic=True, t0=-8.0)


@pytest.fixture(scope="module")
def two_pulses():
    return tf.SignalRecord((pulse(-3) + pulse(3)) / math.sqrt(2), FS, analytic=True, t0=-8.0)


def energy_spectrum(s, omega):
    t = s.times
    return np.abs(np.exp(-1j * np.outer(omega, t)) @ s.samples * s.dt) ** 2 / (2 * np.pi)


# -- signal record ---------------------------------------------------------------


def test_signal_record_validation():
    with pytest.raises(ValueError):
        tf.SignalRecord(np.ones(8), FS)
    with pytest.raises(ValueError):
        tf.SignalRecord(np.ones((4, 4)), FS)
    bad = np.ones(32)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        tf.SignalRecord(bad, FS)
    with pytest.raises(ValueError):
        tf.SignalRecord(np.ones(32), 0.0)
    with pytest.raises(ValueError):
        tf.SignalRecord(np.zeros(32), FS).normalized()


def test_signal_times_and_energy(gauss):
    assert gauss.times[0] == -8.0 and gauss.times[1] - gauss.times[0] == 1 / FS
    assert gauss.energy == pytest.approx(1.0, abs=1e-14)
    doubled = tf.SignalRecord(2 * gauss.samples, FS, True, -8.0)
    assert doubled.normalized().energy == pytest.approx(1.0, abs=1e-14)


def test_analytic_signal_of_periodic_cosine():
    t = np.arange(128) / FS
    omega = 2 * np.pi * 8 * FS / 128
    a = tf.analytic_signal(tf.SignalRecord(np.cos(omega * t), FS))
    assert a.analytic
    assert np.abs(a.samples - np.exp(1j * omega * t)).max() < 1e-12
    assert tf.analytic_signal(a) is a


# -- Wigner-Ville ----------------------------------------------------------------


def test_wvd_requires_analytic():
    with pytest.raises(ValueError, match="analytic"):
        tf.wigner_ville(tf.SignalRecord(np.ones(32), FS))


def test_wvd_of_gaussian_is_the_analytic_ridge(gauss):
    W = tf.wigner_ville(gauss)
    assert W.labels == ("t", "omega")
    assert W.values.min() >= -1e-10
    t, w = W.mesh()
    exact = np.exp(-(t**2) - (w - OMEGA0) ** 2) / np.pi
    assert np.abs(W.values - exact).max() < 1e-10


def test_wvd_marginals(gauss, two_pulses):
    for s in (gauss, two_pulses):
        W = tf.wigner_ville(s)
        assert np.abs(ps.marginal_q(W) - np.abs(s.samples) ** 2).max() < 1e-6
        assert np.abs(ps.marginal_p(W) - energy_spectrum(s, W.p_axis)).max() < 1e-6


@settings(max_examples=25, deadline=None)
@given(
    centers=hst.lists(hst.floats(-3, 3), min_size=1, max_size=3),
    omegas=hst.lists(hst.floats(15, 35), min_size=3, max_size=3),
)
def test_wvd_time_marginal_is_exact(centers, omegas):
    x = sum(pulse(c, w) for c, w in zip(centers, omegas))
    s = tf.SignalRecord(x, FS, analytic=True, t0=-8.0)
    W = tf.wigner_ville(s)
    assert np.abs(ps.marginal_q(W) - np.abs(x) ** 2).max() < 1e-12


def test_two_pulses_have_negative_cross_terms(two_pulses):
    W = tf.wigner_ville(two_pulses)
    assert W.values.min() < -0.1
    # the interference sits midway between the pulses
    i, _ = np.unravel_index(np.argmin(W.values), W.values.shape)
    assert abs(W.q_axis[i]) < 0.5


def test_zero_signal_gives_zero_grids():
    z = tf.SignalRecord(np.zeros(32), FS, analytic=True)
    assert not tf.wigner_ville(z).values.any()
    assert not tf.spectrogram(z, 1.0).values.any()


# -- spectrogram -----------------------------------------------------------------


def test_spectrogram_nonnegative(two_pulses, rng):
    assert tf.spectrogram(two_pulses, 0.5).values.min() >= 0
    noise = tf.SignalRecord(rng.normal(size=64) + 1j * rng.normal(size=64), FS, analytic=True)
    assert tf.spectrogram(noise, 0.3).values.min() >= 0


@pytest.mark.parametrize("b", [0.5, math.sqrt(0.5), 1.0])
def test_spectrogram_variances_broadened(gauss, b):
    S = tf.spectrogram(gauss, b)
    m = ps.moments(S)
    assert ps.integrate(S) == pytest.approx(1.0, abs=1e-8)
    assert m.var_q == pytest.approx(0.5 + b * b, abs=1e-8)
    assert m.var_p == pytest.approx(0.5 + 1 / (4 * b * b), abs=1e-8)


def test_spectrogram_validation(gauss):
    with pytest.raises(ValueError):
        tf.spectrogram(gauss, 0.0)
    with pytest.raises(ValueError):
        tf.spectrogram(tf.SignalRecord(np.ones(32), FS), 1.0)


def test_gaussian_window_unit_norm():
    u = np.linspace(-20, 20, 40001)
    for b in (0.3, 1.0, 2.5):
        g2 = tf.gaussian_window(u, b) ** 2
        assert trapezoid(g2, u) == pytest.approx(1.0, abs=1e-12)
        assert trapezoid(u * u * g2, u) == pytest.approx(b * b, abs=1e-10)


# -- bandwidth -------------------------------------------------------------------


def test_bandwidth_examples():
    t = np.linspace(-4, 4, 801)
    dt = t[1] - t[0]
    assert tf.bandwidth_from_amplitude(np.full(10, 3.0), 5) == 0.0
    gauss_amp = np.exp(-(t**2) / 2)
    for i in (1, 200, 400, 799):
        assert tf.bandwidth_from_amplitude(gauss_amp, i, dt) == pytest.approx(0.5, abs=1e-9)
    quad = 1 + t**2
    assert tf.bandwidth_from_amplitude(quad, 400, dt) == pytest.approx(-1.0, abs=1e-4)


def test_bandwidth_matches_derivative_form():
    t = np.linspace(-2, 2, 4001)
    dt = t[1] - t[0]
    A = 2 + np.sin(t) + 0.3 * t**2
    dA = np.cos(t) + 0.6 * t
    ddA = -np.sin(t) + 0.6
    for i in (500, 2000, 3500):
        direct = 0.5 * ((dA[i] / A[i]) ** 2 - ddA[i] / A[i])
        assert tf.bandwidth_from_amplitude(A, i, dt) == pytest.approx(direct, abs=1e-6)


def test_bandwidth_errors():
    A = np.linspace(1, 2, 10)
    with pytest.raises(IndexError):
        tf.bandwidth_from_amplitude(A, 0)
    with pytest.raises(IndexError):
        tf.bandwidth_from_amplitude(A, 9)
    A[4] = 0.0
    with pytest.raises(ValueError):
        tf.bandwidth_from_amplitude(A, 4)


def test_positive_bandwidth_of_gaussian(gauss):
    a = tf.analyze(gauss)
    core = np.abs(a.times) <= 4
    assert np.all(np.abs(a.positive_bandwidth[core] - 0.5) < 1e-4)
    # the local Gaussian amplitude gives the same answer through the log formula
    assert np.all(np.abs(a.amplitude_bandwidth[core] - a.positive_bandwidth[core]) < 1e-3)
    S = a.spectrogram
    for i in np.flatnonzero(core)[::16]:
        assert tf.positive_bandwidth(S, i) > a.positive_bandwidth[i]
        assert tf.positive_bandwidth(S, i) == pytest.approx(1.0, abs=1e-6)


def test_positive_bandwidth_errors(two_pulses):
    W = tf.wigner_ville(two_pulses)
    with pytest.raises(ValueError, match="non-negative"):
        tf.positive_bandwidth(W, 128)
    empty = W.with_values(np.zeros_like(W.values))
    with pytest.raises(ValueError, match="no mass"):
        tf.conditional_moments(empty, 3)


def test_quadratic_amplitude_pathology():
    t = np.arange(-1, 1, 1 / FS)
    s = tf.SignalRecord((1 + t**2) * np.exp(1j * OMEGA0 * t), FS, analytic=True, t0=-1.0)
    a = tf.analyze(s)
    i0 = int(np.argmin(np.abs(a.times)))
    assert a.amplitude_bandwidth[i0] == pytest.approx(-1.0, abs=5e-3)
    assert a.amplitude_bandwidth[i0] < 0
    assert np.all(a.positive_bandwidth >= 0)
    assert not np.isnan(a.positive_bandwidth).any()


def test_optimized_density_beats_spectrogram(two_pulses):
    a = tf.analyze(two_pulses)
    P = a.optimum.density
    assert P.values.min() >= 0
    assert ps.integrate(P) == pytest.approx(1.0, abs=1e-8)
    assert a.sigma2_optimum <= a.sigma2_spectrogram
    assert a.sigma2_optimum == pytest.approx(opt.sigma2_ratio(P, a.wvd), rel=1e-14)


def test_analyze_positive_wvd_is_nearly_untouched(gauss):
    a = tf.analyze(gauss)
    assert a.sigma2_optimum < 1e-20
    assert a.sigma2_spectrogram > 0.1


# -- signal files ----------------------------------------------------------------


def test_signal_roundtrip(tmp_path, two_pulses):
    path = tmp_path / "sig.csv"
    tf.write_signal(two_pulses, path)
    back = tf.read_signal(path)
    assert np.array_equal(back.samples, two_pulses.samples)
    assert back.sample_rate == FS and back.analytic


def test_real_signal_file_is_not_analytic():
    text = "sample_rate,8\n" + "".join(f"{math.cos(k)},0\n" for k in range(16))
    s = tf.parse_signal(text)
    assert not s.analytic and s.sample_rate == 8.0


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("rate,8\n" + "1,0\n" * 16, 1),
        ("sample_rate,abc\n" + "1,0\n" * 16, 1),
        ("sample_rate,-2\n" + "1,0\n" * 16, 1),
        ("sample_rate,8\n" + "1,0\n" * 3 + "1,0,0\n" + "1,0\n" * 12, 5),
        ("sample_rate,8\n" + "1,0\n" * 6 + "x,0\n" + "1,0\n" * 9, 8),
        ("sample_rate,8\n" + "1,0\n" * 10 + "nan,0\n" + "1,0\n" * 5, 12),
        ("sample_rate,8\n" + "1,0\n" * 5, 6),
    ],
)
def test_signal_parse_errors(text, line):
    with pytest.raises(GridFormatError) as exc:
        tf.parse_signal(text)
    assert exc.value.line == line
