"""Time-frequency transcription: (q, p) -> (t, omega).

The discrete Wigner-Ville distribution of a sampled analytic signal s is

    W[n, k] = (dt / pi) * sum_m s[n + m] conj(s[n - m]) exp(-2i pi k m / M)

on the angular-frequency axis omega_k = pi k / (M dt), k = 0 .. M-1, with
M the next power of two >= len(s) and the lag m running over all values
that stay inside the record.  Summed over omega it returns |s[n]|**2
exactly; summed over t it approximates the energy spectrum
|S(omega)|**2 with S(omega) = (2 pi)**-1/2 sum_n s[n] exp(-i omega t_n) dt.

Grids produced here put time along the first axis and angular frequency
along the second, so ``marginal_q`` is the instantaneous power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import signal as spsignal

from . import optimizer
from .errors import GridFormatError
from .optimizer import OptimResult
from .phasespace import PhaseSpaceGrid

MIN_SAMPLES = 16


@dataclass(frozen=True, eq=False)
class SignalRecord:
    """Uniformly sampled complex signal; sample n sits at ``t0 + n / sample_rate``."""

    samples: np.ndarray
    sample_rate: float
    analytic: bool = False
    t0: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.ndim != 1 or s.size < MIN_SAMPLES:
            raise ValueError(f"signal needs at least {MIN_SAMPLES} samples in one dimension")
        if not np.all(np.isfinite(s)):
            raise ValueError("signal samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate!r}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.dt

    @property
    def energy(self) -> float:
        return float((np.abs(self.samples) ** 2).sum() * self.dt)

    def normalized(self) -> "SignalRecord":
        """Same signal scaled to unit energy."""
        e = self.energy
        if not e > 0:
            raise ValueError("cannot normalize a zero signal")
        return SignalRecord(self.samples / math.sqrt(e), self.sample_rate, self.analytic, self.t0)


def analytic_signal(s: SignalRecord) -> SignalRecord:
    """Analytic signal of the real part (one-sided spectrum doubling)."""
    if s.analytic:
        return s
    return SignalRecord(spsignal.hilbert(s.samples.real), s.sample_rate, True, s.t0)


def _lag_length(n: int) -> int:
    return max(MIN_SAMPLES, 1 << (n - 1).bit_length())


def _tf_grid(s: SignalRecord, values: np.ndarray) -> PhaseSpaceGrid:
    n, m = values.shape
    d_omega = np.pi / (m * s.dt)
    return PhaseSpaceGrid(
        s.t0 - 0.5 * s.dt, s.t0 + (n - 0.5) * s.dt,
        -0.5 * d_omega, (m - 0.5) * d_omega,
        values, labels=("t", "omega"),
    )


def wigner_ville(s: SignalRecord) -> PhaseSpaceGrid:
    """Discrete Wigner-Ville distribution over (t, omega)."""
    if not s.analytic:
        raise ValueError("wigner_ville needs an analytic signal; call analytic_signal first")
    x = np.asarray(s.samples)
    n = x.size
    m = _lag_length(n)
    kernel = np.zeros((n, m), dtype=complex)
    for i in range(n):
        L = min(i, n - 1 - i, m // 2 - 1)
        lags = np.arange(-L, L + 1)
        kernel[i, lags % m] = x[i + lags] * np.conj(x[i - lags])
    # kernel rows are Hermitian in the lag, so their transforms are real
    values = np.fft.fft(kernel, axis=1).real * (s.dt / np.pi)
    return _tf_grid(s, values)


def gaussian_window(u, b: float):
    """Unit-norm Gaussian window with |g|**2 of variance b**2."""
    return np.exp(-np.asarray(u) ** 2 / (4 * b * b)) / ((2 * np.pi) ** 0.25 * math.sqrt(b))


def spectrogram(s: SignalRecord, b: float) -> PhaseSpaceGrid:
    """Squared Gaussian-windowed transform, on the same grid as :func:`wigner_ville`.

    S(t, omega) = (2 pi)**-1 |sum_m s[m] g(t_m - t) exp(-i omega t_m) dt|**2,
    which equals the WVD smeared by the window's own WVD, so time and
    frequency variances grow by b**2 and 1/(4 b**2).
    """
    if not b > 0:
        raise ValueError(f"window width must be positive, got {b!r}")
    if not s.analytic:
        raise ValueError("spectrogram needs an analytic signal; call analytic_signal first")
    x = np.asarray(s.samples)
    n = x.size
    m = _lag_length(n)
    t = np.arange(n) * s.dt
    frames = x[None, :] * gaussian_window(t[None, :] - t[:, None], b)
    spec = np.fft.fft(frames, n=2 * m, axis=1)[:, :m] * s.dt
    return _tf_grid(s, np.abs(spec) ** 2 / (2 * np.pi))


def log_second_difference(A, index: int, dt: float) -> float:
    la = np.log(A[index - 1 : index + 2])
    return float((la[2] - 2.0 * la[1] + la[0]) / (dt * dt))


def bandwidth_from_amplitude(A, index: int, dt: float = 1.0) -> float:
    """Squared bandwidth (1/2)((A'/A)**2 - A''/A) that the WVD assigns at one time.

    The expression equals -(1/2) d^2/dt^2 log A, which is evaluated with a
    central second difference; this is exact for Gaussian envelopes.
    """
    A = np.asarray(A, dtype=float)
    if not 0 < index < A.size - 1:
        raise IndexError(f"index {index} needs neighbours on both sides in a record of {A.size}")
    if np.any(A[index - 1 : index + 2] <= 0):
        raise ValueError(f"amplitude must be positive around index {index}")
    return -0.5 * log_second_difference(A, index, dt)


def conditional_moments(P: PhaseSpaceGrid, t_index: int) -> tuple[float, float]:
    """Mean and variance of omega at one time slice of a (possibly signed) density."""
    col = np.asarray(P.values[t_index])
    mass = col.sum()
    if not mass > 0:
        raise ValueError(f"time slice {t_index} carries no mass")
    w = P.p_axis
    mean = float((w * col).sum() / mass)
    return mean, float(((w - mean) ** 2 * col).sum() / mass)


def positive_bandwidth(P: PhaseSpaceGrid, t_index: int) -> float:
    """Conditional variance of omega at time ``t_index`` under a non-negative density."""
    if np.asarray(P.values[t_index]).min() < 0:
        raise ValueError("positive_bandwidth needs a non-negative density")
    return conditional_moments(P, t_index)[1]


@dataclass
class TFAnalysis:
    wvd: PhaseSpaceGrid
    spectrogram: PhaseSpaceGrid
    optimum: OptimResult
    times: np.ndarray
    amplitude_bandwidth: np.ndarray
    positive_bandwidth: np.ndarray
    sigma2_optimum: float = math.nan
    sigma2_spectrogram: float = math.nan
    extras: dict = field(default_factory=dict)


def analyze(s: SignalRecord, b: Optional[float] = None) -> TFAnalysis:
    """WVD, spectrogram, closest positive density and per-time bandwidths.

    The signal is made analytic and scaled to unit energy first, so the WVD
    integrates to one.  Deviations are measured with ``int W**2`` from the
    grid itself rather than the pure-state value.
    """
    s = analytic_signal(s).normalized()
    if b is None:
        b = math.sqrt(0.5)
    W = wigner_ville(s)
    W = W.with_values(W.values / (W.values.sum() * W.cell_area))
    S = spectrogram(s, b)
    S = S.with_values(S.values / (S.values.sum() * S.cell_area))
    opt = optimizer.solve_c(W)
    P = opt.density

    amp = np.abs(np.asarray(s.samples))
    n = amp.size
    amp_bw = np.full(n, np.nan)
    pos = np.full(n, np.nan)
    for i in range(n):
        if 0 < i < n - 1 and np.all(amp[i - 1 : i + 2] > 0):
            amp_bw[i] = bandwidth_from_amplitude(amp, i, s.dt)
        if P.values[i].sum() > 0:
            pos[i] = positive_bandwidth(P, i)
    return TFAnalysis(
        wvd=W,
        spectrogram=S,
        optimum=opt,
        times=s.times,
        amplitude_bandwidth=amp_bw,
        positive_bandwidth=pos,
        sigma2_optimum=optimizer.sigma2_ratio(P, W),
        sigma2_spectrogram=optimizer.sigma2_ratio(S, W),
    )


# -- signal files --------------------------------------------------------------


def parse_signal(text: str) -> SignalRecord:
    """Parse ``sample_rate,<fs>`` followed by one ``re,im`` line per sample."""
    lines = text.splitlines()
    if not lines:
        raise GridFormatError("empty signal file", 1)
    head = [t.strip() for t in lines[0].split(",")]
    if len(head) != 2 or head[0] != "sample_rate":
        raise GridFormatError("header must read 'sample_rate,<value>'", 1)
    try:
        fs = float(head[1])
    except ValueError:
        raise GridFormatError(f"sample rate is not a number: {head[1]!r}", 1) from None
    if not (math.isfinite(fs) and fs > 0):
        raise GridFormatError("sample rate must be positive and finite", 1)
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        toks = line.split(",")
        if len(toks) != 2:
            raise GridFormatError(f"expected 're,im', found {len(toks)} fields", lineno)
        try:
            re_, im_ = float(toks[0]), float(toks[1])
        except ValueError:
            raise GridFormatError(f"not a number in {line.strip()!r}", lineno) from None
        if not (math.isfinite(re_) and math.isfinite(im_)):
            raise GridFormatError("non-finite sample", lineno)
        samples.append(complex(re_, im_))
    if len(samples) < MIN_SAMPLES:
        raise GridFormatError(f"need at least {MIN_SAMPLES} samples, found {len(samples)}", len(lines))
    arr = np.array(samples)
    return SignalRecord(arr, fs, analytic=bool(np.any(arr.imag != 0)))


def read_signal(path) -> SignalRecord:
    return parse_signal(Path(path).read_text(encoding="utf-8"))


def format_signal(s: SignalRecord) -> str:
    lines = [f"sample_rate,{format(s.sample_rate, '.17g')}"]
    lines.extend(f"{format(v.real, '.17g')},{format(v.imag, '.17g')}" for v in s.samples)
    return "\n".join(lines) + "\n"


def write_signal(s: SignalRecord, path) -> None:
    Path(path).write_text(format_signal(s), encoding="utf-8")
