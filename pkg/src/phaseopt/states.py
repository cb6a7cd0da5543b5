"""Closed-form Wigner and Husimi distributions for displaced Fock states.

All quantities use units with hbar = 1 and the quadratures
q = (a + a^dagger)/sqrt(2), p = -i(a - a^dagger)/sqrt(2).  A displaced
n-th oscillator eigenstate (a "generalized coherent state") has phase-space
densities depending on (q, p) only through the squared distance

    x = (q - q_cl)**2 + (p - p_cl)**2

from its classical center, so most functions here return a
:class:`RadialProfile` of ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

#: Radial cutoff for closed-form states; exp(-x) tails beyond it are < 1e-20.
X_TAIL = 60.0


@dataclass(frozen=True)
class StateSpec:
    """A displaced Fock state ``|n>`` centered at ``(q_cl, p_cl)``."""

    n: int = 0
    q_cl: float = 0.0
    p_cl: float = 0.0
    purity: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"Fock index must be a non-negative integer, got {self.n!r}")
        if not 0.0 < self.purity <= 1.0:
            raise ValueError(f"purity must lie in (0, 1], got {self.purity!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def center(self) -> tuple[float, float]:
        return (self.q_cl, self.p_cl)

    def radial_x(self, q, p):
        """Squared phase-space distance of ``(q, p)`` from the center."""
        return (np.asarray(q) - self.q_cl) ** 2 + (np.asarray(p) - self.p_cl) ** 2

    @classmethod
    def from_trajectory(cls, n: int, amplitude: float, phase: float, tau: float) -> "StateSpec":
        """Center moving on q_cl = A cos(tau + phi), p_cl = dq_cl/dtau."""
        return cls(n, amplitude * math.cos(tau + phase), -amplitude * math.sin(tau + phase))


@dataclass(frozen=True)
class HusimiParams:
    """Width ``b`` of the minimum-uncertainty smearing state.

    ``b**2 == 1/2`` gives the Husimi Q function.
    """

    b: float = math.sqrt(0.5)

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"smearing width must be positive, got {self.b!r}")

    @property
    def is_q_function(self) -> bool:
        return math.isclose(self.b * self.b, 0.5, rel_tol=1e-12)


HUSIMI_Q = HusimiParams()


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A real function of the radial variable ``x >= 0``.

    Either ``func`` (vectorized callable) or a tabulation ``knots``/``values``
    must be given; tabulated profiles are linearly interpolated and vanish
    beyond the last knot.  ``breakpoints`` lists points where the function
    has kinks, so quadrature can split there.  The phase-space integral of a
    profile ``g`` is ``pi * int_0^inf g(x) dx``.
    """

    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    x_tail: float = X_TAIL
    knots: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    breakpoints: tuple[float, ...] = field(default=())
    purity: float = 1.0

    def __post_init__(self):
        if self.func is None:
            if self.knots is None or self.values is None:
                raise ValueError("RadialProfile needs func or knots/values")
            knots = np.asarray(self.knots, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if knots.shape != values.shape or knots.ndim != 1:
                raise ValueError("knots and values must be 1-D arrays of equal length")
            if np.any(np.diff(knots) <= 0) or knots[0] < 0:
                raise ValueError("knots must be non-negative and strictly ascending")
            object.__setattr__(self, "knots", knots)
            object.__setattr__(self, "values", values)
        bps = tuple(sorted(float(b) for b in self.breakpoints if 0.0 < b < self.x_tail))
        object.__setattr__(self, "breakpoints", bps)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return self.func(x)
        return np.interp(x, self.knots, self.values, right=0.0)

    @classmethod
    def from_table(cls, knots, values, **kwargs) -> "RadialProfile":
        kwargs.setdefault("x_tail", float(np.asarray(knots)[-1]))
        return cls(knots=knots, values=values, **kwargs)


def laguerre(n: int, y):
    """Laguerre polynomial L_n(y) by the three-term recurrence."""
    y = np.asarray(y, dtype=float)
    prev, cur = np.ones_like(y), 1.0 - y
    if n == 0:
        return prev
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 - y) * cur - k * prev) / (k + 1)
    return cur


def wigner_radial(state: StateSpec) -> RadialProfile:
    """Wigner function of ``state`` as a function of ``x``.

    W_n(x) = (-1)**n / pi * exp(-x) * L_n(2x), with L_n the Laguerre
    polynomial.  For n = 1, 2 this is (2/pi)(x - 1/2)e^-x and
    (2/pi)((x - 1)**2 - 1/2)e^-x.
    """
    n = state.n
    sign = -1.0 if n % 2 else 1.0

    def w(x):
        x = np.asarray(x, dtype=float)
        return sign / np.pi * np.exp(-x) * laguerre(n, 2.0 * x)

    return RadialProfile(w, purity=state.purity)


def husimi_radial(state: StateSpec, params: HusimiParams = HUSIMI_Q) -> RadialProfile:
    """Husimi Q function (2 pi)^-1 |<alpha|n>|^2 with |alpha|^2 = x/2.

    Only the b**2 = 1/2 smearing is rotationally symmetric; use
    :func:`husimi_function` for other widths.
    """
    if not params.is_q_function:
        raise ValueError(
            f"smearing with b**2 = {params.b ** 2:g} is not radially symmetric; "
            "use husimi_function for general b"
        )
    n = state.n
    norm = 1.0 / (2.0 * np.pi * math.factorial(n))

    def q(x):
        x = np.asarray(x, dtype=float)
        return norm * (0.5 * x) ** n * np.exp(-0.5 * x)

    return RadialProfile(q, purity=state.purity)


def hermite_functions(n: int, y) -> np.ndarray:
    """Normalized oscillator eigenfunctions phi_0 .. phi_n evaluated at ``y``.

    Uses the three-term recurrence, which stays stable for large n where
    explicit Hermite polynomials overflow.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty((n + 1,) + y.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * y * y)
    if n >= 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for k in range(1, n):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * y * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def position_density(state: StateSpec, q):
    """Exact position probability density |<q|psi>|^2."""
    return hermite_functions(state.n, np.asarray(q, dtype=float) - state.q_cl)[-1] ** 2


def momentum_density(state: StateSpec, p):
    """Exact momentum probability density; same shape as the position one."""
    return hermite_functions(state.n, np.asarray(p, dtype=float) - state.p_cl)[-1] ** 2


def quantum_variances(state: StateSpec) -> tuple[float, float]:
    """(Delta q)^2 and (Delta p)^2, both n + 1/2 for a displaced Fock state."""
    v = state.n + 0.5
    return v, v


def smeared_variances(state: StateSpec, params: HusimiParams = HUSIMI_Q) -> tuple[float, float]:
    """Variances of the Gaussian-smeared density: shifted by b^2 and 1/(4 b^2)."""
    var_q, var_p = quantum_variances(state)
    b2 = params.b * params.b
    return var_q + b2, var_p + 1.0 / (4.0 * b2)


def wigner_function(state: StateSpec) -> Callable:
    """W(q, p) as a two-argument vectorized callable."""
    prof = wigner_radial(state)
    return lambda q, p: prof(state.radial_x(q, p))


def husimi_function(state: StateSpec, params: HusimiParams = HUSIMI_Q, n_nodes: int = 2049) -> Callable:
    """Smeared density (2 pi)^-1 |(psi_{b,q,p}, psi)|^2 for any width ``b``.

    The overlap with the minimum-uncertainty state is evaluated by the
    trapezoid rule on a window wide enough for both Gaussian envelopes;
    for these integrands the rule converges geometrically.
    """
    b = params.b
    n = state.n
    half = math.sqrt(2 * n + 1) + 12.0

    def qfunc(q, p):
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        lo = min(state.q_cl - half, float(q.min(initial=state.q_cl)) - 12.0 * b)
        hi = max(state.q_cl + half, float(q.max(initial=state.q_cl)) + 12.0 * b)
        s = np.linspace(lo, hi, n_nodes)
        ds = s[1] - s[0]
        # common e^{i p_cl s} phase of the displaced state folded into the kernel
        psi = hermite_functions(n, s - state.q_cl)[-1]
        qq = q[..., None]
        pp = p[..., None]
        kernel = np.exp(-((qq - s) ** 2) / (4 * b * b) - 1j * (pp - state.p_cl) * s)
        overlap = (kernel * psi).sum(axis=-1) * ds / ((2 * np.pi) ** 0.25 * math.sqrt(b))
        return np.abs(overlap) ** 2 / (2 * np.pi)

    return qfunc
