"""Positive, normalized densities closest to a Wigner function.

Minimizing ``int (P - W)**2`` over P >= 0 with fixed mass gives the
thresholded density ``P = max(W - c, 0)``, where the constant ``c`` makes P
integrate to one.  Adding a constraint on the rotationally invariant second
moment ``int x P`` inside a disc ``x <= x_max`` gives
``P = max(W - c - d x, 0)`` there and ``P = W`` outside.

The deviation is reported as

    sigma2 = int (P - W)**2 / int W**2 = (2 pi / purity) int (P - W)**2

using the Moyal identity ``int W**2 = purity / (2 pi)``.

Every function accepts either a :class:`~phaseopt.states.RadialProfile`
(exact radial quadrature) or a :class:`~phaseopt.phasespace.PhaseSpaceGrid`
(midpoint rule).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np

from . import phasespace as ps
from .errors import (
    BracketError,
    ConvergenceError,
    DomainMismatchError,
    NotNormalizedError,
)
from .phasespace import PhaseSpaceGrid
from .states import RadialProfile

log = logging.getLogger(__name__)

Density = Union[RadialProfile, PhaseSpaceGrid]

#: Dispersion-constraint cutoffs used for the n = 1 and n = 2 displaced Fock states.
DEFAULT_X_MAX = {1: 18.0, 2: 15.0}

NORMALIZATION_TOL = 1e-6


@dataclass
class OptimResult:
    """Outcome of one optimization run.

    ``c`` and ``d`` are the multipliers of the mass and dispersion
    constraints (``d = 0`` when only the mass is constrained) and ``x_max``
    the radius of the constrained disc (``inf`` for the whole plane).
    """

    c: float
    d: float = 0.0
    x_max: float = math.inf
    sigma2: float = 0.0
    uncertainty_product: float = math.nan
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    converged: bool = True
    density: Optional[Density] = field(default=None, repr=False, compare=False)
    history: list = field(default_factory=list, repr=False, compare=False)

    def to_text(self) -> str:
        """Flat ``key = value`` block; floats are written round-trip exact."""
        out = []
        for f in fields(self):
            if f.name in ("density", "residuals", "history"):
                continue
            v = getattr(self, f.name)
            out.append(f"{f.name} = {_fmt_value(v)}")
        for k, v in self.residuals.items():
            out.append(f"residual.{k} = {_fmt_value(v)}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OptimResult":
        kw: dict = {"residuals": {}}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key.startswith("residual."):
                kw["residuals"][key[len("residual."):]] = float(raw)
            elif key == "iterations":
                kw[key] = int(raw)
            elif key == "converged":
                kw[key] = raw == "true"
            elif key in {f.name for f in fields(cls)}:
                kw[key] = float(raw)
        return cls(**kw)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


# -- representation-agnostic helpers -----------------------------------------


def total_mass(f: Density) -> float:
    if isinstance(f, PhaseSpaceGrid):
        return ps.integrate(f)
    return ps.radial_integral(f)


def _extremum(f: Density, kind: str) -> float:
    if isinstance(f, PhaseSpaceGrid):
        return float(f.values.max() if kind == "max" else f.values.min())
    return ps.profile_extremum(f, kind)[1]


def _check_kinds(P: Density, W: Density) -> None:
    if isinstance(P, PhaseSpaceGrid) != isinstance(W, PhaseSpaceGrid):
        raise DomainMismatchError("cannot compare a radial profile with a grid")
    if isinstance(P, PhaseSpaceGrid):
        if not P.same_domain(W):
            raise DomainMismatchError("grids differ in window or resolution")
    elif P.x_tail != W.x_tail:
        raise DomainMismatchError(f"radial profiles differ in x_tail ({P.x_tail} vs {W.x_tail})")


def threshold_density(W: Density, c: float, d: float = 0.0, x_max: float = math.inf) -> Density:
    """``max(W - c - d x, 0)`` inside ``x <= x_max`` and ``W`` outside."""
    if isinstance(W, PhaseSpaceGrid):
        if d == 0.0 and math.isinf(x_max):
            return W.with_values(np.maximum(W.values - c, 0.0))
        if W.center is None:
            raise ValueError("dispersion constraint needs a grid with a declared center")
        x = W.radial_x()
        inner = np.maximum(W.values - c - d * x, 0.0)
        return W.with_values(np.where(x <= x_max, inner, W.values))

    upper = min(x_max, W.x_tail)
    roots = ps.sign_changes(lambda x: W(x) - c - d * x, 0.0, upper)

    def p(x):
        x = np.asarray(x, dtype=float)
        w = W(x)
        return np.where(x <= x_max, np.maximum(w - c - d * x, 0.0), w)

    return RadialProfile(
        p, x_tail=W.x_tail, breakpoints=(*W.breakpoints, *roots, x_max), purity=W.purity
    )


def constraint_integral(W: Density, c: float) -> float:
    """Integral of ``W - c`` over the region where it is non-negative."""
    return total_mass(threshold_density(W, c))


def sigma2(P: Density, W: Density, purity: Optional[float] = None) -> float:
    """Mean-square fractional deviation ``(2 pi / purity) int (P - W)**2``.

    ``purity`` defaults to the one carried by ``W``.
    """
    _check_kinds(P, W)
    if purity is None:
        purity = W.purity
    if not purity > 0:
        raise ValueError(f"purity must be positive, got {purity!r}")
    if isinstance(W, PhaseSpaceGrid):
        sq = float(((P.values - W.values) ** 2).sum() * W.cell_area)
    else:
        diff = RadialProfile(
            lambda x: (P(x) - W(x)) ** 2,
            x_tail=W.x_tail,
            breakpoints=(*P.breakpoints, *W.breakpoints),
        )
        sq = ps.radial_integral(diff)
    return 2.0 * np.pi / purity * sq


def sigma2_ratio(P: Density, W: Density) -> float:
    """``int (P - W)**2 / int W**2`` computed directly, without the Moyal identity."""
    _check_kinds(P, W)
    if isinstance(W, PhaseSpaceGrid):
        return float(((P.values - W.values) ** 2).sum() / (W.values ** 2).sum())
    w2 = ps.radial_integral(RadialProfile(lambda x: W(x) ** 2, x_tail=W.x_tail, breakpoints=W.breakpoints))
    return sigma2(P, W, purity=1.0) / (2.0 * np.pi * w2)


def uncertainty_product(P: Density) -> float:
    """Delta q * Delta p of a density.

    A radial profile has its means at the center and var_q = var_p =
    (pi/2) int x P dx / mass.
    """
    if isinstance(P, PhaseSpaceGrid):
        return ps.moments(P).uncertainty_product
    return 0.5 * ps.radial_integral(P, power=1) / ps.radial_integral(P)


# -- solvers -------------------------------------------------------------------


def solve_c(W: Density, tol: float = 1e-10, c_tol: float = 1e-12, max_iter: int = 200) -> OptimResult:
    """Closest positive normalized density with only the mass constraint.

    ``c`` is found by bisection on ``[0, max W]``, where the constraint
    integral decreases monotonically from ``>= 1`` to 0.
    """
    mass = total_mass(W)
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise NotNormalizedError(mass, NORMALIZATION_TOL)

    lo, f_lo = 0.0, constraint_integral(W, 0.0) - 1.0
    iterations = 0
    if _extremum(W, "min") >= 0.0 or f_lo <= tol:
        c = 0.0
    else:
        hi = _extremum(W, "max")
        f_hi = -1.0  # nothing survives the threshold at max W
        if not f_lo > 0.0 > f_hi:
            raise BracketError(f"constraint integral does not bracket 1 on [0, {hi:g}]")
        while hi - lo > c_tol and iterations < max_iter:
            iterations += 1
            mid = 0.5 * (lo + hi)
            if constraint_integral(W, mid) - 1.0 > 0.0:
                lo = mid
            else:
                hi = mid
        c = 0.5 * (lo + hi)

    P = threshold_density(W, c)
    residual = total_mass(P) - 1.0
    result = OptimResult(
        c=c,
        sigma2=sigma2(P, W),
        uncertainty_product=uncertainty_product(P),
        iterations=iterations,
        residuals={"mass": residual},
        converged=abs(residual) < max(tol, abs(mass - 1.0) + tol),
        density=P,
    )
    log.debug("solve_c: c=%.12g sigma2=%.12g after %d bisections", c, result.sigma2, iterations)
    return result


def quantumness(W: Density) -> float:
    """sigma2 of the closest positive density; zero iff W is non-negative."""
    return solve_c(W).sigma2


def _disc_integrals(W: Density, x_max: float):
    """Return a function giving (mass, x-moment) of a density inside ``x <= x_max``."""
    if isinstance(W, PhaseSpaceGrid):
        x = W.radial_x()
        mask = x <= x_max
        area = W.cell_area

        def moments(P):
            v = P.values[mask]
            return float(v.sum() * area), float((x[mask] * v).sum() * area)

        return moments

    def moments(P):
        return ps.radial_integral(P, 0, upper=x_max), ps.radial_integral(P, 1, upper=x_max)

    return moments


def solve_cd(
    W: Density,
    x_max: float,
    target_x_moment: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    d_fixed: Optional[float] = None,
) -> OptimResult:
    """Closest positive density that also keeps the dispersion sum of ``W``.

    Inside the disc ``x <= x_max`` both the mass and ``int x P`` are matched
    to those of ``W`` (or to ``target_x_moment``); outside, ``P = W``.  The
    pair ``(c, d)`` is found by damped Newton iteration with a
    central-difference Jacobian, starting from the mass-only solution.
    Passing ``d_fixed`` drops the moment constraint and solves for ``c``
    alone with ``d`` held fixed.
    """
    if isinstance(W, PhaseSpaceGrid):
        x_all = W.radial_x()
        outside = W.values[x_all > x_max]
        x_scale = float(min(x_max, x_all.max()))
    else:
        x_scale = min(x_max, W.x_tail)
        outside = W(np.linspace(x_scale, W.x_tail, 4097)) if x_max < W.x_tail else np.zeros(1)
    if outside.size and outside.min() < 0.0:
        raise ValueError(f"W is negative beyond x_max = {x_max:g}; choose a larger cutoff")

    if _extremum(W, "min") >= 0.0:
        P = W
        return OptimResult(
            c=0.0, d=0.0, x_max=x_max, sigma2=0.0, uncertainty_product=uncertainty_product(W),
            residuals={"mass": 0.0, "x_moment": 0.0}, density=P,
        )

    disc = _disc_integrals(W, x_max)
    target_mass, w_moment = disc(W)
    if target_x_moment is None:
        target_x_moment = w_moment

    def residual(y):
        m, mx = disc(threshold_density(W, y[0], y[1], x_max))
        r = np.array([m - target_mass, mx - target_x_moment])
        return r if d_fixed is None else r[:1]

    scale = _extremum(W, "max")
    h = np.array([1e-6 * scale, 1e-6 * scale / x_scale])
    y = np.array([solve_c(W).c, 0.0 if d_fixed is None else float(d_fixed)])
    r = residual(y)
    it = 0
    while np.max(np.abs(r)) >= tol and it < max_iter:
        it += 1
        if d_fixed is None:
            J = np.empty((2, 2))
            for k in range(2):
                e = np.zeros(2)
                e[k] = h[k]
                J[:, k] = (residual(y + e) - residual(y - e)) / (2 * h[k])
            step = np.linalg.solve(J, -r)
        else:
            e = np.array([h[0], 0.0])
            slope = (residual(y + e) - residual(y - e))[0] / (2 * h[0])
            step = np.array([-r[0] / slope, 0.0])
        t = 1.0
        while t > 1e-8:
            y_new = y + t * step
            r_new = residual(y_new)
            if np.linalg.norm(r_new) < np.linalg.norm(r):
                break
            t *= 0.5
        else:
            break
        y, r = y_new, r_new

    c, d = float(y[0]), float(y[1])
    P = threshold_density(W, c, d, x_max)
    names = ("mass", "x_moment")[: len(r)]
    result = OptimResult(
        c=c, d=d, x_max=x_max,
        sigma2=sigma2(P, W),
        uncertainty_product=uncertainty_product(P),
        iterations=it,
        residuals={k: float(v) for k, v in zip(names, r)},
        converged=bool(np.max(np.abs(r)) < tol),
        density=P,
    )
    if not result.converged:
        raise ConvergenceError(
            f"(c, d) solve stopped after {it} iterations with residuals {result.residuals}", result
        )
    log.debug("solve_cd: c=%.12g d=%.12g sigma2=%.12g in %d steps", c, d, result.sigma2, it)
    return result
