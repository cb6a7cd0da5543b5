"""Grid and radial-profile numerics on two-dimensional phase space.

Grids are sampled at cell centers and integrated with the midpoint rule, so
every weight is the cell area and marginals, totals and moments share one
set of quadrature weights.  Radial profiles are integrated adaptively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate as spi
from scipy import ndimage, optimize

from .errors import DegenerateDensityError, GridFormatError, QuadratureError
from .states import RadialProfile

MIN_CELLS = 8
GRID_HEADER = ("q_min", "q_max", "n_q", "p_min", "p_max", "n_p", "purity")


@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    """Uniformly sampled real function on the rectangle [q_min, q_max] x [p_min, p_max].

    ``values[i, j]`` is the value at the center of cell (i, j), i along q.
    ``center`` is the point from which the radial variable x is measured,
    when one is known.  ``labels`` name the two axes (``("t", "omega")`` for
    time-frequency grids).
    """

    q_min: float
    q_max: float
    p_min: float
    p_max: float
    values: np.ndarray
    purity: float = 1.0
    center: Optional[tuple[float, float]] = None
    labels: tuple[str, str] = ("q", "p")

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"grid values must be 2-D, got shape {values.shape}")
        if min(values.shape) < MIN_CELLS:
            raise ValueError(f"grid needs at least {MIN_CELLS} cells per axis, got {values.shape}")
        if not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise ValueError("grid bounds must satisfy q_max > q_min and p_max > p_min")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        if not 0.0 < self.purity <= 1.0:
            raise ValueError(f"purity must lie in (0, 1], got {self.purity!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.center is not None:
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def n_q(self) -> int:
        return self.values.shape[0]

    @property
    def n_p(self) -> int:
        return self.values.shape[1]

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    @property
    def q_axis(self) -> np.ndarray:
        return self.q_min + (np.arange(self.n_q) + 0.5) * self.dq

    @property
    def p_axis(self) -> np.ndarray:
        return self.p_min + (np.arange(self.n_p) + 0.5) * self.dp

    @property
    def window(self) -> tuple[float, float, float, float]:
        return (self.q_min, self.q_max, self.p_min, self.p_max)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q_axis, self.p_axis, indexing="ij")

    def radial_x(self) -> np.ndarray:
        """Squared distance of every cell center from ``center``."""
        if self.center is None:
            raise ValueError("grid has no declared center")
        q, p = self.mesh()
        return (q - self.center[0]) ** 2 + (p - self.center[1]) ** 2

    def with_values(self, values) -> "PhaseSpaceGrid":
        return replace(self, values=values)

    def same_domain(self, other: "PhaseSpaceGrid") -> bool:
        return self.values.shape == other.values.shape and np.allclose(
            self.window, other.window, rtol=1e-12, atol=1e-12
        )

    def is_normalized(self, tol: float = 1e-6) -> bool:
        return abs(integrate(self) - 1.0) <= tol


@dataclass(frozen=True)
class Moments:
    """First and central second moments of a phase-space density.

    ``signed`` is set when the source had negative values, in which case the
    variances are not those of a probability density.
    """

    mean_q: float
    mean_p: float
    var_q: float
    var_p: float
    uncertainty_product: float
    signed: bool = False

    @property
    def dispersion_sum(self) -> float:
        return self.var_q + self.var_p


def integrate(grid: PhaseSpaceGrid) -> float:
    """Midpoint-rule integral of the grid over its rectangle."""
    return float(grid.values.sum() * grid.cell_area)


def rasterize(
    profile: RadialProfile,
    center: tuple[float, float] = (0.0, 0.0),
    window: Optional[Sequence[float]] = None,
    shape: tuple[int, int] = (512, 512),
    purity: Optional[float] = None,
) -> PhaseSpaceGrid:
    """Sample ``profile((q - q_c)**2 + (p - p_c)**2)`` at cell centers.

    The default window is ``center +- 8`` on both axes.
    """
    q_c, p_c = center
    if window is None:
        window = (q_c - 8.0, q_c + 8.0, p_c - 8.0, p_c + 8.0)
    n_q, n_p = shape
    if n_q < MIN_CELLS or n_p < MIN_CELLS:
        raise ValueError(f"window needs at least {MIN_CELLS} cells per axis, got {shape}")
    q_min, q_max, p_min, p_max = (float(v) for v in window)
    q = q_min + (np.arange(n_q) + 0.5) * (q_max - q_min) / n_q
    p = p_min + (np.arange(n_p) + 0.5) * (p_max - p_min) / n_p
    x = (q[:, None] - q_c) ** 2 + (p[None, :] - p_c) ** 2
    values = np.broadcast_to(profile(x), x.shape)
    return PhaseSpaceGrid(
        q_min, q_max, p_min, p_max, values,
        purity=profile.purity if purity is None else purity,
        center=(q_c, p_c),
    )


def marginal_q(grid: PhaseSpaceGrid) -> np.ndarray:
    """Density over q: each row integrated over p."""
    return grid.values.sum(axis=1) * grid.dp


def marginal_p(grid: PhaseSpaceGrid) -> np.ndarray:
    """Density over p: each column integrated over q."""
    return grid.values.sum(axis=0) * grid.dq


def integrate_1d(density: np.ndarray, step: float) -> float:
    return float(np.asarray(density).sum() * step)


def moments(grid: PhaseSpaceGrid) -> Moments:
    mass = integrate(grid)
    if not mass > 0:
        raise DegenerateDensityError(f"density has non-positive total mass {mass:g}")
    rho_q = marginal_q(grid) / mass
    rho_p = marginal_p(grid) / mass
    q, p = grid.q_axis, grid.p_axis
    mean_q = float((q * rho_q).sum() * grid.dq)
    mean_p = float((p * rho_p).sum() * grid.dp)
    var_q = float(((q - mean_q) ** 2 * rho_q).sum() * grid.dq)
    var_p = float(((p - mean_p) ** 2 * rho_p).sum() * grid.dp)
    product = math.sqrt(var_q * var_p) if var_q * var_p >= 0 else float("nan")
    return Moments(mean_q, mean_p, var_q, var_p, product, signed=bool(grid.values.min() < 0))


def rotate(
    grid: PhaseSpaceGrid,
    angle: float,
    tail: Optional[Callable] = None,
    order: int = 3,
) -> PhaseSpaceGrid:
    """Rotate the sampled function by ``angle`` about the window center.

    New values are ``f(R(-angle) z)`` interpolated from the samples with a
    cubic B-spline (``order=1`` gives bilinear).  Multiples of pi/2 are done
    by exact index permutation.  Points that map outside the window take
    ``tail(q, p)`` when supplied, else 0.
    """
    if not (
        grid.n_q == grid.n_p
        and math.isclose(grid.q_max - grid.q_min, grid.p_max - grid.p_min, rel_tol=1e-12)
    ):
        raise ValueError("rotation needs a square window with equal cell counts")
    quarter = angle / (0.5 * np.pi)
    k = round(quarter)
    if abs(quarter - k) < 1e-12:
        # new[i, j] = old[j, n-1-i] for a quarter turn, which is np.rot90
        return grid.with_values(np.rot90(grid.values, k=k % 4))
    qc = 0.5 * (grid.q_min + grid.q_max)
    pc = 0.5 * (grid.p_min + grid.p_max)
    q, p = grid.mesh()
    cth, sth = math.cos(angle), math.sin(angle)
    q_src = qc + (q - qc) * cth + (p - pc) * sth
    p_src = pc - (q - qc) * sth + (p - pc) * cth
    iq = (q_src - grid.q_min) / grid.dq - 0.5
    ip = (p_src - grid.p_min) / grid.dp - 0.5
    values = ndimage.map_coordinates(
        np.asarray(grid.values), [iq, ip], order=order, mode="constant", cval=0.0, prefilter=order > 1
    )
    if tail is not None:
        outside = (iq < 0) | (iq > grid.n_q - 1) | (ip < 0) | (ip > grid.n_p - 1)
        values[outside] = tail(q_src[outside], p_src[outside])
    return grid.with_values(values)


def radial_integral(
    f: RadialProfile,
    power: int = 0,
    upper: float = math.inf,
    lower: float = 0.0,
    epsabs: float = 1e-12,
    limit: int = 200,
) -> float:
    """``pi * int_lower^upper x**power f(x) dx`` by adaptive Gauss-Kronrod.

    The range is clipped to ``[0, f.x_tail]`` and split at ``f.breakpoints``.
    """
    upper = min(upper, f.x_tail)
    lower = max(lower, 0.0)
    if upper <= lower:
        return 0.0
    edges = [lower, *(b for b in f.breakpoints if lower < b < upper), upper]

    if power:
        def integrand(x):
            return x**power * f(x)
    else:
        integrand = f

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err, info, *rest = spi.quad(
            integrand, a, b, epsabs=epsabs / len(edges), epsrel=1e-13, limit=limit, full_output=1
        )
        ier = 0 if not rest else (1 if "maximum number of subdivisions" in rest[0] else 2)
        if ier == 1 or (rest and err > 1e3 * epsabs):
            raise QuadratureError(f"radial quadrature on [{a:g}, {b:g}] did not converge: {rest[0]}")
        total += val
    return float(np.pi * total)


def radial_marginal(f: RadialProfile, q, epsabs: float = 1e-12) -> np.ndarray:
    """Marginal density ``int f(q**2 + p**2) dp`` at offsets ``q`` from the center."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.empty(q.shape)
    for idx, qi in np.ndenumerate(q):
        q2 = qi * qi
        p_hi = math.sqrt(max(f.x_tail - q2, 0.0))
        if p_hi == 0.0:
            out[idx] = 0.0
            continue
        kinks = sorted({math.sqrt(b - q2) for b in f.breakpoints if q2 < b < f.x_tail})
        edges = [0.0, *(k for k in kinks if 0 < k < p_hi), p_hi]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            total += spi.quad(lambda p: float(f(q2 + p * p)), a, b, epsabs=epsabs, epsrel=1e-12, limit=200)[0]
        out[idx] = 2.0 * total
    return out


def profile_extremum(f: RadialProfile, kind: str = "max", n_samples: int = 4097) -> tuple[float, float]:
    """Location and value of the global max (or min) of ``f`` on ``[0, x_tail]``."""
    sign = 1.0 if kind == "max" else -1.0
    xs = np.linspace(0.0, f.x_tail, n_samples)
    vals = sign * f(xs)
    i = int(np.argmax(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n_samples - 1)]
    res = optimize.minimize_scalar(
        lambda x: -sign * float(f(x)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}
    )
    if -res.fun >= vals[i]:
        return float(res.x), sign * float(-res.fun)
    return float(xs[i]), sign * float(vals[i])


def sign_changes(g: Callable, lo: float, hi: float, n_samples: int = 4097) -> list[float]:
    """All roots of ``g`` on ``[lo, hi]`` that show up as sign changes on a sample ladder."""
    xs = np.linspace(lo, hi, n_samples)
    vals = g(xs)
    roots = []
    for i in range(n_samples - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(float(xs[i]))
        elif a * b < 0:
            roots.append(optimize.brentq(g, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


# -- grid files ---------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def format_grid(grid: PhaseSpaceGrid, comments: Iterable[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    if grid.labels != ("q", "p"):
        lines.append(f"# axes: {grid.labels[0]},{grid.labels[1]}")
    lines.append(
        ",".join([_fmt(grid.q_min), _fmt(grid.q_max), str(grid.n_q),
                  _fmt(grid.p_min), _fmt(grid.p_max), str(grid.n_p), _fmt(grid.purity)])
    )
    lines.extend(",".join(_fmt(v) for v in row) for row in grid.values)
    return "\n".join(lines) + "\n"


def write_grid(grid: PhaseSpaceGrid, path, comments: Iterable[str] = ()) -> None:
    """Write ``grid`` in the CSV grid format (header line, then one row per q)."""
    Path(path).write_text(format_grid(grid, comments), encoding="utf-8")


def _parse_float(token: str, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise GridFormatError(f"not a number: {token.strip()!r}", lineno) from None
    if not math.isfinite(v):
        raise GridFormatError(f"non-finite value {token.strip()!r}", lineno)
    return v


def parse_grid(text: str, center: Optional[tuple[float, float]] = None) -> PhaseSpaceGrid:
    """Parse the CSV grid format.

    Line 1 (after optional ``#`` comment lines) holds
    ``q_min,q_max,n_q,p_min,p_max,n_p,purity``; then ``n_q`` rows of ``n_p``
    values, each row a fixed q in ascending order.
    """
    lines = text.splitlines()
    labels = ("q", "p")
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if body.startswith("axes:"):
            parts = [s.strip() for s in body[5:].split(",")]
            if len(parts) == 2:
                labels = (parts[0], parts[1])
        i += 1
    if i >= len(lines):
        raise GridFormatError("missing header", i + 1)
    header_line = i + 1
    fields = lines[i].split(",")
    if len(fields) != len(GRID_HEADER):
        raise GridFormatError(
            f"header must have {len(GRID_HEADER)} fields ({','.join(GRID_HEADER)}), got {len(fields)}",
            header_line,
        )
    head = {}
    for name, tok in zip(GRID_HEADER, fields):
        if name in ("n_q", "n_p"):
            try:
                head[name] = int(tok)
            except ValueError:
                raise GridFormatError(f"{name} must be an integer, got {tok.strip()!r}", header_line) from None
        else:
            head[name] = _parse_float(tok, header_line)
    n_q, n_p = head["n_q"], head["n_p"]
    if n_q < MIN_CELLS or n_p < MIN_CELLS:
        raise GridFormatError(f"need at least {MIN_CELLS} cells per axis, got {n_q}x{n_p}", header_line)
    if not (head["q_max"] > head["q_min"] and head["p_max"] > head["p_min"]):
        raise GridFormatError("bounds must satisfy q_max > q_min and p_max > p_min", header_line)
    if not 0.0 < head["purity"] <= 1.0:
        raise GridFormatError(f"purity must lie in (0, 1], got {head['purity']:g}", header_line)
    rows = [ln for ln in enumerate(lines[i + 1:], start=header_line + 1) if ln[1].strip()]
    if len(rows) != n_q:
        raise GridFormatError(f"expected {n_q} data rows, found {len(rows)}", header_line + min(len(rows), n_q) + 1)
    values = np.empty((n_q, n_p))
    for r, (lineno, line) in enumerate(rows):
        toks = line.split(",")
        if len(toks) != n_p:
            raise GridFormatError(f"expected {n_p} values, found {len(toks)}", lineno)
        try:
            row = np.array(toks, dtype=float)
        except ValueError:
            row = np.array([_parse_float(t, lineno) for t in toks])
        if not np.all(np.isfinite(row)):
            bad = toks[int(np.flatnonzero(~np.isfinite(row))[0])]
            raise GridFormatError(f"non-finite value {bad.strip()!r}", lineno)
        values[r] = row
    return PhaseSpaceGrid(
        head["q_min"], head["q_max"], head["p_min"], head["p_max"], values,
        purity=head["purity"], center=center, labels=labels,
    )


def read_grid(path, center: Optional[tuple[float, float]] = None) -> PhaseSpaceGrid:
    return parse_grid(Path(path).read_text(encoding="utf-8"), center=center)
