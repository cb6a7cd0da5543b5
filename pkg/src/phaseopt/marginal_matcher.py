"""Closest positive density that reproduces both marginals of W exactly.

The optimum has the form ``P = max(W - lambda(q) - mu(p), 0)``; the two
multiplier functions live on the grid axes and are fixed by requiring

    int (P - W) dp = 0  for every q,   int (P - W) dq = 0  for every p.

Holding ``mu`` fixed, each row's condition is a monotone one-dimensional
equation in ``lambda(q)`` with the same structure as the single-constant
threshold, and is solved exactly by sorting.  Alternating row and column
solves (Gauss-Seidel sweeps) approach the solution but converge slowly, so
by default the sweeps only provide a starting point for a semi-smooth Newton
iteration on the concave dual function whose gradient is the residual pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import phasespace as ps
from .errors import DomainMismatchError, NotNormalizedError, PhaseOptError
from .optimizer import NORMALIZATION_TOL, OptimResult, sigma2
from .phasespace import PhaseSpaceGrid

log = logging.getLogger(__name__)


class InfeasibleMarginalsError(PhaseOptError, ValueError):
    """The marginals of W are not (numerically) probability densities."""


@dataclass
class MultiplierPair:
    """Multiplier functions sampled on the q and p axes of a grid."""

    lambda_q: np.ndarray
    mu_p: np.ndarray

    def __post_init__(self):
        self.lambda_q = np.asarray(self.lambda_q, dtype=float)
        self.mu_p = np.asarray(self.mu_p, dtype=float)

    @classmethod
    def zeros(cls, grid: PhaseSpaceGrid) -> "MultiplierPair":
        return cls(np.zeros(grid.n_q), np.zeros(grid.n_p))

    def shifted(self, k: float) -> "MultiplierPair":
        """Same sum lambda + mu, with k moved from mu into lambda."""
        return MultiplierPair(self.lambda_q + k, self.mu_p - k)

    def gauge_fixed(self) -> "MultiplierPair":
        """Representative with ``int lambda dq = 0`` over the window."""
        return self.shifted(-float(self.lambda_q.mean()))


@dataclass
class MatchConfig:
    tol: float = 1e-8
    max_iter: int = 500
    damping: float = 0.5
    method: str = "newton"
    #: rows/columns whose marginal falls below this are forced to zero mass
    marginal_floor: float = 1e-14


def _check_axes(W: PhaseSpaceGrid, m: MultiplierPair) -> None:
    if m.lambda_q.shape != (W.n_q,) or m.mu_p.shape != (W.n_p,):
        raise DomainMismatchError(
            f"multipliers of shape {m.lambda_q.shape}/{m.mu_p.shape} do not fit a {W.n_q}x{W.n_p} grid"
        )


def matched_density(W: PhaseSpaceGrid, m: MultiplierPair) -> PhaseSpaceGrid:
    """``max(W - lambda(q) - mu(p), 0)`` on the grid of ``W``."""
    _check_axes(W, m)
    return W.with_values(np.maximum(W.values - m.lambda_q[:, None] - m.mu_p[None, :], 0.0))


def marginal_residuals(W: PhaseSpaceGrid, m: MultiplierPair) -> tuple[np.ndarray, np.ndarray]:
    """``(int (P - W) dp, int (P - W) dq)`` for the thresholded density."""
    diff = matched_density(W, m).values - W.values
    return diff.sum(axis=1) * W.dp, diff.sum(axis=0) * W.dq


def row_thresholds(V: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Per row, the t solving ``sum_j max(V[i, j] - t, 0) = z[i]`` (z > 0).

    Exact, by sorting each row in descending order and locating the last
    entry that stays above the running threshold.
    """
    U = -np.sort(-V, axis=1)
    excess = np.cumsum(U, axis=1) - z[:, None]
    k = np.arange(1, V.shape[1] + 1)
    active = U - excess / k > 0
    count = V.shape[1] - np.argmax(active[:, ::-1], axis=1)
    return excess[np.arange(V.shape[0]), count - 1] / count


class _Problem:
    """Collocation form of the coupled equations, in cell-sum units."""

    def __init__(self, W: PhaseSpaceGrid, floor: float):
        self.W = W.values
        self.row_target = W.values.sum(axis=1)
        self.col_target = W.values.sum(axis=0)
        self.dead_rows = self.row_target * W.dp <= floor
        self.dead_cols = self.col_target * W.dq <= floor
        self.dp, self.dq = W.dp, W.dq

    def density(self, lam, mu):
        P = np.maximum(self.W - lam[:, None] - mu[None, :], 0.0)
        P[self.dead_rows, :] = 0.0
        P[:, self.dead_cols] = 0.0
        return P

    def residual(self, P):
        return P.sum(axis=1) - self.row_target, P.sum(axis=0) - self.col_target

    def max_residual(self, P) -> float:
        rq, rp = self.residual(P)
        return max(float(np.abs(rq).max()) * self.dp, float(np.abs(rp).max()) * self.dq)

    def solve_rows(self, mu):
        lam = np.empty(self.W.shape[0])
        live = ~self.dead_rows
        V = self.W[live] - mu[None, :]
        lam[live] = row_thresholds(V, self.row_target[live])
        lam[~live] = (self.W[~live] - mu[None, :]).max(axis=1)
        return lam

    def solve_cols(self, lam):
        mu = np.empty(self.W.shape[1])
        live = ~self.dead_cols
        V = (self.W[:, live] - lam[:, None]).T
        mu[live] = row_thresholds(V, self.col_target[live])
        mu[~live] = (self.W[:, ~live] - lam[:, None]).max(axis=0)
        return mu

    def finalize(self, lam, mu):
        """Multipliers that reproduce the forced zero rows/columns without masking."""
        lam, mu = lam.copy(), mu.copy()
        live_r = ~self.dead_rows
        if self.dead_cols.any() and live_r.any():
            mu[self.dead_cols] = (self.W[np.ix_(live_r, self.dead_cols)] - lam[live_r, None]).max(axis=0)
        if self.dead_rows.any():
            lam[self.dead_rows] = (self.W[self.dead_rows] - mu[None, :]).max(axis=1)
        return lam, mu

    def dual(self, lam, mu):
        """Concave dual value; its gradient in (lam, mu) is the residual pair."""
        P = self.density(lam, mu)
        rq, rp = self.residual(P)
        return 0.5 * float(((P - self.W) ** 2).sum()) + float(lam @ rq) + float(mu @ rp), P


def _sweep(prob: _Problem, lam, mu, damping: float):
    lam = lam + damping * (prob.solve_rows(mu) - lam)
    mu = mu + damping * (prob.solve_cols(lam) - mu)
    return lam, mu


def _newton_step(prob: _Problem, lam, mu):
    """One semi-smooth Newton ascent step with Armijo backtracking."""
    value, P = prob.dual(lam, mu)
    rq, rp = prob.residual(P)
    live_r, live_c = ~prob.dead_rows, ~prob.dead_cols
    A = (P > 0)[np.ix_(live_r, live_c)].astype(float)
    nr = A.shape[0]
    H = np.zeros((nr + A.shape[1],) * 2)
    H[:nr, :nr] = np.diag(A.sum(axis=1))
    H[nr:, nr:] = np.diag(A.sum(axis=0))
    H[:nr, nr:] = A
    H[nr:, :nr] = A.T
    # lam + k, mu - k is a null direction; a tiny ridge picks the minimum-norm step
    H[np.diag_indices_from(H)] += 1e-10 * max(1.0, float(H.diagonal().max()))
    grad = np.concatenate([rq[live_r], rp[live_c]])
    step = linalg.solve(H, grad, assume_a="pos")
    d_lam = np.zeros_like(lam)
    d_mu = np.zeros_like(mu)
    d_lam[live_r] = step[:nr]
    d_mu[live_c] = step[nr:]
    slope = float(grad @ step)
    t = 1.0
    while t > 1e-10:
        new_lam, new_mu = lam + t * d_lam, mu + t * d_mu
        new_value, _ = prob.dual(new_lam, new_mu)
        if new_value >= value + 1e-4 * t * slope:
            return new_lam, new_mu, True
        t *= 0.5
    return lam, mu, False


def solve_multipliers(W: PhaseSpaceGrid, config: MatchConfig | None = None):
    """Find ``lambda(q), mu(p)`` so the thresholded density has W's marginals.

    Returns ``(MultiplierPair, OptimResult)``.  The result's ``density`` is
    the matched P and ``history`` lists the max residual after each
    iteration.  Non-convergence is reported through ``converged = False``
    with the best iterate, never raised.
    """
    cfg = config or MatchConfig()
    mass = ps.integrate(W)
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise NotNormalizedError(mass, NORMALIZATION_TOL)
    if min(ps.marginal_q(W).min(), ps.marginal_p(W).min()) < -1e-8:
        raise InfeasibleMarginalsError("W has a negative marginal; no positive density can match it")

    if W.values.min() >= 0.0:
        # already feasible and optimal; skip the floor masking of empty tails
        return MultiplierPair.zeros(W), OptimResult(
            c=0.0, sigma2=0.0, uncertainty_product=ps.moments(W).uncertainty_product,
            residuals={"marginal_q": 0.0, "marginal_p": 0.0}, density=W, history=[0.0],
        )

    prob = _Problem(W, cfg.marginal_floor)
    lam = np.zeros(W.n_q)
    mu = np.zeros(W.n_p)
    history = []

    residual = prob.max_residual(prob.density(lam, mu))
    history.append(residual)
    it = 0
    if residual >= cfg.tol:
        # the first sweep is undamped so that every live row owns some mass
        lam, mu = _sweep(prob, lam, mu, 1.0)
        it = 1
        residual = prob.max_residual(prob.density(lam, mu))
        history.append(residual)
    best = (residual, lam, mu)
    while residual >= cfg.tol and it < cfg.max_iter:
        it += 1
        if cfg.method == "newton":
            lam, mu, moved = _newton_step(prob, lam, mu)
            if not moved:
                lam, mu = _sweep(prob, lam, mu, cfg.damping)
        elif cfg.method == "sweep":
            lam, mu = _sweep(prob, lam, mu, cfg.damping)
        else:
            raise ValueError(f"unknown method {cfg.method!r}")
        residual = prob.max_residual(prob.density(lam, mu))
        history.append(residual)
        if residual < best[0]:
            best = (residual, lam, mu)
    if residual > best[0]:
        residual, lam, mu = best

    pair = MultiplierPair(*prob.finalize(lam, mu)).gauge_fixed()
    P = W.with_values(prob.density(pair.lambda_q, pair.mu_p))
    rq, rp = marginal_residuals(W, pair)
    moments = ps.moments(P)
    result = OptimResult(
        c=0.0,
        sigma2=sigma2(P, W),
        uncertainty_product=moments.uncertainty_product,
        iterations=it,
        residuals={"marginal_q": float(np.abs(rq).max()), "marginal_p": float(np.abs(rp).max())},
        converged=residual < cfg.tol,
        density=P,
        history=history,
    )
    log.debug("marginal match: residual %.3g after %d iterations", residual, it)
    return pair, result


def format_multipliers(axis, values, axis_name: str, value_name: str) -> str:
    lines = [f"{axis_name},{value_name}"]
    lines.extend(f"{format(float(a), '.17g')},{format(float(v), '.17g')}" for a, v in zip(axis, values))
    return "\n".join(lines) + "\n"


def write_multipliers(pair: MultiplierPair, grid: PhaseSpaceGrid, path_q, path_p) -> None:
    """Two-column CSV per axis: ``q,lambda`` and ``p,mu``."""
    q_name, p_name = grid.labels
    Path(path_q).write_text(format_multipliers(grid.q_axis, pair.lambda_q, q_name, "lambda"), encoding="utf-8")
    Path(path_p).write_text(format_multipliers(grid.p_axis, pair.mu_p, p_name, "mu"), encoding="utf-8")


def read_multipliers(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]
