import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst
from hypothesis.extra import numpy as hnp

from phaseopt import marginal_matcher as mm
from phaseopt import optimizer as opt
from phaseopt import phasespace as ps
from phaseopt import states as st
from phaseopt.errors import DomainMismatchError, NotNormalizedError


@pytest.fixture(scope="module")
def solved_w1(w1_grid):
    return mm.solve_multipliers(w1_grid)


def product_of_marginals(W):
    rq, rp = ps.marginal_q(W), ps.marginal_p(W)
    return W.with_values(np.outer(rq, rp))


# -- residuals -----------------------------------------------------------------


def test_residuals_vanish_for_positive_w(w0_grid):
    rq, rp = mm.marginal_residuals(w0_grid, mm.MultiplierPair.zeros(w0_grid))
    assert not rq.any() and not rp.any()


def test_residual_of_clipped_w1_is_its_negative_lobe(w1_grid):
    rq, _ = mm.marginal_residuals(w1_grid, mm.MultiplierPair.zeros(w1_grid))
    i = int(np.argmin(np.abs(w1_grid.q_axis)))
    row = w1_grid.values[i]
    assert rq[i] > 0
    assert rq[i] == pytest.approx(-row[row < 0].sum() * w1_grid.dp, rel=1e-14)
    # the lobe is the disc x < 1/2; at the grid row nearest q = 0 it spans |p| < 1/sqrt 2
    q0 = w1_grid.q_axis[i]
    half = math.sqrt(0.5 - q0 * q0)
    exact = -2 * (2 / math.pi) * math.exp(-q0 * q0) * (
        (q0 * q0 - 0.5) * math.sqrt(math.pi) / 2 * math.erf(half)
        + (math.sqrt(math.pi) / 4 * math.erf(half) - half / 2 * math.exp(-half * half))
    )
    assert rq[i] == pytest.approx(exact, abs=1e-4)


def test_residuals_gauge_invariant(w1_grid, rng):
    pair = mm.MultiplierPair(rng.normal(0, 0.01, w1_grid.n_q), rng.normal(0, 0.01, w1_grid.n_p))
    base = mm.marginal_residuals(w1_grid, pair)
    # k exactly representable and bits of lambda + mu unaffected
    moved = mm.marginal_residuals(w1_grid, pair.shifted(0.0))
    assert all(np.array_equal(a, b) for a, b in zip(base, moved))
    shifted = mm.marginal_residuals(w1_grid, pair.shifted(0.0123))
    for a, b in zip(base, shifted):
        assert np.abs(a - b).max() < 1e-15


def test_residuals_shape_mismatch(w1_grid):
    with pytest.raises(DomainMismatchError):
        mm.marginal_residuals(w1_grid, mm.MultiplierPair(np.zeros(3), np.zeros(w1_grid.n_p)))


# -- row thresholds ------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    V=hnp.arrays(np.float64, (5, 9), elements=hst.floats(-5, 5)),
    z=hnp.arrays(np.float64, 5, elements=hst.floats(1e-3, 20)),
)
def test_row_thresholds_brute_force(V, z):
    t = mm.row_thresholds(V, z)
    assert np.allclose(np.maximum(V - t[:, None], 0).sum(axis=1), z, rtol=1e-12, atol=1e-12)
    for i in range(V.shape[0]):
        # brute force over every support size
        v = np.sort(V[i])[::-1]
        cands = [(v[:k].sum() - z[i]) / k for k in range(1, v.size + 1)]
        ok = [c for k, c in enumerate(cands, 1) if v[k - 1] > c and (k == v.size or v[k] <= c)]
        assert t[i] == pytest.approx(ok[0], abs=1e-12)


# -- solver --------------------------------------------------------------------


def test_ground_state_is_a_fixed_point(w0_grid):
    pair, r = mm.solve_multipliers(w0_grid)
    assert r.converged and r.iterations == 0 and r.sigma2 == 0.0
    assert not pair.lambda_q.any() and not pair.mu_p.any()
    assert np.array_equal(r.density.values, w0_grid.values)


def test_w1_marginals_reproduced(solved_w1, w1_grid):
    pair, r = solved_w1
    assert r.converged
    assert r.density.values.min() >= 0
    truth = 2 / math.sqrt(math.pi) * w1_grid.q_axis**2 * np.exp(-w1_grid.q_axis**2)
    assert np.abs(ps.marginal_q(r.density) - truth).max() < 1e-6
    assert np.abs(ps.marginal_p(r.density) - truth).max() < 1e-6
    assert max(r.residuals.values()) < 1e-8
    assert r.history[-1] < 1e-8 and r.history[0] > r.history[-1]


def test_w1_multipliers_gauge_fixed_and_symmetric(solved_w1):
    pair, r = solved_w1
    assert abs(pair.lambda_q.mean()) < 1e-15
    # W1 is symmetric under q <-> p, so lambda and mu differ by the gauge constant only
    diff = pair.lambda_q - pair.mu_p
    core = r.density.values.sum(axis=1) > 0
    assert np.ptp(diff[core]) < 1e-9


def test_w1_sigma2_and_form(solved_w1, w1_grid):
    pair, r = solved_w1
    assert r.sigma2 == pytest.approx(0.4815, abs=1e-3)
    recon = np.maximum(w1_grid.values - pair.lambda_q[:, None] - pair.mu_p[None, :], 0.0)
    assert np.abs(recon - r.density.values).max() < 1e-15


def test_matched_is_feasible_for_mass_only_problem(solved_w1, w1_grid):
    # the mass-only optimum has a smaller deviation, and it does not keep the marginals
    _, r = solved_w1
    p_min = opt.solve_c(w1_grid)
    assert r.sigma2 > p_min.sigma2
    assert np.abs(ps.marginal_q(p_min.density) - ps.marginal_q(w1_grid)).max() > 1e-3


def test_product_of_marginals_is_worse(solved_w1, w1_grid):
    _, r = solved_w1
    assert opt.sigma2(product_of_marginals(w1_grid), w1_grid) >= r.sigma2 - 1e-9


def test_marginal_preserving_deformations_are_worse(solved_w1, w1_grid):
    _, r = solved_w1
    prod = product_of_marginals(w1_grid)
    q, p = w1_grid.q_axis, w1_grid.p_axis
    rq, rp = ps.marginal_q(w1_grid), ps.marginal_p(w1_grid)

    def centered(f, rho, step):
        # zero mean under rho, bounded by one
        f = f - (f * rho).sum() * step
        return f / np.abs(f).max()

    shapes = [np.tanh(q), np.cos(q), q**2 / (1 + q**2), np.sin(2 * q)]
    for a_raw in shapes:
        for b_raw in shapes:
            a = centered(a_raw, rq, w1_grid.dq)
            b = centered(np.interp(p, q, b_raw), rp, w1_grid.dp)
            for eps in (-0.5, -0.1, 0.1, 0.5):
                P = prod.with_values(prod.values * (1 + eps * np.outer(a, b)))
                assert P.values.min() >= 0
                assert np.abs(ps.marginal_q(P) - rq).max() < 1e-12
                assert opt.sigma2(P, w1_grid) >= r.sigma2 - 1e-9


def test_w2_converges(w2_grid):
    _, r = mm.solve_multipliers(w2_grid)
    assert r.converged and max(r.residuals.values()) < 1e-8
    assert r.sigma2 == pytest.approx(0.5126, abs=1e-3)


def test_matches_convex_program():
    cp = pytest.importorskip("cvxpy")
    W = ps.rasterize(st.wigner_radial(st.StateSpec(1)), window=(-5, 5, -5, 5), shape=(40, 40))
    W = W.with_values(W.values / ps.integrate(W))
    P = cp.Variable(W.values.shape)
    cons = [P >= 0, cp.sum(P, axis=1) == W.values.sum(axis=1), cp.sum(P, axis=0) == W.values.sum(axis=0)]
    cp.Problem(cp.Minimize(cp.sum_squares(P - W.values)), cons).solve(
        solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    _, r = mm.solve_multipliers(W)
    assert r.converged
    assert np.abs(r.density.values - P.value).max() < 1e-6
    assert r.sigma2 == pytest.approx(opt.sigma2(W.with_values(np.maximum(P.value, 0)), W), abs=1e-6)


def test_plain_sweeps_flag_nonconvergence(w1_grid):
    cfg = mm.MatchConfig(method="sweep", max_iter=15)
    pair, r = mm.solve_multipliers(w1_grid, cfg)
    assert not r.converged
    assert r.iterations == 15 and len(r.history) == 16
    assert r.density.values.min() >= 0
    assert max(r.residuals.values()) == pytest.approx(min(r.history), rel=1e-6)


def test_unknown_method(w1_grid):
    with pytest.raises(ValueError):
        mm.solve_multipliers(w1_grid, mm.MatchConfig(method="simplex"))


def test_rejects_unnormalized_and_negative_marginals(w1_grid):
    with pytest.raises(NotNormalizedError):
        mm.solve_multipliers(w1_grid.with_values(1.5 * w1_grid.values))
    q, p = w1_grid.mesh()
    # odd in q, so the total mass stays one while the q marginal turns negative
    bump = 0.05 * q * np.exp(-(q * q + p * p))
    with pytest.raises(mm.InfeasibleMarginalsError):
        mm.solve_multipliers(w1_grid.with_values(w1_grid.values + bump))


def test_zero_rows_are_forced_empty():
    W = ps.rasterize(st.wigner_radial(st.StateSpec(1)), window=(-4, 4, -4, 4), shape=(32, 32))
    v = W.values.copy()
    v[:3] = 0.0
    v[:, -2:] = 0.0
    W = W.with_values(v / (v.sum() * W.cell_area))
    pair, r = mm.solve_multipliers(W)
    assert r.converged
    assert not r.density.values[:3].any() and not r.density.values[:, -2:].any()
    recon = mm.matched_density(W, pair).values
    assert np.array_equal(recon, r.density.values)


@settings(max_examples=25, deadline=None)
@given(
    base=hnp.arrays(np.float64, (8, 10), elements=hst.floats(0.05, 2.0)),
    noise=hnp.arrays(np.float64, (8, 10), elements=hst.floats(-1.0, 1.0)),
)
def test_random_signed_grids_with_positive_marginals(base, noise):
    # double centering makes the perturbation invisible to both marginals
    noise = noise - noise.mean(axis=0) - noise.mean(axis=1, keepdims=True) + noise.mean()
    g = ps.PhaseSpaceGrid(-1.0, 1.0, -1.0, 1.0, base + noise)
    g = g.with_values(g.values / ps.integrate(g))
    pair, r = mm.solve_multipliers(g)
    assert r.converged
    P = r.density.values
    assert P.min() >= 0
    assert np.abs(ps.marginal_q(r.density) - ps.marginal_q(g)).max() < 1e-8
    assert np.abs(ps.marginal_p(r.density) - ps.marginal_p(g)).max() < 1e-8
    if g.values.min() >= 0:
        assert np.allclose(P, g.values, atol=1e-12)
    # product of marginals is feasible, so it cannot do better
    assert opt.sigma2(product_of_marginals(g), g) >= r.sigma2 - 1e-9


# -- multiplier files ------------------------------------------------------------


def test_multiplier_csv_roundtrip(tmp_path, solved_w1, w1_grid):
    pair, _ = solved_w1
    fq, fp = tmp_path / "lambda.csv", tmp_path / "mu.csv"
    mm.write_multipliers(pair, w1_grid, fq, fp)
    assert fq.read_text().splitlines()[0] == "q,lambda"
    assert fp.read_text().splitlines()[0] == "p,mu"
    q, lam = mm.read_multipliers(fq)
    p, mu = mm.read_multipliers(fp)
    assert np.array_equal(q, w1_grid.q_axis) and np.array_equal(lam, pair.lambda_q)
    assert np.array_equal(p, w1_grid.p_axis) and np.array_equal(mu, pair.mu_p)
