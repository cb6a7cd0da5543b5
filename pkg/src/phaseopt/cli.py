"""Command-line interface.

Exit codes: 0 success, 1 computed values outside the acceptance
tolerances, 2 bad input or solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import marginal_matcher as mm
from . import optimizer as op
from . import phasespace as ps
from . import states as st
from . import timefreq as tf
from .errors import ConvergenceError, NotNormalizedError, PhaseOptError

log = logging.getLogger("phaseopt")

EXIT_OK, EXIT_TOLERANCE, EXIT_ERROR = 0, 1, 2

# Published reference values and the tolerance each is checked to.
TABLE1_REFERENCE = {
    (1, "none"): dict(husimi_sigma2=(0.509259, 1e-4), sigma2=(0.2770, 1e-3), c=(0.01053, 5e-4),
                      uncertainty_product=(1.108, 5e-3)),
    (1, "dispersion"): dict(sigma2=(0.2877, 1e-3), c=(0.01837, 5e-4), d=(-0.0014, 2e-4),
                            uncertainty_product=(1.5, 5e-3)),
    (2, "none"): dict(husimi_sigma2=(0.64429, 1e-4), sigma2=(0.2681, 1e-3), c=(0.01595, 5e-4),
                      uncertainty_product=(1.722, 5e-3)),
    (2, "dispersion"): dict(sigma2=(0.3223, 1e-3), c=(0.04235, 5e-4), d=(-0.00408, 2e-4),
                            uncertainty_product=(2.5, 5e-3)),
}
TABLE1_COLUMNS = ("n", "constraint", "husimi_sigma2", "sigma2", "c", "d", "x_max", "uncertainty_product")


# -- argument helpers ------------------------------------------------------------


def _state(text: str) -> int:
    kind, _, n = text.partition(":")
    if kind != "fock" or not n.isdigit():
        raise argparse.ArgumentTypeError(f"state must look like fock:N, got {text!r}")
    return int(n)


def _floats(count: int):
    def parse(text: str):
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers, got {text!r}") from None
        if len(vals) != count:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers, got {text!r}")
        return vals

    return parse


def _resolution(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 512x512, got {text!r}") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


def _g(v: float) -> str:
    return format(float(v), ".17g")


def _config_echo(args: argparse.Namespace) -> str:
    keys = sorted(k for k in vars(args) if k not in ("func", "verbose"))
    return "config: " + " ".join(f"{k}={getattr(args, k)}" for k in keys)


# -- commands --------------------------------------------------------------------


def table1_rows():
    """Recompute the four rows of the comparison table on the radial path."""
    rows = []
    for n in (1, 2):
        state = st.StateSpec(n)
        W = st.wigner_radial(state)
        husimi = op.sigma2(st.husimi_radial(state), W)
        free = op.solve_c(W)
        rows.append(dict(n=n, constraint="none", husimi_sigma2=husimi, sigma2=free.sigma2, c=free.c,
                         d=0.0, x_max=math.inf, uncertainty_product=free.uncertainty_product))
        x_max = op.DEFAULT_X_MAX[n]
        fixed = op.solve_cd(W, x_max)
        rows.append(dict(n=n, constraint="dispersion", husimi_sigma2=math.nan, sigma2=fixed.sigma2,
                         c=fixed.c, d=fixed.d, x_max=x_max, uncertainty_product=fixed.uncertainty_product))
    return rows


def check_table1(rows, tol_override=None):
    """List of (row key, column, value, reference, tolerance, ok)."""
    checks = []
    for row in rows:
        for col, (ref, tol) in TABLE1_REFERENCE[(row["n"], row["constraint"])].items():
            tol = tol if tol_override is None else tol_override
            checks.append(((row["n"], row["constraint"]), col, row[col], ref, tol, abs(row[col] - ref) <= tol))
    return checks


def cmd_table1(args) -> int:
    try:
        rows = table1_rows()
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = sys.stdout
    out.write(f"{'state':<6}{'constraint':<12}{'Husimi s2':>11}{'s2':>10}{'c':>11}{'d':>11}{'x_max':>7}{'dq*dp':>8}\n")
    for r in rows:
        hus = "" if math.isnan(r["husimi_sigma2"]) else f"{r['husimi_sigma2']:.6f}"
        out.write(
            f"n={r['n']:<4}{r['constraint']:<12}{hus:>11}{r['sigma2']:>10.6f}{r['c']:>11.6f}"
            f"{r['d']:>11.6f}{r['x_max']:>7g}{r['uncertainty_product']:>8.4f}\n"
        )
    out.write("\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE1_COLUMNS)
    for r in rows:
        writer.writerow([r["n"], r["constraint"]] + [_g(r[k]) for k in TABLE1_COLUMNS[2:]])
    out.write(buf.getvalue())
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")

    failed = [c for c in check_table1(rows, args.tol) if not c[5]]
    for key, col, val, ref, tol, _ in failed:
        print(f"FAIL n={key[0]} {key[1]} {col}: {val:.6g} vs {ref:g} (tol {tol:g})", file=sys.stderr)
    return EXIT_TOLERANCE if failed else EXIT_OK


def figure_data(n: int, x_max: float, center=(0.0, 0.0)):
    """Curves for the radial comparison and position-marginal figures."""
    state = st.StateSpec(n, *center)
    W = st.wigner_radial(state)
    Q = st.husimi_radial(state)
    P = op.solve_c(W).density
    cd = op.solve_cd(W, x_max)
    P1 = cd.density
    x = np.round(np.arange(0, 241) * 0.05, 10)
    radial = np.column_stack([x, W(x), Q(x), P(x), P1(x)])
    offsets = np.round(np.arange(-100, 101) * 0.05, 10)
    position = np.column_stack([
        center[0] + offsets,
        st.position_density(state, center[0] + offsets),
        ps.radial_marginal(Q, offsets),
        ps.radial_marginal(P, offsets),
        ps.radial_marginal(P1, offsets),
    ])
    return radial, position, cd


def _write_table(path: Path, header, data, comment: str) -> None:
    lines = [f"# {comment}", ",".join(header)]
    lines.extend(",".join(_g(v) for v in row) for row in data)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_figures(args) -> int:
    n = args.state if args.state is not None else 1
    if n not in (1, 2):
        print(f"error: figures are defined for fock:1 and fock:2, got fock:{n}", file=sys.stderr)
        return EXIT_ERROR
    x_max = args.xmax if args.xmax is not None else op.DEFAULT_X_MAX[n]
    center = args.center or (0.0, 0.0)
    radial, position, cd = figure_data(n, x_max, center)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    comment = f"{_config_echo(args)} c1={_g(cd.c)} d1={_g(cd.d)}"
    p1 = out / f"fig_phase_space_n{n}.csv"
    p2 = out / f"fig_position_n{n}.csv"
    _write_table(p1, ("x", "W", "Q", "P_min", "P_min1"), radial, comment)
    _write_table(p2, ("q", "true", "husimi", "P_min", "P_min1"), position, comment)
    print(p1)
    print(p2)
    return EXIT_OK


def _load_grid(args):
    grid = ps.read_grid(args.input, center=args.center)
    mass = ps.integrate(grid)
    if abs(mass - 1.0) > op.NORMALIZATION_TOL:
        if not args.renormalize:
            raise NotNormalizedError(mass, op.NORMALIZATION_TOL)
        grid = grid.with_values(grid.values / mass)
    return grid


def _default_out(args, suffix: str) -> Path:
    if args.out:
        return Path(args.out)
    src = Path(args.input)
    return src.with_name(src.stem + suffix + ".csv")


def cmd_optimize(args) -> int:
    try:
        grid = _load_grid(args)
    except NotNormalizedError as exc:
        print(f"error: {exc}; rerun with --renormalize to rescale it", file=sys.stderr)
        return EXIT_ERROR
    tol = args.tol or 1e-10
    if args.xmax is not None:
        if args.center is None:
            print("error: --xmax needs --center to define the radial variable", file=sys.stderr)
            return EXIT_ERROR
        result = op.solve_cd(grid, args.xmax, tol=tol)
    else:
        result = op.solve_c(grid, tol=tol)
    out = _default_out(args, "_pmin")
    ps.write_grid(result.density, out)
    sys.stdout.write(result.to_text())
    return EXIT_OK if result.converged else EXIT_ERROR


def cmd_marginal_match(args) -> int:
    try:
        grid = _load_grid(args)
    except NotNormalizedError as exc:
        print(f"error: {exc}; rerun with --renormalize to rescale it", file=sys.stderr)
        return EXIT_ERROR
    cfg = mm.MatchConfig(tol=args.tol or 1e-8)
    pair, result = mm.solve_multipliers(grid, cfg)
    out = _default_out(args, "_matched")
    ps.write_grid(result.density, out)
    mm.write_multipliers(pair, grid, out.with_name(out.stem + "_lambda.csv"), out.with_name(out.stem + "_mu.csv"))
    sys.stdout.write(result.to_text())
    sys.stdout.write(f"lambda_max_abs = {_g(np.abs(pair.lambda_q).max())}\n")
    sys.stdout.write(f"mu_max_abs = {_g(np.abs(pair.mu_p).max())}\n")
    return EXIT_OK if result.converged else EXIT_ERROR


def cmd_tf(args) -> int:
    record = tf.read_signal(args.input)
    res = tf.analyze(record, args.b)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    echo = _config_echo(args)
    ps.write_grid(res.wvd, out / "wvd.csv", [echo])
    ps.write_grid(res.spectrogram, out / "spectrogram.csv", [echo])
    ps.write_grid(res.optimum.density, out / "optimized.csv", [echo])
    _write_table(
        out / "bandwidth.csv", ("t", "from_amplitude", "positive"),
        np.column_stack([res.times, res.amplitude_bandwidth, res.positive_bandwidth]), echo,
    )
    sys.stdout.write(res.optimum.to_text())
    sys.stdout.write(f"sigma2_optimum = {_g(res.sigma2_optimum)}\n")
    sys.stdout.write(f"sigma2_spectrogram = {_g(res.sigma2_spectrogram)}\n")
    return EXIT_OK


def cmd_rasterize(args) -> int:
    n = args.state if args.state is not None else 0
    center = args.center or (0.0, 0.0)
    grid = ps.rasterize(st.wigner_radial(st.StateSpec(n, *center)), center, args.window, args.res)
    ps.write_grid(grid, args.out)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseopt",
        description="Closest positive phase-space densities to Wigner functions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, state=False, center=False, xmax=False, tol=False, out=True, window=False):
        if state:
            p.add_argument("--state", type=_state, help="closed-form state, e.g. fock:1")
        if center:
            p.add_argument("--center", type=_floats(2), help="phase-space center q,p (use --center=-1,0 for negatives)")
        if xmax:
            p.add_argument("--xmax", type=_positive, help="radius of the dispersion-constrained disc")
        if tol:
            p.add_argument("--tol", "--tolerance", dest="tol", type=_positive, help="tolerance override")
        if window:
            p.add_argument("--window", type=_floats(4), help="q_min,q_max,p_min,p_max")
            p.add_argument("--res", type=_resolution, default=(512, 512), help="grid size NQxNP")
        if out:
            p.add_argument("--out", help="output path")

    p = sub.add_parser("table1", help="recompute the Husimi vs optimum comparison table")
    common(p, tol=True)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("figures", help="write CSV curves for the n=1 or n=2 figures")
    common(p, state=True, center=True, xmax=True)
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("optimize", help="closest positive density to a Wigner grid file")
    p.add_argument("input", help="Wigner grid CSV")
    common(p, center=True, xmax=True, tol=True)
    p.add_argument("--renormalize", action="store_true", help="rescale the input to unit integral")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("marginal-match", help="closest positive density with both marginals of W")
    p.add_argument("input", help="Wigner grid CSV")
    common(p, center=True, tol=True)
    p.add_argument("--renormalize", action="store_true", help="rescale the input to unit integral")
    p.set_defaults(func=cmd_marginal_match)

    p = sub.add_parser("tf", help="time-frequency analysis of a signal CSV")
    p.add_argument("input", help="signal CSV: 'sample_rate,<fs>' then re,im lines")
    p.add_argument("--b", type=_positive, default=math.sqrt(0.5), help="spectrogram window width")
    common(p)
    p.set_defaults(func=cmd_tf)

    p = sub.add_parser("rasterize", help="write the Wigner grid of a closed-form state")
    common(p, state=True, center=True, window=True, out=False)
    p.add_argument("--out", required=True, help="output grid CSV")
    p.set_defaults(func=cmd_rasterize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (PhaseOptError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
