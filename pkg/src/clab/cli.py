"""Command line entry point: `clab <subcommand> [flags]`.

Exit codes: 0 success, 2 validation error or bad usage, 3 convergence or
numerical failure. Reports are "key = value" text on stdout and, with
--out, in <out>/<command>.txt plus CSV side files. Wall time goes to stderr
so reports stay byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import Report, load_defaults, load_metric, parse_grid, parse_modes, parse_vector
from .errors import ClabError, ConvergenceFailure, InvalidArgumentError, NumericalFailure


def _add_common(p):
    p.add_argument("--out", default=None, help="directory for report and CSV files")
    p.add_argument("--config", default=None, help="INI file; [<command>] gives flag defaults")
    p.add_argument("--seed", type=int, default=0)


def _config_dests(sp, values: dict) -> dict:
    """Map config keys (flag names without dashes) to argparse dests."""
    names = {}
    for act in sp._actions:
        for opt in act.option_strings:
            names[opt.lstrip("-")] = act.dest
    bad = sorted(k for k in values if k not in names or names[k] in ("help", "config"))
    if bad:
        raise InvalidArgumentError(f"unknown config keys for {sp.prog}: {', '.join(bad)}")
    return {names[k]: v for k, v in values.items()}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clab", description="cotangent-bundle numerics lab")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("min-geodesic", help="shortest closed geodesic in a class")
    p.add_argument("--metric", default="flat2")
    p.add_argument("--class", dest="cls", default="1,0")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--points", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("stable-norm", help="stable norm of a cohomology class")
    p.add_argument("--metric", default="flat2")
    p.add_argument("--class", dest="cls", default="1,0")
    p.add_argument("--radius", type=int, default=6)
    p.add_argument("--restarts", type=int, default=2)
    _add_common(p)

    p = sub.add_parser("cylinder-check", help="explicit cylinder: residual order and energy")
    p.add_argument("--metric", default="flat2")
    p.add_argument("--class", dest="cls", default="1,0")
    p.add_argument("--S", type=float, default=4.0)
    p.add_argument("--energy-S", type=float, default=8.0)
    p.add_argument("--grid", default="32x16", help="coarsest grid, refined three times")
    p.add_argument("--refine-t", action="store_true",
                   help="refine t with s; needed when the geodesic is not a straight line")
    p.add_argument("--points", type=int, default=128, help="samples of the minimizing curve")
    p.add_argument("--r0", type=float, default=0.5)
    p.add_argument("--r1", type=float, default=2.0)
    _add_common(p)

    p = sub.add_parser("kernel-dim", help="kernel of the linearized CR operator")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--grid", default="128x128")
    p.add_argument("--S", type=float, default=8.0)
    p.add_argument("--rotation", type=float, default=0.0,
                   help="twist angle in radians (normal plane, n = 3)")
    p.add_argument("--threshold", type=float, default=1e-6)
    p.add_argument("--method", default="auto", choices=["auto", "bloch", "dense", "sparse"])
    p.add_argument("--export", default=None, help="matrix-market file for the operator")
    _add_common(p)

    p = sub.add_parser("index", help="Fredholm index formula and good-metric CZ")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--euler", type=int, default=0)
    p.add_argument("--c1", type=int, default=0)
    p.add_argument("--mu", type=int, default=0)
    p.add_argument("--cz-plus", default="0")
    p.add_argument("--cz-minus", default="")
    p.add_argument("--good-k", type=float, default=0.0,
                   help="if > 0, also report CZ of the good-metric flow with this k")
    p.add_argument("--eps", type=float, default=0.05)
    _add_common(p)

    p = sub.add_parser("pb-bound", help="constructive Poisson bracket bound")
    p.add_argument("--metric", default="flat2")
    p.add_argument("--class", dest="cls", default="1,0")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--partition", default="refined", choices=["refined", "quartered"])
    p.add_argument("--eps", type=float, default=0.002)
    p.add_argument("--width", type=float, default=0.005)
    p.add_argument("--potential", default="", help="exact part, 'k1 k2 : a b; ...'")
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--radial", type=int, default=50)
    p.add_argument("--optimize", type=int, default=0, help="descent budget, 0 = off")
    _add_common(p)

    p = sub.add_parser("clifford", help="simplex barycenter distance")
    p.add_argument("--n", type=int, default=2)
    _add_common(p)

    p = sub.add_parser("graph-check", help="period and Maslov checks on random graphs")
    p.add_argument("--metric", default="flat2")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--ball", type=int, default=3)
    _add_common(p)

    p = sub.add_parser("acceptance", help="run the acceptance suite")
    p.add_argument("--only", default="", help="comma separated criterion numbers")
    _add_common(p)
    return ap


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


def _write_csv(out, name, header, rows):
    path = Path(out) / name
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(x)) if not isinstance(x, str) else x for x in r) + "\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_min_geodesic(a, rep, out):
    from .homology_geodesics import min_geodesic

    _require(a.restarts >= 1, "--restarts must be >= 1")
    _require(a.points >= 0, "--points must be >= 0")
    metric = load_metric(a.metric)
    beta = parse_vector(a.cls)
    _require(len(beta) == metric.dim, "class has the wrong dimension")
    sl = min_geodesic(metric, beta, a.restarts, a.seed, a.points or None)
    rep.add("metric", metric.describe())
    rep.add("minimal_length", sl.minimal_length)
    rep.add("distinct_lengths", sl.lengths)
    rep.add("iterations", sl.iterations)
    if out:
        _write_csv(out, "min_geodesic.csv", ["class", "length", "converged", "iterations"],
                   [(" ".join(str(int(x)) for x in beta), sl.minimal_length,
                     str(sl.converged).lower(), str(sl.iterations))])
        _write_csv(out, "min_geodesic_curve.csv", [f"q{i + 1}" for i in range(metric.dim)],
                   sl.minimizer.samples)


def cmd_stable_norm(a, rep, out):
    from .homology_geodesics import stable_norm_details

    _require(a.radius >= 1, "--radius must be >= 1")
    metric = load_metric(a.metric)
    cls = parse_vector(a.cls)
    _require(len(cls) == metric.dim, "class has the wrong dimension")
    r = stable_norm_details(metric, cls, a.radius, a.restarts, a.seed)
    rep.add("metric", metric.describe())
    rep.add("stable_norm", r.value)
    rep.add("argmax", r.argmax)
    rep.add("increment_last_shell", r.increment)
    rep.add("classes_evaluated", r.evaluated)


def cmd_cylinder_check(a, rep, out):
    from .cotangent import build_cylinder, energy, holomorphicity_residual, radial_profile
    from .homology_geodesics import min_geodesic

    Ns, Nt = parse_grid(a.grid)
    _require(a.S >= 1 and a.energy_S >= 4, "S too small")
    metric = load_metric(a.metric)
    beta = parse_vector(a.cls)
    pr = radial_profile(a.r0, a.r1)
    _require(a.points >= 16, "--points must be >= 16")
    curve = min_geodesic(metric, beta, 4, a.seed, n_points=a.points).minimizer
    grids = [Ns * 2**i for i in range(4)]
    tgrids = [Nt * 2**i if a.refine_t else Nt for i in range(4)]
    res = [holomorphicity_residual(build_cylinder(metric, pr, curve, a.S, (N, M)), metric, pr)
           for N, M in zip(grids, tgrids)]
    order = float(np.polyfit(np.log(a.S / np.array(grids, dtype=float)), np.log(res), 1)[0])
    e = energy(build_cylinder(metric, pr, curve, a.energy_S, (512, max(Nt, 16))), metric)
    rep.add("metric", metric.describe())
    rep.add("profile", pr.describe())
    rep.add("length", curve.length)
    rep.add("residuals", res)
    rep.add("fitted_order", order)
    rep.add("E_omega", e.E_omega)
    rep.add("E_alpha", e.E_alpha)
    rep.add("E", e.E)
    rep.add("E_over_length", e.E / curve.length)
    rep.add("below_3l", e.E <= e.bound)
    if out:
        cyl = build_cylinder(metric, pr, curve, a.S, (Ns, Nt))
        n = metric.dim
        rows = [(cyl.s[i], cyl.t[j], *cyl.q[i, j], *cyl.p[i, j])
                for i in range(len(cyl.s)) for j in range(len(cyl.t))]
        _write_csv(out, "cylinder.csv", ["s", "t"] + [f"q{i + 1}" for i in range(n)]
                   + [f"p{i + 1}" for i in range(n)], rows)
    if out:
        _write_csv(out, "residuals.csv", ["Ns", "Nt", "residual"],
                   [(N, M, r) for N, M, r in zip(grids, tgrids, res)])


def cmd_kernel_dim(a, rep, out):
    from .cotangent import radial_profile
    from .linearized_cr import OperatorGrid, assemble_operator, constant_axial_field, \
        export_matrix_market, kernel_dimension

    Ns, Nt = parse_grid(a.grid)
    _require(Ns >= 16 and Nt >= 16, "grid resolutions must be >= 16")
    _require(a.S >= 4, "--S must be >= 4")
    _require(a.k >= 0, "--k must be >= 0")
    _require(a.n >= 1, "--n must be >= 1")
    O = None
    if a.n == 3:
        c, s = np.cos(a.rotation), np.sin(a.rotation)
        O = np.array([[c, -s], [s, c]])
    else:
        _require(a.rotation == 0.0, "--rotation needs --n 3")
    grid = OperatorGrid(a.n, a.k, a.S, Ns, Nt, radial_profile(), O=O)
    op = assemble_operator(grid) if (a.method in ("dense", "sparse") or a.export) else grid
    r = kernel_dimension(op, a.threshold, method=a.method)
    rep.add("grid", grid.describe())
    rep.add("method", r.method)
    rep.add("singular_values", r.singular_values)
    rep.add("dimension", r.dimension)
    rep.add("gap_ratio", r.gap_ratio)
    rep.add("threshold", r.threshold)
    rep.add("kernel_correlation_with_constant_an", r.correlation_with(constant_axial_field(grid)))
    if a.export:
        export_matrix_market(op, a.export)
        rep.add("exported", Path(a.export).name)
    if out:
        _write_csv(out, "singular_values.csv", ["i", "sigma"],
                   [(i, s) for i, s in enumerate(r.singular_values)])


def cmd_index(a, rep, out):
    from .index import IndexData, conley_zehnder, fredholm_index, linearized_cogeodesic_path

    plus = [int(x) for x in a.cz_plus.split(",") if x.strip()]
    minus = [int(x) for x in a.cz_minus.split(",") if x.strip()]
    _require(a.n >= 1, "--n must be >= 1")
    ind = fredholm_index(IndexData(a.n, a.euler, a.c1, a.mu, plus, minus))
    rep.add("fredholm_index", ind)
    if a.good_k > 0:
        from .linearized_cr import GoodMetricParams, good_metric

        gm = good_metric(GoodMetricParams(a.n, tuple([1] + [0] * (a.n - 1)), a.eps, a.good_k))
        cp = linearized_cogeodesic_path(gm.metric, gm.axis_curve)
        rep.add("good_metric", gm.metric.describe())
        rep.add("symplectic_drift", cp.drift)
        rep.add("normal_block_cz", conley_zehnder(cp.normal_block()))


def cmd_pb_bound(a, rep, out):
    from .homology_geodesics import CohomologyClass, stable_norm
    from .pb_invariant import bp_estimate, build_pair, sup_bracket
    from .riemannian import FourierScalar

    _require(a.r > 0, "--r must be positive")
    metric = load_metric(a.metric)
    cls = parse_vector(a.cls)
    _require(len(cls) == metric.dim, "class has the wrong dimension")
    if a.optimize > 0:
        e = bp_estimate(metric, cls, a.r, budget=a.optimize, grid=a.grid, radial=a.radial,
                        seed=a.seed)
        rep.add("sup_bracket", e.sup)
        rep.add("bp_lower_bound", e.lower_bound)
        rep.add("target", e.target)
        rep.add("relative_slack", e.slack)
        rep.add("stable_norm", e.stable_norm)
        rep.add("best_params", ";".join(f"{k}={v}" for k, v in sorted(e.params.items())))
        rep.add("budget_exhausted", e.exhausted)
        return
    pot = FourierScalar(metric.dim, parse_modes(a.potential, metric.dim)) if a.potential else None
    pair = build_pair(metric, CohomologyClass(cls, pot), r=a.r, partition=a.partition,
                      eps=a.eps, w=a.width)
    s = sup_bracket(pair, a.grid, a.radial)
    st = stable_norm(metric, cls, B=4, seed=a.seed)
    rep.add("metric", metric.describe())
    rep.add("sup_bracket", s.value)
    rep.add("argmax_q", s.q)
    rep.add("argmax_p", s.p)
    rep.add("bp_lower_bound", 1.0 / s.value)
    rep.add("stable_norm", st)
    rep.add("target", a.r / st)
    rep.add("relative_slack", (1.0 / s.value - a.r / st) / (a.r / st))


def cmd_clifford(a, rep, out):
    from .pb_invariant import clifford

    _require(a.n >= 1, "--n must be >= 1")
    c = clifford(a.n)
    rep.add("barycenter", c.barycenter)
    rep.add("facet_distances", c.facet_distances)
    rep.add("distance", c.distance)
    rep.add("r_max", c.r_max)
    rep.add("product", c.product)


def cmd_graph_check(a, rep, out):
    from .lagrangian_graphs import closeclose_check, maslov_of_graph, random_graph

    _require(a.eps > 0 and a.trials >= 1 and a.ball >= 1, "eps, trials, ball must be positive")
    metric = load_metric(a.metric)
    r = closeclose_check(metric, a.eps, a.trials, a.ball, a.seed)
    rng = np.random.default_rng(a.seed + 1)
    basis = [tuple(int(x) for x in row) for row in np.eye(metric.dim, dtype=int)]
    mas = [maslov_of_graph(random_graph(metric, a.eps, rng), b)
           for _ in range(a.trials) for b in basis]
    rep.add("metric", metric.describe())
    rep.add("checked", r.checked)
    rep.add("worst_ratio", r.worst_ratio)
    rep.add("violations", len(r.violations))
    rep.add("maslov_nonzero", int(sum(m != 0 for m in mas)))


def cmd_acceptance(a, rep, out):
    from .acceptance import run_all

    only = [int(x) for x in a.only.split(",") if x.strip()] or None
    results = run_all(only)
    for r in results:
        rep.add(f"criterion_{r.number}", "PASS" if r.passed else "FAIL")
        rep.add(f"criterion_{r.number}_detail", r.detail)
        print(r.line(), file=sys.stderr)
    rep.add("all_passed", all(r.passed for r in results))
    a._failed = not all(r.passed for r in results)


COMMANDS = {
    "min-geodesic": cmd_min_geodesic,
    "stable-norm": cmd_stable_norm,
    "cylinder-check": cmd_cylinder_check,
    "kernel-dim": cmd_kernel_dim,
    "index": cmd_index,
    "pb-bound": cmd_pb_bound,
    "clifford": cmd_clifford,
    "graph-check": cmd_graph_check,
    "acceptance": cmd_acceptance,
}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        a = ap.parse_args(argv)
        defaults = load_defaults(a.config, a.command)
        if defaults:
            sp = ap._subparsers._group_actions[0].choices[a.command]
            sp.set_defaults(**_config_dests(sp, defaults))
            a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ClabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    echo = {k: v for k, v in vars(a).items() if k not in ("command", "out", "config")}
    rep = Report(a.command, echo, version=__version__)
    out = a.out
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        COMMANDS[a.command](a, rep, out)
    except (ConvergenceFailure, NumericalFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ClabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = rep.text()
    stdout.write(text)
    if out:
        (Path(out) / f"{a.command}.txt").write_text(text)
    print(f"wall_time = {time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return 1 if getattr(a, "_failed", False) else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
