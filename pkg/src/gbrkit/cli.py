"""Command-line front end: CDF tables, simulations and representation comparisons.

Exit status: 0 on success, 2 for parameter-domain errors, 3 when a numerical
refinement does not converge. Tables are CSV (17 significant digits) or JSON.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import distributions as dist
from . import lpp_sim
from .errors import DomainError, NonConvergenceError

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3
TOL_RANGE = (1e-12, 1e-3)


# ---------------------------------------------------------------------------
# parsing helpers


def parse_grid(text: str) -> np.ndarray:
    """'lo:hi:step' -> inclusive grid; a single number gives a one-point grid."""
    parts = str(text).split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise DomainError(f"bad grid {text!r}; expected lo:hi:step")
    if len(vals) == 1:
        return np.array(vals)
    if len(vals) != 3:
        raise DomainError(f"bad grid {text!r}; expected lo:hi:step")
    lo, hi, step = vals
    if step <= 0 or hi < lo:
        raise DomainError("grid needs step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def vector(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def read_config(path: str) -> dict:
    """Flat key=value file; '#' starts a comment; keys use dashes or underscores."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"config line without '=': {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_table(columns, rows, path=None, form="csv"):
    if form == "json":
        text = json.dumps({"columns": list(columns), "rows": [[_plain(v) for v in r] for r in rows]}, indent=1)
    else:
        lines = [",".join(columns)] + [",".join(fmt(v) for v in r) for r in rows]
        text = "\n".join(lines)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def read_table(path: str):
    """Inverse of write_table: (columns, rows) with numbers parsed back to float."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return data["columns"], [list(r) for r in data["rows"]]
    lines = [ln for ln in text.splitlines() if ln.strip()]
    columns = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        rows.append([_number(v) for v in ln.split(",")])
    return columns, rows


def _number(text):
    if text in ("true", "false"):
        return text == "true"
    try:
        return float(text)
    except ValueError:
        return text


PLOT_SCRIPT = '''import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {path!r}
with open(path) as fh:
    rows = list(csv.reader(fh))
head, body = rows[0], rows[1:]
x = [float(r[0]) for r in body]
for k in range(1, len(head)):
    try:
        y = [float(r[k]) for r in body]
    except ValueError:
        continue
    plt.plot(x, y, label=head[k])
plt.xlabel(head[0])
plt.legend()
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def emit_plot_script(output: str) -> str:
    target = output.rsplit(".", 1)[0] + "_plot.py"
    with open(target, "w") as fh:
        fh.write(PLOT_SCRIPT.format(path=output))
    return target


# ---------------------------------------------------------------------------
# jobs


def _threads(args):
    if args.threads is not None:
        return max(1, int(args.threads))
    return max(1, int(os.environ.get("GBRKIT_THREADS", "1")))


def _check_tol(tol):
    if not TOL_RANGE[0] <= tol <= TOL_RANGE[1]:
        raise DomainError(f"tolerance {tol} outside [{TOL_RANGE[0]}, {TOL_RANGE[1]}]")


def _grid_map(fn, grid, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, grid))
    return [fn(s) for s in grid]


def _cdf_rows(fn, grid, threads):
    results = _grid_map(fn, grid, threads)
    rows = []
    for s, r in zip(grid, results):
        if r.out_of_range:
            print(f"warning: value {r.value:.3e} at s={s} lies outside [0, 1]", file=sys.stderr)
        rows.append((s, r.value, r.error))
    return ("s", "value", "error_estimate"), rows


def job_cdf(args):
    _check_tol(args.tol)
    grid = parse_grid(args.grid)
    kind = args.kind
    if kind == "gbr":
        params = dist.GbrParams(args.ell, args.kay, vector(args.x), vector(args.y), args.tau)
        return _cdf_rows(lambda s: dist.gbr_cdf(params, s, tol=args.tol), grid, _threads(args))
    if kind == "br":
        method = {"airy": lambda s: dist.br_cdf_airy(args.tau, s, tol=args.tol),
                  "classical": lambda s: dist.br_cdf_classical(args.tau, s, tol=args.tol),
                  "tau0": lambda s: dist.br_cdf_tau0(s, tol=args.tol),
                  "via-gbr": lambda s: dist.br_cdf_via_gbr(args.tau, s, tol=args.tol)}[args.method]
        if args.method == "tau0" and args.tau != 0:
            raise DomainError("method tau0 needs --tau 0")
        return _cdf_rows(method, grid, _threads(args))
    if kind == "finite-n":
        params = dist.FiniteNParams(args.m, args.n, vector(args.alpha), vector(args.beta), args.model, args.q)
        return _cdf_rows(lambda s: dist.finite_n_cdf(params, s, tol=args.tol), grid, _threads(args))
    return _cdf_rows(lambda s: dist.gue_cdf(s, tol=args.tol), grid, _threads(args))


def _lattice(args, m, n, model=None):
    alpha, beta = vector(args.alpha), vector(args.beta)
    return lpp_sim.LatticeConfig(m, n, len(alpha), len(beta), alpha, beta, model or args.model, args.seed, args.q)


def _report_rows(report, skip=("samples", "exits")):
    rows = []
    for key, value in vars(report).items():
        if key in skip:
            continue
        if isinstance(value, np.ndarray):
            value = ";".join(fmt(v) for v in value)
        rows.append((key, value))
    return ("key", "value"), rows


def job_simulate(args):
    threads = _threads(args)
    if args.kind == "ecdf":
        cfg = _lattice(args, 1, 1)
        rep = lpp_sim.ecdf_rescaled(cfg, args.N, args.tau, args.count, threads=threads)
        grid = parse_grid(args.grid) if args.grid else rep.grid
        return ("s", "value", "error_estimate"), [(s, rep.at(s), rep.dkw_radius) for s in grid]
    if args.kind == "stationarity":
        cfg = _lattice(args, args.N, args.N, "stationary")
        return _report_rows(lpp_sim.stationarity_test(cfg, args.column, args.count, threads=threads))
    if args.kind == "exit-tail":
        cfg = _lattice(args, args.N, args.N, "thick")
        rep = lpp_sim.exit_tail(cfg, args.N, parse_grid(args.u_grid), args.count, threads=threads)
        cols = ("u", "tail", "wilson_lower", "wilson_upper")
        rows = list(zip(rep.u, rep.tail, rep.lower, rep.upper))
        print(f"slope={fmt(rep.slope())} slope_upper99={fmt(rep.slope_upper(seed=args.seed))}", file=sys.stderr)
        return cols, rows
    rep = lpp_sim.boundary_process_probe(args.p, args.N, args.u, args.count, seed=args.seed)
    return _report_rows(rep)


def job_compare(args):
    _check_tol(args.tol)
    threads = _threads(args)
    if args.kind == "br":
        t = parse_grid(args.grid)
        s_grid = t - args.tau ** 2

        def both(s):
            return dist.br_cdf_airy(args.tau, s, tol=args.tol).value, dist.br_cdf_classical(args.tau, s, tol=args.tol).value
        vals = _grid_map(both, s_grid, threads)
        rows = [(s, a, c, abs(a - c)) for s, (a, c) in zip(s_grid, vals)]
        worst = max(r[3] for r in rows)
        print(f"max |airy - classical| = {fmt(worst)}")
        return ("s", "airy", "classical", "abs_diff"), rows
    params = dist.FiniteNParams(args.m, args.n, vector(args.alpha), vector(args.beta), args.model, args.q)
    cfg = _lattice(args, args.m, args.n)
    L = np.sort(lpp_sim.simulate(cfg, args.count, threads=threads))
    if args.grid:
        grid = parse_grid(args.grid)
    else:
        grid = np.quantile(L, np.linspace(0.01, 0.99, 33))
        if args.model == "geometric":
            grid = np.unique(np.floor(grid))
    F = _grid_map(lambda s: dist.finite_n_cdf(params, s, tol=args.tol).value, grid, threads)
    right = np.searchsorted(L, grid, side="right") / len(L)
    left = np.searchsorted(L, grid, side="left") / len(L)
    diff = np.maximum(np.abs(right - F), np.abs(left - F))
    radius = lpp_sim.dkw_radius(len(L))
    print(f"sup |F - ECDF| = {fmt(diff.max())} dkw99 = {fmt(radius)}")
    return ("s", "cdf", "ecdf", "abs_diff"), list(zip(grid, F, right, diff))


# ---------------------------------------------------------------------------
# parser


def _common(sub, grid_default=None):
    sub.add_argument("--grid", default=grid_default, help="lo:hi:step (inclusive)")
    sub.add_argument("--tol", type=float, default=1e-8)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=None, help="worker count (default $GBRKIT_THREADS or 1)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--output", "-o", default=None)
    sub.add_argument("--config", default=None, help="key=value file; flags override it")
    sub.add_argument("--emit-plot-script", action="store_true")


def _boundary_args(sub, model=True):
    sub.add_argument("--alpha", default="0")
    sub.add_argument("--beta", default="0")
    if model:
        sub.add_argument("--model", choices=("thick", "stationary", "geometric"), default="thick")
    sub.add_argument("--q", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="gbrkit", description="Generalized Baik-Rains laws and LPP simulation.")
    top = parser.add_subparsers(dest="command", required=True)

    cdf = top.add_parser("cdf", help="tabulate a CDF").add_subparsers(dest="kind", required=True)
    p = cdf.add_parser("gbr")
    _common(p, "-6:6:0.5")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--kay", type=int, default=1)
    p.add_argument("--x", default="0")
    p.add_argument("--y", default="0")
    p.add_argument("--tau", type=float, default=0.0)
    p = cdf.add_parser("br")
    _common(p, "-6:6:0.5")
    p.add_argument("--method", choices=("airy", "classical", "tau0", "via-gbr"), default="airy")
    p.add_argument("--tau", type=float, default=0.0)
    p = cdf.add_parser("finite-n")
    _common(p, "0:20:1")
    p.add_argument("--m", type=int, required=False, default=10)
    p.add_argument("--n", type=int, required=False, default=10)
    _boundary_args(p)
    p = cdf.add_parser("gue")
    _common(p, "-6:4:0.5")

    sim = top.add_parser("simulate", help="Monte Carlo probes").add_subparsers(dest="kind", required=True)
    p = sim.add_parser("ecdf")
    _common(p)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--count", type=int, default=10000)
    _boundary_args(p)
    p = sim.add_parser("stationarity")
    _common(p)
    p.add_argument("--N", type=int, default=60)
    p.add_argument("--column", type=int, default=None)
    p.add_argument("--count", type=int, default=5000)
    _boundary_args(p, model=False)
    p = sim.add_parser("exit-tail")
    _common(p)
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--count", type=int, default=10000)
    p.add_argument("--u-grid", default="0:3:0.25")
    _boundary_args(p, model=False)
    p = sim.add_parser("boundary")
    _common(p)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--N", type=int, default=10000)
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--count", type=int, default=5000)

    cmp_ = top.add_parser("compare", help="cross-check representations").add_subparsers(dest="kind", required=True)
    p = cmp_.add_parser("br")
    _common(p, "-6:6:0.25")
    p.add_argument("--tau", type=float, default=0.5)
    p = cmp_.add_parser("finite-vs-mc")
    _common(p)
    p.add_argument("--m", type=int, default=12)
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--count", type=int, default=20000)
    _boundary_args(p)
    return parser


def _subparser(parser, argv):
    """The leaf parser selected by argv, so config defaults land where argparse reads them."""
    node = parser
    for token in argv:
        actions = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions or token not in actions[0].choices:
            if token.startswith("-"):
                continue
            break
        node = actions[0].choices[token]
    return node


def _glue_negative_values(argv):
    """'--grid -6:6:1' -> '--grid=-6:6:1' so values with a leading minus are not read as flags."""
    out = []
    k = 0
    while k < len(argv):
        tok = argv[k]
        nxt = argv[k + 1] if k + 1 < len(argv) else None
        if (tok.startswith("--") and "=" not in tok and nxt is not None and len(nxt) > 1
                and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{tok}={nxt}")
            k += 2
        else:
            out.append(tok)
            k += 1
    return out


def parse_args(argv):
    parser = build_parser()
    argv = _glue_negative_values(argv)
    if "--config" in argv:
        path = argv[argv.index("--config") + 1]
        leaf = _subparser(parser, argv)
        known = {a.dest for a in leaf._actions}
        values = read_config(path)
        unknown = sorted(set(values) - known)
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(unknown)}")
        leaf.set_defaults(**values)
    return parser.parse_args(argv)


def run(args) -> int:
    job = {"cdf": job_cdf, "simulate": job_simulate, "compare": job_compare}[args.command]
    columns, rows = job(args)
    if args.command != "compare" or args.output:
        write_table(columns, rows, args.output, args.format)
    if args.emit_plot_script:
        if not args.output:
            raise DomainError("--emit-plot-script needs --output")
        emit_plot_script(args.output)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(parse_args(argv))
    except DomainError as exc:
        print(f"gbrkit: parameter error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NonConvergenceError as exc:
        print(f"gbrkit: no convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"gbrkit: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
