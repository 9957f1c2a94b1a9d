"""``coopt`` command line: solve, stereo, oracle, decompose, propagation, bench."""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time

import numpy as np

from . import __version__
from .decomposition import (
    default_tree_set,
    grid_hv_decomposition,
    spanning_tree_decomposition,
    straightforward_decomposition,
    validate_decomposition,
)
from .errors import CoopError
from .generators import instance_suite
from .oracle import brute_force_min
from .problem import read_ncop, validate_problem
from .propagation import (
    PropagationMatrix,
    neighbor_degree_matrix,
    self_loop_degree_matrix,
    validate_propagation,
)
from .schedule import LambdaSchedule
from .solver import SolverConfig, run

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _decomposition(p, kind, rows=None, cols=None):
    if kind == "straightforward":
        return straightforward_decomposition(p)
    if kind == "spanning-tree":
        return spanning_tree_decomposition(p, default_tree_set(p))
    if kind == "grid":
        if rows is None or cols is None:
            raise UsageError("grid decomposition needs --rows and --cols")
        return grid_hv_decomposition(rows, cols, p)
    raise UsageError(f"unknown decomposition {kind!r}")


def _propagation(p, kind, path=None):
    if path:
        w = np.zeros((p.n, p.n))
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].split()
                if line:
                    w[int(line[0]), int(line[1])] = float(line[2])
        return PropagationMatrix(w)
    return neighbor_degree_matrix(p) if kind == "neighbor" else self_loop_degree_matrix(p)


def cmd_solve(args, out):
    p = read_ncop(args.input)
    validate_problem(p).raise_first()
    cfg = SolverConfig(
        form=args.form,
        schedule=LambdaSchedule.parse(args.lam),
        alpha=args.alpha,
        max_iter=args.max_iter,
        equilibrium_tol=args.tol,
        consensus_required_repeats=args.repeats,
        threads=args.threads,
    )
    d = _decomposition(p, args.decomposition, args.rows, args.cols)
    w = None if args.form == "simple" else _propagation(p, args.propagation, args.weights)
    if w is not None:
        validate_propagation(w, require_irreducible=False, n=p.n)
    out.write(f"# config: {cfg.describe()} decomposition={args.decomposition}\n")
    res = run(p, d, w, cfg)
    csv_text = res.trace.to_csv()
    if args.trace and args.trace != "-":
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        out.write(csv_text)
    out.write("solution " + " ".join(map(str, res.assignment)) + "\n")
    out.write(f"energy {res.energy!r}\n")
    if res.trace.lower_bound_valid:
        out.write(f"lower_bound {res.trace.rows[-1].lower_bound!r}\n")
    if res.certificate:
        c = res.certificate
        out.write(f"certificate {c.kind} iteration {c.iteration}\n")
    else:
        out.write("certificate none\n")


def cmd_oracle(args, out):
    p = read_ncop(args.input)
    validate_problem(p).raise_first()
    r = brute_force_min(p)
    out.write(f"energy {r.energy!r}\n")
    out.write("assignment " + " ".join(map(str, r.assignment)) + "\n")
    out.write(f"visited {r.visited}\n")


def cmd_decompose(args, out):
    p = read_ncop(args.input)
    validate_problem(p).raise_first()
    d = _decomposition(p, args.kind, args.rows, args.cols)
    validate_decomposition(p, d, seed=args.seed)
    if args.dump:
        out.write(d.dump())
    else:
        out.write(f"{d.kind} decomposition: {d.m} sub-objectives, valid\n")


def cmd_propagation(args, out):
    p = read_ncop(args.input)
    validate_problem(p).raise_first()
    w = _propagation(p, args.kind)
    validate_propagation(w, require_irreducible=True)
    if args.dump:
        out.write(w.dump())
    else:
        out.write(f"{args.kind} propagation matrix {w.n}x{w.n}, column-stochastic, irreducible\n")


def cmd_bench(args, out):
    sizes = {"small": 20, "medium": 100}
    count = sizes[args.suite]
    cfg = SolverConfig("basic", LambdaSchedule.parse(args.lam), max_iter=args.max_iter, threads=args.threads)
    out.write(f"# config: suite={args.suite} seed={args.seed} {cfg.describe()}\n")
    out.write("instance,n,configurations,energy,oracle,gap,certified\n")
    for name, p in instance_suite(count, args.seed):
        d = straightforward_decomposition(p)
        res = run(p, d, neighbor_degree_matrix(p), cfg)
        opt = brute_force_min(p).energy
        out.write(
            f"{name},{p.n},{p.num_configurations},{res.energy!r},{opt!r},"
            f"{res.energy - opt!r},{int(res.certificate is not None)}\n"
        )


def cmd_stereo(args, out):
    from .stereo import (
        DisparityMap,
        StereoConfig,
        build_stereo_problem,
        evaluate_disparity,
        load_pgm,
        save_pgm,
        sweep_solver,
        synthetic_pair,
    )
    from .problem import evaluate_energy

    cfg = StereoConfig(
        d_max=args.dmax,
        match_cost=args.match_cost,
        tau_match=args.tau_match,
        smoothness=args.smoothness,
        tau_smooth=args.tau_smooth,
        alpha=args.alpha,
        max_iter=args.iters,
        threads=args.threads,
    )
    truth = mask = None
    if args.synthetic:
        rows, cols = (int(v) for v in args.synthetic.lower().split("x"))
        left, right, truth, mask = synthetic_pair(rows, cols, cfg.d_max, args.seed)
    else:
        if not (args.left and args.right):
            raise UsageError("stereo needs --left and --right (or --synthetic RxC)")
        left, right = load_pgm(args.left), load_pgm(args.right)
        if args.truth:
            truth = DisparityMap.from_image(load_pgm(args.truth), args.scale)
    out.write(f"# config: {cfg}\n")
    t0 = time.perf_counter()
    p = build_stereo_problem(left, right, cfg)
    res = sweep_solver(p, left.height, left.width, cfg.alpha, cfg.max_iter, cfg.threads)
    seconds = time.perf_counter() - t0
    for r in res.trace.rows:
        out.write(f"# iter {r.iter} energy {r.energy!r} consensus {int(r.consensus)}\n")
    energy = evaluate_energy(p, res.disparity.labels.ravel())
    if args.out:
        save_pgm(DisparityMap(res.disparity.labels, args.scale), args.out)
    bad = rms = float("nan")
    if truth is not None:
        m = evaluate_disparity(res.disparity, truth, mask=mask)
        bad, rms = m.bad_pct, m.rms
    out.write("energy,bad_pct,rms,seconds\n")
    out.write(f"{energy!r},{bad:.4f},{rms:.4f},{seconds:.3f}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coopt", description=__doc__)
    ap.add_argument("--version", action="store_true", help="print version and build info")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--config", help="JSON file of option defaults")

    s = sub.add_parser("solve", help="run cooperative optimization on an ncop file")
    common(s)
    s.add_argument("--input", required=True)
    s.add_argument("--form", choices=["basic", "canonical", "simple"], default="basic")
    s.add_argument("--lambda", dest="lam", default="0.5",
                   help="constant value, 'harmonic', 'power:P' or a comma list")
    s.add_argument("--alpha", type=float, default=0.16)
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--decomposition", choices=["straightforward", "spanning-tree", "grid"],
                   default="straightforward")
    s.add_argument("--propagation", choices=["neighbor", "selfloop"], default="neighbor")
    s.add_argument("--weights", help="propagation matrix as 'i j w' triplets")
    s.add_argument("--rows", type=int)
    s.add_argument("--cols", type=int)
    s.add_argument("--trace", help="write trace CSV here instead of stdout")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="exhaustive minimum of an ncop file")
    common(o)
    o.add_argument("--input", required=True)
    o.set_defaults(func=cmd_oracle)

    d = sub.add_parser("decompose", help="build and check a decomposition")
    common(d)
    d.add_argument("--input", required=True)
    d.add_argument("--kind", choices=["straightforward", "spanning-tree", "grid"],
                   default="straightforward")
    d.add_argument("--rows", type=int)
    d.add_argument("--cols", type=int)
    d.add_argument("--dump", action="store_true")
    d.set_defaults(func=cmd_decompose)

    pr = sub.add_parser("propagation", help="build a propagation matrix")
    common(pr)
    pr.add_argument("--input", required=True)
    pr.add_argument("--kind", choices=["neighbor", "selfloop"], default="neighbor")
    pr.add_argument("--dump", action="store_true")
    pr.set_defaults(func=cmd_propagation)

    b = sub.add_parser("bench", help="cooperative solution vs exhaustive oracle")
    common(b)
    b.add_argument("--suite", choices=["small", "medium"], default="small")
    b.add_argument("--lambda", dest="lam", default="0.5")
    b.add_argument("--max-iter", type=int, default=50)
    b.set_defaults(func=cmd_bench)

    st = sub.add_parser("stereo", help="disparity map from a PGM stereo pair")
    common(st)
    st.add_argument("--left")
    st.add_argument("--right")
    st.add_argument("--synthetic", metavar="RxC", help="use a generated pair instead of files")
    st.add_argument("--dmax", type=int, default=8)
    st.add_argument("--alpha", type=float, default=0.16)
    st.add_argument("--iters", type=int, default=16)
    st.add_argument("--match-cost", choices=["absolute", "squared"], default="absolute")
    st.add_argument("--tau-match", type=float, default=20.0)
    st.add_argument("--smoothness", type=float, default=20.0)
    st.add_argument("--tau-smooth", type=float, default=2.0)
    st.add_argument("--out")
    st.add_argument("--truth")
    st.add_argument("--scale", type=int, default=1)
    st.set_defaults(func=cmd_stereo)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv: list[str]) -> None:
    """Defaults from ``--config`` sit between built-in defaults and flags."""
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    with open(path, encoding="utf-8") as fh:
        values = json.load(fh)
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    for sp in sub.choices.values():
        known = {a.dest for a in sp._actions}
        unknown = set(values) - known
        if unknown and argv and sp.prog.endswith(" " + argv[0]):
            raise UsageError(f"config file has unknown keys {sorted(unknown)}")
        sp.set_defaults(**{k: v for k, v in values.items() if k in known})


def main(argv: list[str] | None = None, out=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    ap = build_parser()
    try:
        _apply_config_file(ap, argv)
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"coopt: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.version:
        out.write(
            f"coopt {__version__} (python {platform.python_version()}, numpy {np.__version__})\n"
        )
        return 0
    if not getattr(args, "command", None):
        ap.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (CoopError, OSError, ValueError) as exc:
        print(f"coopt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
