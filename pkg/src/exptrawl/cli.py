"""Command-line front end.

Every subcommand reads a model config (``--model``) and/or a jump-path CSV
(``--path``) and writes CSV or config text to ``--out`` (stdout by default).
Exit codes: 0 success, 1 usage error, 2 model or data error, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import estimate, io
from .errors import ModelError, NotConverged
from .filtering import run_filter
from .likelihood import loglik_terms
from .model import JumpPath, TrawlModel
from .oracle import ctmc_forward, enumerate_joint
from .simulate import simulate
from .smoother import run_smoother

EXIT_USAGE, EXIT_MODEL, EXIT_NOT_CONVERGED = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; suppressed defaults keep them from
    # overwriting values given before the subcommand name
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--model", help="model config file (key = value)", **kw)
    p.add_argument("--path", help="jump-path CSV (time,size) with a <csv>.cfg sidecar", **kw)
    p.add_argument("--seed", type=int, help="RNG seed (overrides the config)", **kw)
    p.add_argument("--out", help="output file (default: stdout)", **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = _Parser(prog="exptrawl", description=__doc__.splitlines()[0], parents=[_common(suppress=False)])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate a path and its hidden trace")
    p.add_argument("--horizon", type=float, help="length of the observation window")
    p.add_argument("--hidden-out", help="hidden-trace CSV (default: <out stem>.hidden.csv)")

    p = sub.add_parser("filter", parents=[common], help="filtered means and intensities")
    p.add_argument("--delta", type=float, help="grid spacing during inactivity; omit for jump times only")

    p = sub.add_parser("smooth", parents=[common], help="smoothed means and jump weights")
    p.add_argument("--weights-out", help="weights CSV (default: <out stem>.weights.csv)")

    p = sub.add_parser("loglik", parents=[common], help="log-likelihood and its terms")
    p.add_argument("--delta", type=float, help="grid spacing (default: config delta or 0.5)")
    p.add_argument("--exact", action="store_true", help="integrate the intensity in closed form")
    p.add_argument("--no-initial", action="store_true", help="drop the initial-value term")

    p = sub.add_parser("fit-em", parents=[common], help="EM estimate")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--monitor-delta", type=float, default=0.01, help="0 disables the monitor")
    p.add_argument("--moment-start", action="store_true", help="start from moments instead of the config")
    p.add_argument("--trace-out", help="iteration trace CSV")

    p = sub.add_parser("fit-mle", parents=[common], help="direct maximum likelihood (Nelder-Mead)")
    p.add_argument("--delta", type=float, help="grid spacing (default: config delta or 0.5)")
    p.add_argument("--xatol", type=float, default=1e-8)
    p.add_argument("--moment-start", action="store_true")
    p.add_argument("--trace-out", help="evaluation trace CSV")

    p = sub.add_parser("mple", parents=[common], help="partial-likelihood fit for non-negative paths")
    p.add_argument("--geometric", action="store_true", help="fit the geometric Levy basis")
    p.add_argument("--no-phi", action="store_true", help="skip the phi search")
    p.add_argument("--phi-bracket", type=float, nargs=2, default=(1e-4, 1e2), metavar=("LO", "HI"))
    p.add_argument("--delta", type=float, help="grid spacing for the phi search (default: exact)")
    p.add_argument("--trace-out", help="phi evaluation trace CSV")

    p = sub.add_parser("bounds", parents=[common], help="bounds on the initial counts")
    p.add_argument("--marks", type=int, nargs="+", help="positive marks (default: 1..max)")
    p.add_argument("--over-time", action="store_true", help="bounds from the path up to each jump")

    p = sub.add_parser("oracle", parents=[common], help=argparse.SUPPRESS)
    p.add_argument("--kind", choices=("enumerate", "ctmc"), default="enumerate")
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--j-max", type=int, default=15)
    p.add_argument("--c0-cap", type=int, default=8)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _config(args, required=True):
    if args.model is None:
        if required:
            raise UsageError(f"{args.command}: --model is required")
        return io.ModelConfig(None, {})
    return io.read_model_config(args.model, require_model=required)


def _path(args, cfg):
    if args.path is None:
        raise UsageError(f"{args.command}: --path is required")
    return io.read_path(args.path, cfg.get("y0"), cfg.get("horizon"))


def _emit_csv(target, header, rows):
    io.write_csv(sys.stdout if target in (None, "-") else target, header, rows)


def _emit_text(target, text):
    if target in (None, "-"):
        sys.stdout.write(text)
    else:
        io.write_text(target, text)


def _derived(out, suffix):
    if out in (None, "-"):
        return None
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


def _mean_columns(marks):
    """Column names and mark order for the per-mark means."""
    if len(marks) == 2 and marks[0] == -marks[1]:
        return ["E_C_plus", "E_C_minus"], [1, 0]
    return [f"E_C_{y}" for y in marks], list(range(len(marks)))


def _param_names(model):
    return [f"nu.{y}" for y in model.support] + ["phi"]


def _intensity_rows(model, times, means):
    """Rows ``time, means..., E_D, lambda_<y>...`` from per-mark means."""
    marks = list(model.support)
    sizes = sorted(set(marks) | {-y for y in marks})
    names, order = _mean_columns(marks)
    header = ["time"] + names + ["E_D"] + [f"lambda_{y}" for y in sizes]
    rows = []
    for t, m in zip(np.asarray(times).tolist(), np.asarray(means).tolist()):
        mean = dict(zip(marks, m))
        lam = [model.rate(y) + model.phi * mean.get(-y, 0.0) for y in sizes]
        rows.append([float(t)] + [float(m[k]) for k in order] + [float(sum(m))] + lam)
    return header, rows


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.get("seed")
    horizon = args.horizon if args.horizon is not None else cfg.get("horizon")
    if seed is None or horizon is None:
        raise UsageError("simulate: --seed and --horizon are required (or seed/horizon in the config)")
    if args.out in (None, "-"):
        raise UsageError("simulate: --out is required")
    path, trace = simulate(cfg.model, horizon, seed=seed)
    io.write_path(args.out, path)
    io.write_hidden(args.hidden_out or _derived(args.out, ".hidden.csv"), trace)


def cmd_filter(args):
    cfg = _config(args)
    model = cfg.model
    path = _path(args, cfg)
    out = run_filter(model, path, delta=args.delta)
    if args.delta is None:
        times = np.concatenate([[0.0], path.times, [path.horizon]])
        laws = [out.initial] + [out.before(i) for i in range(len(path))] + [out.final]
        means = np.array([d.probs @ d.counts for d in laws])
    else:
        times, means = out.grid.times, out.grid.means
    _emit_csv(args.out, *_intensity_rows(model, times, means))


def cmd_smooth(args):
    cfg = _config(args)
    model = cfg.model
    path = _path(args, cfg)
    sm = run_smoother(model, run_filter(model, path))
    times, means = sm.mean_paths()
    init = sm.initial_probs @ sm.filter.initial_counts
    names, order = _mean_columns(model.support)
    rows = [
        [float(t)] + [float(m[k]) for k in order] + [float(sum(m))]
        for t, m in zip([0.0] + times.tolist(), [init.tolist()] + means.tolist())
    ]
    _emit_csv(args.out, ["time"] + names + ["E_D"], rows)
    target = args.weights_out or _derived(args.out, ".weights.csv")
    if target:
        w = [(x.time, x.size, x.arrival_prob, x.departure_prob) for x in sm.weights]
        io.write_csv(target, ["time", "size", "arrival_prob", "departure_prob"], w)


def cmd_loglik(args):
    cfg = _config(args)
    path = _path(args, cfg)
    delta = None if args.exact else (args.delta if args.delta is not None else cfg.get("delta", 0.5))
    if delta is not None and not delta > 0:
        raise UsageError("loglik: --delta must be positive")
    ll = loglik_terms(cfg.model, path, delta, include_initial=not args.no_initial)
    text = (
        f"loglik = {io.fmt(ll.total)}\n"
        f"jump_term = {io.fmt(ll.jump_term)}\n"
        f"integral_term = {io.fmt(ll.integral_term)}\n"
        f"initial_term = {io.fmt(ll.initial_term)}\n"
        f"delta = {'exact' if delta is None else io.fmt(delta)}\n"
    )
    _emit_text(args.out, text)


def _start(args, cfg, path):
    return estimate.moment_start(path, cfg.model.support) if args.moment_start else cfg.model


def cmd_fit_em(args):
    cfg = _config(args)
    path = _path(args, cfg)
    start = _start(args, cfg, path)
    monitor = args.monitor_delta if args.monitor_delta > 0 else None
    model, trace = estimate.em_fit(start, path, args.tol, args.max_iter, monitor, raise_on_failure=False)
    _emit_text(args.out, io.format_model_config(model))
    if args.trace_out:
        rows = [
            [i] + it.params.tolist() + [math.nan if it.loglik is None else it.loglik, it.max_change]
            for i, it in enumerate(trace.iterations)
        ]
        io.write_csv(args.trace_out, ["iteration"] + _param_names(start) + ["loglik", "max_change"], rows)
    if not trace.converged:
        raise NotConverged(f"EM did not converge in {args.max_iter} iterations")


def cmd_fit_mle(args):
    cfg = _config(args)
    path = _path(args, cfg)
    start = _start(args, cfg, path)
    delta = args.delta if args.delta is not None else cfg.get("delta", 0.5)
    history = []
    try:
        model = estimate.direct_mle(start, path, delta, xatol=args.xatol, history=history)
    finally:
        if args.trace_out:
            rows = [[i] + theta.tolist() + [ll] for i, (theta, ll) in enumerate(history)]
            io.write_csv(args.trace_out, ["evaluation"] + _param_names(start) + ["loglik"], rows)
    _emit_text(args.out, io.format_model_config(model, delta=delta))


def cmd_mple(args):
    cfg = _config(args, required=False)
    path = _path(args, cfg)
    if args.geometric:
        levy = estimate.mple_geometric(path).levy()
    else:
        levy = estimate.mple_levy(path)
    if args.no_phi:
        text = "".join(f"nu.{y} = {io.fmt(m)}\n" for y, m in zip(levy.support, levy.mass))
        _emit_text(args.out, text)
        return
    history = []
    try:
        phi = estimate.mple_phi(path, levy, tuple(args.phi_bracket), args.delta, history=history)
    finally:
        if args.trace_out:
            io.write_csv(args.trace_out, ["evaluation", "phi", "loglik"],
                         [[i, p, ll] for i, (p, ll) in enumerate(history)])
    _emit_text(args.out, io.format_model_config(TrawlModel(levy, phi)))


def cmd_bounds(args):
    cfg = _config(args, required=False)
    path = _path(args, cfg)
    marks = args.marks
    if marks is None:
        top = max([path.y0] + [abs(s) for s in path.sizes.tolist()])
        marks = list(range(1, top + 1))
    if args.over_time:
        rows = []
        for k, t in enumerate([0.0] + path.times.tolist()):
            prefix = JumpPath(path.y0, path.horizon, path.times[:k], path.sizes[:k])
            b = estimate.initial_bounds(prefix, marks)
            rows += [[t, y, lo, hi] for y, (lo, hi) in b.items()]
        _emit_csv(args.out, ["time", "mark", "lower", "upper"], rows)
    else:
        b = estimate.initial_bounds(path, marks)
        _emit_csv(args.out, ["mark", "lower", "upper"], [[y, lo, hi] for y, (lo, hi) in b.items()])


def cmd_oracle(args):
    cfg = _config(args)
    model = cfg.model
    path = _path(args, cfg)
    marks = list(model.support)
    if args.kind == "enumerate":
        res = enumerate_joint(model, path, args.c0_cap)
        laws = [(0.0, res.initial)] + list(zip(path.times.tolist(), res.smoothed_before))
    else:
        res = ctmc_forward(model, path, args.dt, args.j_max)
        laws = list(zip(path.times.tolist(), res.before))
    rows = []
    for t, law in laws:
        for state, p in sorted(law.items()):
            rows.append([t] + list(state) + [float(p)])
    _emit_csv(args.out, ["time"] + [f"C_{y}" for y in marks] + ["prob"], rows)


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "smooth": cmd_smooth,
    "loglik": cmd_loglik,
    "fit-em": cmd_fit_em,
    "fit-mle": cmd_fit_mle,
    "mple": cmd_mple,
    "bounds": cmd_bounds,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except ModelError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
