"""Command-line interface: ``mic-hawkes <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every command writes its artifacts plus a ``manifest.json`` (input digests,
seed, package version, argv) into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .evaluation import evaluate, split_train_test
from .experiments import COMPETITORS, grid_study
from .inference import FitConfig, FitError, cross_validate, fit
from .layout import layout
from .likelihood import ImpossibleEventError
from .model import ModelError, UserGraph
from .moments import SingularSystemError, UnstableError, moment_curves
from .simulation import ScenarioConfig, generate_scenario, simulate

logger = logging.getLogger("mic_hawkes")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_UNITS = {"": 1.0, "s": 1.0, "sec": 1.0, "min": 60.0, "m": 60.0, "h": 3600.0, "d": 86400.0}


def parse_duration(text: str) -> float:
    """Seconds from ``'3'``, ``'6min'``, ``'10h'``, ``'2.5d'``."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z]*)\s*", str(text))
    if not m or m.group(2).lower() not in _UNITS:
        raise argparse.ArgumentTypeError(f"invalid duration {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2).lower()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None


def _duration_list(text: str) -> list[float]:
    return [parse_duration(x) for x in text.split(",") if x.strip()]


def _graph_for(args, n_users):
    if args.graph:
        return io.read_graph(args.graph, n_users)
    return UserGraph.empty(n_users)


def _load_log(args, n_users=None, n_cascades=None):
    return io.read_event_log(args.events, T=args.horizon, n_users=n_users, n_cascades=n_cascades)


def _n_users(args, log):
    if getattr(args, "users", None):
        return args.users
    top = int(log.users.max()) + 1 if len(log) else 1
    if args.graph:
        g = io.read_graph(args.graph)
        top = max(top, g.n_users)
    return top


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    sigma = io.read_sigma(args.sigma, args.cascades)
    cfg = ScenarioConfig(
        n_users=args.users, n_cascades=args.cascades, edge_prob=args.edge_prob, T=args.T,
        tau=args.tau, mixing=args.mixing, beta=args.beta, sigma=sigma, w_max=args.w_max,
        mu_max=args.mu_max, seed=args.seed,
    )
    graph, params = generate_scenario(cfg)
    log = simulate(params, cfg.T, seed=np.random.SeedSequence([args.seed, 1]))
    out = Path(args.out)
    paths = [out / "events.csv", out / "graph.csv", out / "params.json"]
    io.write_event_log(paths[0], log)
    io.write_graph(paths[1], graph)
    io.write_params(paths[2], params)
    inputs = [] if args.sigma == "identity" else [args.sigma]
    io.write_manifest(out / "manifest.json", "simulate", args.argv, inputs, paths, args.seed,
                      {"horizon": cfg.T, "n_events": len(log)})
    print(f"simulated {len(log)} events -> {out}")
    return EXIT_OK


def _fit_config(args, n_cascades) -> FitConfig:
    sigma = None
    if args.sigma != "auto":
        sigma = io.read_sigma(args.sigma, n_cascades)
    return FitConfig(beta=args.beta, tau=args.tau, mixing=args.mixing, epsilon=args.epsilon,
                     max_outer_iters=args.max_iter, fit_sigma=not args.fix_sigma, sigma=sigma,
                     parallel_users=args.threads > 1, n_jobs=args.threads)


def cmd_fit(args) -> int:
    log = _load_log(args)
    n_users = _n_users(args, log)
    n_cascades = args.cascades or int(log.cascades.max()) + 1
    graph = _graph_for(args, n_users)
    train = log
    if args.train_fraction < 1:
        train, _, _ = split_train_test(log, args.train_fraction)
    res = fit(train, UserGraph(graph.adjacency), _fit_config(args, n_cascades), n_cascades)
    out = Path(args.out)
    io.write_params(out / "params.json", res.params)
    io.write_json(out / "trajectory.json", {
        "trajectory": res.trajectory, "converged": res.converged, "iterations": res.iterations,
    }, schema="mic-hawkes/fit-trajectory")
    io.write_manifest(out / "manifest.json", "fit", args.argv, [args.events, args.graph, args.sigma],
                      [out / "params.json", out / "trajectory.json"], args.seed)
    print(f"fitted in {res.iterations} iterations (converged={res.converged}), "
          f"log-likelihood {res.trajectory[-1]:.6f}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    log = _load_log(args)
    n_users = _n_users(args, log)
    n_cascades = args.cascades or int(log.cascades.max()) + 1
    graph = _graph_for(args, n_users)
    cfg = _fit_config(args, n_cascades)
    beta, tau, table = cross_validate(log, UserGraph(graph.adjacency), args.beta_grid, args.tau_grid,
                                      args.train_fraction, cfg, n_cascades)
    out = Path(args.out)
    io.write_json(out / "crossval.json", {"best": {"beta": beta, "tau": tau}, "table": table},
                  schema="mic-hawkes/crossval")
    io.write_manifest(out / "manifest.json", "crossval", args.argv, [args.events, args.graph],
                      [out / "crossval.json"], args.seed)
    print(f"best beta={beta} tau={tau}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params = io.read_params(args.params)
    log = _load_log(args, params.n_users, params.n_cascades)
    graph = UserGraph(params.W > 0, params.W)
    train, test, _ = split_train_test(log, args.train_fraction)
    report = evaluate(params, graph, train, test, n_bins=args.bins, replications=args.replications,
                      seed=args.seed)
    out = Path(args.out)
    io.write_json(out / "metrics.json", report.to_dict(), schema="mic-hawkes/metrics")
    io.write_manifest(out / "manifest.json", "eval", args.argv, [args.params, args.events],
                      [out / "metrics.json"], args.seed)
    print(f"test log-likelihood {report.test_loglik:.6f}")
    return EXIT_OK


def cmd_moments(args) -> int:
    params = io.read_params(args.params)
    times = np.linspace(0.0, args.t_max, args.points)
    curves = moment_curves(params, times)
    out = Path(args.out)
    io.write_json(out / "moments.json", {
        "times": curves.times, "expected_intensity": curves.expected_intensity,
        "expected_counts": curves.expected_counts, "per_cascade_intensity": curves.per_cascade_intensity,
        "per_cascade_closure": curves.closure, "stationary_intensity": curves.stationary_intensity,
        "stable": curves.stable,
    }, schema="mic-hawkes/moments")
    io.write_manifest(out / "manifest.json", "moments", args.argv, [args.params], [out / "moments.json"])
    print(f"moments on {len(times)} points (stable={curves.stable})")
    return EXIT_OK


def cmd_viz_export(args) -> int:
    params = io.read_params(args.params)
    log = _load_log(args, params.n_users, params.n_cascades)
    doc = layout(params, log, seed=args.seed, threshold_quantile=args.threshold,
                 layer_offset=args.layer_offset, iterations=args.iterations)
    out = Path(args.out)
    io.write_json(out / "layout.json", doc.to_dict())
    io.write_manifest(out / "manifest.json", "viz-export", args.argv, [args.params, args.events],
                      [out / "layout.json"], args.seed)
    print(f"layout with {len(doc.user_nodes)} users and {len(doc.cascade_nodes)} cascades")
    return EXIT_OK


def _sweep_table(cells) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "sigma_21", "replications", "failures"] + [f"ratio_{k}" for k in COMPETITORS])
    for c in cells:
        w.writerow([c.beta, c.sigma_21, c.replications, c.failures] + [c.mean_ratio(k) for k in COMPETITORS])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    out = Path(args.out)
    base = ScenarioConfig(n_users=args.users, n_cascades=3, edge_prob=args.edge_prob, T=args.T,
                          tau=args.tau, w_max=args.w_max, mu_max=args.mu_max)

    def persist(cells):
        io.write_json(out / "sweep.json", {"complete": len(cells) == len(args.betas) * len(args.sigma21),
                                           "cells": [c.to_dict() for c in cells]},
                      schema="mic-hawkes/sweep")
        io.atomic_write_text(out / "sweep.csv", _sweep_table(cells))

    try:
        cells = grid_study(args.betas, args.sigma21, args.replications, base, seed=args.seed, on_cell=persist,
                           epsilon=args.epsilon, max_iter=args.max_iter)
    except KeyboardInterrupt:
        print("interrupted; partial results kept in", out, file=sys.stderr)
        return 130
    io.write_manifest(out / "manifest.json", "sweep", args.argv, [], [out / "sweep.json", out / "sweep.csv"],
                      args.seed)
    sys.stdout.write(_sweep_table(cells))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mic-hawkes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True, help="output directory")

    def model_opts(sp, beta=1.0, tau="1"):
        sp.add_argument("--tau", type=parse_duration, default=parse_duration(tau),
                        help="kernel decay time (seconds; units s/min/h/d accepted)")
        sp.add_argument("--beta", type=float, default=beta)
        sp.add_argument("--mixing", choices=["linear", "boltzmann"], default="boltzmann")

    def data_opts(sp, graph=True):
        sp.add_argument("--events", required=True)
        if graph:
            sp.add_argument("--graph", default=None, help="edge list; edgeless graph if omitted")
            sp.add_argument("--users", type=int, default=None)
            sp.add_argument("--cascades", type=int, default=None)
        sp.add_argument("--horizon", type=float, default=None, help="observation horizon T (default: last event)")

    def fit_opts(sp):
        sp.add_argument("--sigma", default="auto", help="'auto', 'identity' or a JSON matrix (initial or fixed)")
        sp.add_argument("--fix-sigma", action="store_true", help="keep Sigma fixed (IC/CC models)")
        sp.add_argument("--epsilon", type=float, default=1e-3)
        sp.add_argument("--max-iter", type=int, default=50)
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("simulate", help="generate a synthetic scenario and event log")
    sp.add_argument("--users", type=int, default=50)
    sp.add_argument("--cascades", type=int, default=3)
    sp.add_argument("--T", type=float, default=500.0)
    sp.add_argument("--edge-prob", type=float, default=0.02)
    sp.add_argument("--w-max", type=float, default=1.0)
    sp.add_argument("--mu-max", type=float, default=0.2)
    sp.add_argument("--sigma", default="identity")
    model_opts(sp, beta=33.37, tau="3")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit MIC parameters to an event log")
    data_opts(sp)
    model_opts(sp)
    fit_opts(sp)
    sp.add_argument("--train-fraction", type=float, default=1.0)
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("crossval", help="select beta and tau by held-out log-likelihood")
    data_opts(sp)
    model_opts(sp)
    fit_opts(sp)
    sp.add_argument("--beta-grid", type=_float_list, required=True)
    sp.add_argument("--tau-grid", type=_duration_list, required=True)
    sp.add_argument("--train-fraction", type=float, default=0.8)
    common(sp)
    sp.set_defaults(func=cmd_crossval)

    sp = sub.add_parser("eval", help="metric report of fitted parameters on an event log")
    sp.add_argument("--params", required=True)
    data_opts(sp, graph=False)
    sp.add_argument("--train-fraction", type=float, default=0.8)
    sp.add_argument("--bins", type=int, default=100)
    sp.add_argument("--replications", type=int, default=10)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("moments", help="expected intensity and count curves")
    sp.add_argument("--params", required=True)
    sp.add_argument("--t-max", type=float, required=True)
    sp.add_argument("--points", type=int, default=101)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("viz-export", help="bi-layered layout document")
    sp.add_argument("--params", required=True)
    data_opts(sp, graph=False)
    sp.add_argument("--threshold", type=float, default=0.95, help="edge weight quantile to draw")
    sp.add_argument("--layer-offset", type=float, default=1.0)
    sp.add_argument("--iterations", type=int, default=200)
    common(sp)
    sp.set_defaults(func=cmd_viz_export)

    sp = sub.add_parser("sweep", help="beta x sigma_21 model-comparison grid")
    sp.add_argument("--betas", type=_float_list, default=[0.01, 1.0, 33.0])
    sp.add_argument("--sigma21", type=_float_list, default=[0.0, 0.5, 1.0])
    sp.add_argument("--replications", type=int, default=10)
    sp.add_argument("--users", type=int, default=50)
    sp.add_argument("--T", type=float, default=500.0)
    sp.add_argument("--tau", type=parse_duration, default=3.0)
    sp.add_argument("--edge-prob", type=float, default=0.02)
    sp.add_argument("--w-max", type=float, default=1.0)
    sp.add_argument("--mu-max", type=float, default=0.2)
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--max-iter", type=int, default=50)
    sp.add_argument("--threads", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FitError, SingularSystemError, UnstableError, ImpossibleEventError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.DataError, ModelError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
