"""Command-line front end: ``complete``, ``synth``, ``bench`` and ``select-rank``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .blocks import DEFAULT_BLOCK_SIZE, complete_blocked
from .completion import complete_with_features, mape, run_pipeline, select_rank
from .data import generate_synthetic
from .descent import ITERATE_CHOICES, DescentConfig
from .errors import InputError, NumericalError, ParameterError
from .objective import EngineOptions

EXIT_OK, EXIT_INPUT, EXIT_PARAM, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_ELEMENT_CAP = 50_000_000
GRID_FIELDS = ("n", "m", "p", "k", "mu")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_solver_flags(ap):
    ap.add_argument("--gamma", type=float, default=1e6)
    ap.add_argument("--theta", type=float, default=math.pi / 64, help="rotation angle (radians)")
    ap.add_argument("--steps", type=int, default=50, help="t_max (the run makes t_max - 1 updates)")
    ap.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
    ap.add_argument("--patience", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: available CPUs)")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--deterministic", dest="deterministic", action="store_true", default=True,
                      help="fixed reduction order (default)")
    mode.add_argument("--fast", dest="deterministic", action="store_false",
                      help="reduce in completion order")
    ap.add_argument("--transpose", choices=("auto", "yes", "no"), default="auto",
                    help="identity mode: solve on the transpose (auto: when rows < cols)")
    ap.add_argument("--iterate", choices=ITERATE_CHOICES, default="auto",
                    help="fill from the last iterate, the lowest sampled objective, or "
                         "whichever of the two is lower on all entries (auto)")
    ap.add_argument("--full-gradient", action="store_true",
                    help="disable row/column subsampling")


def build_parser():
    ap = argparse.ArgumentParser(prog="sphereimpute",
                                 description="Rank-k matrix completion by sphere descent.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("complete", help="complete an observed matrix")
    c.add_argument("--matrix", required=True, help="observed entries (MatrixMarket coordinate)")
    c.add_argument("--features", help="p x m feature CSV; omit for the blocked identity mode")
    c.add_argument("--output", required=True, help="output directory")
    c.add_argument("--requests", help="CSV of 1-based row,col pairs to predict instead of a dense fill")
    c.add_argument("--rank", type=int, required=True)
    c.add_argument("--verbose", action="store_true", help="one log line per descent step")
    _add_solver_flags(c)

    s = sub.add_parser("synth", help="generate a synthetic instance")
    s.add_argument("--output", required=True, help="output directory")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--m", type=_positive_int, required=True)
    s.add_argument("--p", type=_positive_int, default=None, help="omit for identity features")
    s.add_argument("--rank", type=_positive_int, required=True)
    s.add_argument("--mu", type=float, required=True, help="fraction of entries hidden")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--element-cap", type=int, default=DEFAULT_ELEMENT_CAP)

    b = sub.add_parser("bench", help="timing and accuracy over a grid of synthetic instances")
    b.add_argument("--grid", required=True,
                   help="CSV with header n,m,p,k,mu (empty p means identity features)")
    b.add_argument("--reps", type=_positive_int, default=10)
    b.add_argument("--output", help="CSV path (default: stdout)")
    b.add_argument("--element-cap", type=int, default=DEFAULT_ELEMENT_CAP,
                   help="refuse grid rows with n*m above this")
    _add_solver_flags(b)

    r = sub.add_parser("select-rank", help="choose k by holdout error")
    r.add_argument("--matrix", required=True)
    r.add_argument("--features")
    r.add_argument("--ranks", required=True, help="comma-separated candidate ranks")
    r.add_argument("--holdout", type=float, default=0.2)
    r.add_argument("--output", help="JSON path (default: stdout)")
    _add_solver_flags(r)
    return ap


def _config(args) -> DescentConfig:
    return DescentConfig(theta=args.theta, t_max=args.steps, gamma=args.gamma,
                         patience=args.patience, iterate=args.iterate)


def _options(args) -> EngineOptions:
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    return EngineOptions(threads=threads, deterministic=args.deterministic)


def _transpose(args):
    return {"auto": None, "yes": True, "no": False}[args.transpose]


def _run_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return json.loads(json.dumps(cfg, default=str))


def cmd_complete(args) -> int:
    config, options = _config(args), _options(args)
    obs = io.read_observed(args.matrix)
    features = None
    if args.features:
        features = io.read_features(args.features, n_cols=obs.n_cols)
    requests = io.read_requests(args.requests, obs.shape) if args.requests else None
    log = None
    if args.verbose:
        def log(step):
            print(f"t={step.t} eta={step.eta:.6e} m_t={step.m_t} n_t={step.n_t} "
                  f"ms={step.wall_ms:.1f}", file=sys.stderr)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stochastic = not args.full_gradient
    if features is not None:
        report = complete_with_features(obs, features, args.rank, config, seed=args.seed,
                                        stochastic=stochastic, options=options,
                                        dense_output=requests is None, log=log)
    else:
        # Blocked mode logs nothing per step; trace.csv carries every block's trace.
        report = complete_blocked(obs, args.rank, config, args.block_size, seed=args.seed,
                                  transpose=_transpose(args), options=options,
                                  dense_output=requests is None, stochastic=stochastic)
    if requests is None:
        io.write_dense(out / "filled.mtx", report.filled)
    else:
        io.write_predictions(out / "predictions.csv", *requests, report.predict(*requests))
    io.write_trace(out / "trace.csv", report.traces)
    summary = report.to_dict()
    summary["mode"] = "features" if features is not None else "blocked"
    summary["config"] = _run_config(args)
    summary["seed"] = args.seed
    (out / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"completed {obs.n_rows} x {obs.n_cols} at rank {args.rank}; "
          f"train MAPE {summary['mape_train']}; wrote {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.n * args.m > args.element_cap:
        raise ParameterError(f"n*m = {args.n * args.m} exceeds the element cap {args.element_cap}")
    inst = generate_synthetic(args.n, args.m, args.p if args.p else args.m, args.rank, args.mu,
                              args.seed, side_info=args.p is not None)
    io.save_instance(args.output, inst)
    print(f"wrote {args.output}: {inst.observed.omega_size} observed of {args.n * args.m}")
    return EXIT_OK


def read_grid(path):
    """Rows of ``(n, m, p or None, k, mu)`` from a grid CSV."""
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(GRID_FIELDS) - set(reader.fieldnames or [])
            if missing:
                raise InputError(f"grid header lacks {sorted(missing)}", path, 1)
            for lineno, rec in enumerate(reader, start=2):
                try:
                    p = rec["p"].strip()
                    rows.append((int(float(rec["n"])), int(float(rec["m"])),
                                 int(float(p)) if p and p != "-" else None,
                                 int(rec["k"]), float(rec["mu"])))
                except (TypeError, ValueError):
                    raise InputError("grid row must be numeric n,m,p,k,mu", path, lineno) from None
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror}", path) from exc
    return rows


def bench(grid, reps, config=None, seed=0, block_size=DEFAULT_BLOCK_SIZE, options=None,
          element_cap=DEFAULT_ELEMENT_CAP, stochastic=True, transpose=None):
    """Mean wall time and mean MAPE per grid row; rep ``r`` uses seed ``seed + r``."""
    out = []
    for n, m, p, k, mu in grid:
        if n * m > element_cap:
            raise ParameterError(f"grid row ({n}, {m}) has n*m = {n * m} above the element cap "
                                 f"{element_cap}")
        times, errors = [], []
        for r in range(reps):
            inst = generate_synthetic(n, m, p if p else m, k, mu, seed + r, side_info=p is not None)
            features = inst.features if p is not None else None
            t0 = time.perf_counter()
            report = run_pipeline(inst.observed, k, features, config, seed=seed + r,
                                  block_size=block_size, options=options, stochastic=stochastic,
                                  transpose=transpose)
            times.append(time.perf_counter() - t0)
            errors.append(mape(report.filled, inst.truth))
        out.append(dict(n=n, m=m, p="" if p is None else p, k=k, mu=mu, reps=reps,
                        mode="features" if p is not None else "identity",
                        mean_time_s=float(np.mean(times)), mean_mape=float(np.mean(errors))))
    return out


def cmd_bench(args) -> int:
    grid = read_grid(args.grid)
    rows = bench(grid, args.reps, _config(args), args.seed, args.block_size, _options(args),
                 args.element_cap, not args.full_gradient, _transpose(args))
    fields = ["n", "m", "p", "k", "mu", "mode", "reps", "mean_time_s", "mean_mape"]
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "mean_time_s": f"{row['mean_time_s']:.4f}",
                        "mean_mape": f"{row['mean_mape']:.6g}"})
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def cmd_select_rank(args) -> int:
    try:
        ks = [int(x) for x in args.ranks.split(",") if x.strip()]
    except ValueError:
        raise ParameterError(f"--ranks must be a comma list of integers, got {args.ranks!r}") from None
    obs = io.read_observed(args.matrix)
    features = io.read_features(args.features, n_cols=obs.n_cols) if args.features else None
    sel = select_rank(obs, features, ks, _config(args), seed=args.seed,
                      holdout_fraction=args.holdout, block_size=args.block_size,
                      options=_options(args))
    doc = dict(k_best=sel.k_best, holdout_mape={str(k): v for k, v in sel.table.items()},
               failures={str(k): v for k, v in sel.failures.items()},
               config=_run_config(args), seed=args.seed)
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"complete": cmd_complete, "synth": cmd_synth, "bench": cmd_bench,
            "select-rank": cmd_select_rank}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
