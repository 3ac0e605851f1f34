"""Command line surface for the pipeline.

Subcommands: simulate, pcf, fit, cv, summarize, study.  All data outputs are
deterministic given the seeds (timing fields excluded).  Exit codes: 0 on
success, 1 on input error, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .design import build_design, noiseless_design
from .model import ModelParams, Window, UNIT_SQUARE
from .optimizer import FitConfig, default_init, fit_path
from .patterns import read_pattern_csv, write_pattern_csv
from .pcf import (
    default_bandwidth,
    default_lag_grid,
    default_weights,
    estimate_pcf,
    read_pcf_csv,
    write_pcf_csv,
)
from .selection import (
    default_lambda_grid,
    default_q_grid,
    evaluate_cv_grid,
    one_se_threshold,
    select_min,
    select_one_se,
)
from .simulate import make_scenario, sample_mlgcp, scenario_p5, scenario_p10
from .study import child_seed, run_study
from .summarize import summarize_params

__all__ = ["main", "InputError", "NumericalError"]


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage errors are input errors
        raise InputError(message)


def _parse_window(text) -> Window:
    if text is None:
        return UNIT_SQUARE
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4:
        raise InputError("window must be xmin,xmax,ymin,ymax")
    return Window(*vals)


def _parse_floats(text):
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _parse_ints(text):
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _parse_lags(text, window):
    if text is None:
        return default_lag_grid(window)
    vals = text.split(",")
    if len(vals) != 3:
        raise InputError("lags must be tmin,tmax,L")
    tmin, tmax, L = float(vals[0]), float(vals[1]), int(vals[2])
    return np.linspace(tmin, tmax, L)


def _parse_lambda_grid(text):
    if text in (None, "default"):
        return default_lambda_grid()
    return np.asarray(_parse_floats(text), dtype=float)


def _fit_config(args) -> FitConfig:
    cfg = FitConfig()
    if getattr(args, "rel_tol", None) is not None:
        cfg.rel_tol = args.rel_tol
    if getattr(args, "max_iters", None) is not None:
        cfg.max_outer_iters = args.max_iters
    return cfg


def _scenario_from_args(args):
    if args.scenario == "p5":
        sc = scenario_p5(resolution=args.resolution, target=args.target)
    elif args.scenario == "p10":
        sc = scenario_p10(resolution=args.resolution, target=args.target)
    elif args.params:
        params = ModelParams.from_json(args.params)
        sc = make_scenario(
            params,
            args.target,
            _parse_window(args.window),
            resolution=args.resolution,
        )
    else:
        raise InputError("pass --scenario p5|p10 or --params FILE")
    return sc


def cmd_simulate(args) -> int:
    sc = _scenario_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "scenario": sc.name,
        "seed": args.seed,
        "replicates": args.replicates,
        "resolution": sc.resolution,
        "window": [sc.window.xmin, sc.window.xmax, sc.window.ymin, sc.window.ymax],
        "trend": sc.trend.tolist(),
        "expected_counts": sc.expected_counts.tolist(),
        "params": sc.params.to_dict(),
    }
    with open(out_dir / "scenario.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    for r in range(args.replicates):
        pattern, capped = sample_mlgcp(sc.with_seed(child_seed(args.seed, r, 0)))
        if capped:
            print(f"replicate {r}: {capped} cells hit the intensity cap", file=sys.stderr)
        write_pattern_csv(out_dir / f"pattern_{r + 1:04d}.csv", pattern)
    return 0


def _load_blocks(args):
    """Design blocks from --pattern (estimating pcfs) or a --pcf file."""
    window = _parse_window(getattr(args, "window", None))
    if getattr(args, "pattern", None):
        pattern = read_pattern_csv(args.pattern, window)
        est = estimate_pcf(
            pattern,
            lags=_parse_lags(getattr(args, "lags", None), window),
            bandwidth=getattr(args, "bandwidth", None) or default_bandwidth(window),
            backend=getattr(args, "backend", None),
        )
        weights = default_weights(est)
    elif getattr(args, "pcf", None):
        est, weights = read_pcf_csv(args.pcf)
    else:
        raise InputError("pass --pattern or --pcf")
    return build_design(est, weights), window


def cmd_pcf(args) -> int:
    window = _parse_window(args.window)
    pattern = read_pattern_csv(args.pattern, window)
    est = estimate_pcf(
        pattern,
        lags=_parse_lags(args.lags, window),
        bandwidth=args.bandwidth or default_bandwidth(window),
        backend=args.backend,
    )
    write_pcf_csv(args.out, est, default_weights(est))
    if est.skipped_pairs:
        print(f"skipped {est.skipped_pairs} zero-overlap pairs", file=sys.stderr)
    return 0


def _write_fit_log(path, result):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "block", "Q", "Q_lambda", "step"])
        for row in result.log:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4])])


def cmd_fit(args) -> int:
    lambdas = _parse_floats(args.lam)
    if sorted(lambdas) != lambdas:
        raise InputError("--lambda values must be ascending")
    config = _fit_config(args)
    if args.synthetic_design:
        truth = ModelParams.from_json(args.synthetic_design)
        window = _parse_window(args.window)
        blocks = noiseless_design(truth, default_lag_grid(window))
    else:
        blocks, window = _load_blocks(args)
    init = default_init(blocks.p, args.q, window, seed=args.seed)
    results = fit_path(blocks, init, lambdas, args.xi, config, keep_log=bool(args.log))
    out = Path(args.out)
    for s, res in enumerate(results):
        path = out if len(results) == 1 else out.with_name(f"{out.stem}_s{s}{out.suffix}")
        res.params.to_json(path)
        if args.log:
            logp = Path(args.log)
            _write_fit_log(
                logp if len(results) == 1 else logp.with_name(f"{logp.stem}_s{s}{logp.suffix}"),
                res,
            )
        if not res.converged:
            print(f"lambda={res.lam}: not converged in {res.n_iter} passes", file=sys.stderr)
    return 0


def cmd_cv(args) -> int:
    blocks, window = _load_blocks(args)
    q_values = _parse_ints(args.q_grid) if args.q_grid else default_q_grid(blocks.p)
    lambdas = _parse_lambda_grid(args.lambda_grid)
    xis = _parse_floats(args.xi)
    config = _fit_config(args)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)

    selections = {}
    with open(f"{prefix}_surface.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi", "q", "lambda", "cv", "se", "q_eff", "converged_folds"])
        for xi in xis:
            grid = evaluate_cv_grid(
                blocks,
                q_values,
                lambdas,
                xi=xi,
                K=args.K,
                block_length=args.block_length,
                seed=args.seed,
                config=config,
                workers=args.workers,
            )
            K = grid.K
            for qi, q in enumerate(grid.q_values):
                for mi, lam in enumerate(grid.lambdas):
                    cs = grid.fold_scores[qi, mi]
                    se = float(np.sqrt(np.sum((cs - cs.mean()) ** 2) / ((K - 1) * K)))
                    writer.writerow(
                        [
                            xi,
                            q,
                            repr(float(lam)),
                            repr(float(grid.scores[qi, mi])),
                            repr(se),
                            int(grid.qeff[qi, mi]),
                            int(grid.converged_folds[qi, mi]),
                        ]
                    )
            picks = {}
            for rule, fn in (("min", select_min), ("one_se", select_one_se)):
                lam, q, qi, mi = fn(grid)
                picks[rule] = {
                    "lambda": lam,
                    "q": q,
                    "cv": float(grid.scores[qi, mi]),
                    "q_eff": int(grid.qeff[qi, mi]),
                }
                grid.full_params[(qi, mi)].to_json(f"{prefix}_params_xi{xi}_{rule}.json")
            picks["one_se_threshold"] = one_se_threshold(grid)[0]
            selections[str(xi)] = picks
    with open(f"{prefix}_selection.json", "w") as fh:
        json.dump({"q_grid": q_values, "lambdas": list(map(float, lambdas)), "selections": selections}, fh, indent=2)
    return 0


def cmd_summarize(args) -> int:
    params = ModelParams.from_json(args.params)
    bundle = summarize_params(params, lags=_parse_floats(args.lags))
    with open(args.out, "w") as fh:
        json.dump(bundle, fh, indent=2)
    return 0


def cmd_study(args) -> int:
    sc = _scenario_from_args(args)
    config = _fit_config(args)
    kwargs = dict(
        mode=args.select,
        xi=args.xi,
        K=args.K,
        block_length=args.block_length,
        config=config,
        baseline=args.baseline,
        use_truth=args.use_truth,
    )
    if args.select == "fixed":
        kwargs.update(q=args.q, lam=_parse_floats(args.lam)[0])
    else:
        kwargs.update(
            q_grid=_parse_ints(args.q_grid) if args.q_grid else default_q_grid(sc.params.p),
            lambdas=_parse_lambda_grid(args.lambda_grid),
        )
    report = run_study(
        sc,
        args.replicates,
        master_seed=args.seed,
        workers=args.workers,
        **kwargs,
    )
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps({k: v for k, v in report.items() if k != "rows"}, indent=2))
    return 0


def _add_common_fit_flags(sp):
    sp.add_argument("--rel-tol", type=float, default=None)
    sp.add_argument("--max-iters", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="mlgcp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw synthetic patterns")
    sp.add_argument("--scenario", choices=["p5", "p10"], default=None)
    sp.add_argument("--params", default=None, help="truth params JSON")
    sp.add_argument("--target", type=float, default=1000.0)
    sp.add_argument("--window", default=None)
    sp.add_argument("--replicates", type=int, default=1)
    sp.add_argument("--resolution", type=int, default=256)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("pcf", help="estimate cross pair correlations")
    sp.add_argument("--pattern", required=True)
    sp.add_argument("--window", default=None)
    sp.add_argument("--lags", default=None)
    sp.add_argument("--bandwidth", type=float, default=None)
    sp.add_argument("--backend", choices=["auto", "compiled", "numpy"], default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_pcf)

    sp = sub.add_parser("fit", help="fit the factor model")
    sp.add_argument("--pattern", default=None)
    sp.add_argument("--pcf", default=None)
    sp.add_argument("--synthetic-design", default=None, help="truth params JSON (noiseless design test hook)")
    sp.add_argument("--window", default=None)
    sp.add_argument("--lags", default=None)
    sp.add_argument("--bandwidth", type=float, default=None)
    sp.add_argument("--backend", choices=["auto", "compiled", "numpy"], default=None)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--lambda", dest="lam", default="0")
    sp.add_argument("--xi", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log", default=None)
    _add_common_fit_flags(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="two-dimensional cross-validation over (q, lambda)")
    sp.add_argument("--pattern", default=None)
    sp.add_argument("--pcf", default=None)
    sp.add_argument("--window", default=None)
    sp.add_argument("--lags", default=None)
    sp.add_argument("--bandwidth", type=float, default=None)
    sp.add_argument("--backend", choices=["auto", "compiled", "numpy"], default=None)
    sp.add_argument("--q-grid", default=None)
    sp.add_argument("--lambda-grid", default=None)
    sp.add_argument("--xi", default="1")
    sp.add_argument("--K", type=int, default=8)
    sp.add_argument("--block-length", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out-prefix", required=True)
    _add_common_fit_flags(sp)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("summarize", help="derived summaries of a params file")
    sp.add_argument("--params", required=True)
    sp.add_argument("--lags", default="0")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("study", help="replicated simulation study with RMSE report")
    sp.add_argument("--scenario", choices=["p5", "p10"], default=None)
    sp.add_argument("--params", default=None)
    sp.add_argument("--target", type=float, default=1000.0)
    sp.add_argument("--window", default=None)
    sp.add_argument("--replicates", type=int, default=1)
    sp.add_argument("--resolution", type=int, default=256)
    sp.add_argument("--select", choices=["fixed", "min", "1se"], default="fixed")
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--lambda", dest="lam", default="0")
    sp.add_argument("--q-grid", default=None)
    sp.add_argument("--lambda-grid", default=None)
    sp.add_argument("--xi", type=float, default=1.0)
    sp.add_argument("--K", type=int, default=8)
    sp.add_argument("--block-length", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--baseline", action="store_true", help="also run the joint BFGS baseline")
    sp.add_argument("--use-truth", action="store_true", help="test hook: report the true params")
    sp.add_argument("--out", required=True)
    _add_common_fit_flags(sp)
    sp.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ZeroDivisionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
