"""Command-line interface.

Exit codes: 0 success, 1 invalid input or usage, 2 failure while running
(including an oracle check that does not pass).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from bmclt import __version__
from bmclt.errors import ValidationError
from bmclt.estimators import mcmcse, parse_rule, variance_ci
from bmclt.harness import run_experiment, summarize
from bmclt import io as bio
from bmclt.lasso import ETA2_MODES, IG_MODES, lasso_chain
from bmclt.samplers import RngStream, ar1_chain, toy_chain


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bmclt", description="Batch means MCMC variance estimation.")
    p.add_argument("--version", action="version", version=f"bmclt {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate the MCMC variance of a trace")
    e.add_argument("trace", nargs="?", default="-", help="trace CSV, one value per line ('-' = stdin)")
    e.add_argument("--rule", default="sqrt", help="sqrt | pow:<e> | cbrt[:<delta>] | fixed:<b>")
    e.add_argument("--level", type=float, default=0.95)

    s = sub.add_parser("simulate", help="write a chain trace as CSV")
    s.add_argument("--model", choices=("toy", "ar1", "lasso"), default="toy")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--seed", type=int, default=None, help="base seed (default: $BMCLT_SEED or 0)")
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--init", type=float, default=None, help="initial x (default: N(0,1) draw)")
    s.add_argument("--rho", type=float, default=0.5)
    s.add_argument("--tau2", type=float, default=0.375)
    s.add_argument("--y", dest="y_path")
    s.add_argument("--x", dest="x_path")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--eta2-mode", choices=ETA2_MODES, default="blocked")
    s.add_argument("--ig-mode", choices=IG_MODES, default="standard")
    s.add_argument("--output", "-o", default="-")

    x = sub.add_parser("experiment", help="run a replicated experiment from a TOML config")
    x.add_argument("--config", required=True)
    x.add_argument("--output", "-o", default="bmclt-out")
    x.add_argument("--workers", type=int, default=None, help="override the config's worker count")

    o = sub.add_parser("oracle", help="run an analytic or Monte Carlo ground-truth check")
    o.add_argument("--check", required=True, choices=("toy-sigma2", "bias-bound", "moment-a2", "moment-a3"))
    o.add_argument("--b", type=int, default=4096)
    o.add_argument("--replicates", type=int, default=20000)
    o.add_argument("--seed", type=int, default=None)
    return p


def _cmd_estimate(args) -> int:
    rule = parse_rule(args.rule)
    with bio.seekable_path(args.trace) as path:
        est, var, n = bio.streaming_estimate(path, rule)
    ci = variance_ci(est, args.level)
    a = est.schedule.a_n
    extra = {
        "n": n,
        "values_used": est.schedule.used,
        "modified_sigma2_hat": est.sigma2_hat * (a - 1) / a,
        "mcmcse": mcmcse(est),
        "sample_variance": var,
        "ess": n * var / est.sigma2_hat if est.sigma2_hat > 0 else None,
    }
    doc = bio.estimate_document(est, args.level, ci, extra, seed=bio.default_seed())
    sys.stdout.write(bio.dumps(doc))
    return 0


def _cmd_simulate(args) -> int:
    seed = bio.default_seed() if args.seed is None else args.seed
    rng = RngStream(seed, args.stream).generator()
    if args.model == "lasso":
        if not (args.y_path and args.x_path and args.lam):
            raise ValidationError("lasso simulation needs --y, --x and --lambda")
        data = bio.read_lasso_csv(args.y_path, args.x_path, args.lam)
        values = lasso_chain(data, args.n, args.burn_in, rng, None, args.eta2_mode, args.ig_mode)
    else:
        init = float(rng.standard_normal()) if args.init is None else args.init
        if args.model == "toy":
            values = toy_chain(args.n, args.burn_in, init, rng)
        else:
            values = ar1_chain(args.rho, args.tau2, args.n, args.burn_in, init, rng)
    if args.output == "-":
        bio.write_trace_csv(values, sys.stdout)
    else:
        with open(args.output, "w") as fh:
            bio.write_trace_csv(values, fh)
    print(f"# bmclt {__version__} model={args.model} seed={seed} stream={args.stream}", file=sys.stderr)
    return 0


def _cmd_experiment(args) -> int:
    cfg = bio.load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
        cfg.validate()
    result = run_experiment(cfg)
    coverage, histograms = summarize(result)
    out = Path(args.output)
    (out / "histograms").mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(bio.dumps(bio.result_document(result, coverage, histograms)))
    (out / "run_info.json").write_text(
        json.dumps(
            {
                "version": __version__,
                "base_seed": cfg.base_seed,
                "workers": result.metadata["workers"],
                "wall_clock_seconds": result.metadata["wall_clock_seconds"],
            },
            indent=2,
        )
        + "\n"
    )
    with open(out / "coverage.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "rule", "coverage", "interval_count", "failed"])
        for r in coverage:
            w.writerow([r.n, r.rule, format(r.coverage, ".17g"), r.interval_count, r.failed])
    for key, h in histograms.items():
        name = key.replace("n=", "n").replace("|", "_").replace(":", "-")
        with open(out / "histograms" / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["left", "right", "count"])
            for lo, hi, c in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts):
                w.writerow([format(lo, ".17g"), format(hi, ".17g"), int(c)])
    print(f"bmclt {__version__}: {cfg.replicates} replicates, seed {cfg.base_seed} -> {out}")
    for r in coverage:
        print(f"  n={r.n:<8d} {r.rule:<10s} coverage={r.coverage:.3f} ({r.interval_count} intervals)")
    if result.failures:
        print(f"  {len(result.failures)} replicate(s) failed; see result.json", file=sys.stderr)
    return 0


def _cmd_oracle(args) -> int:
    from bmclt import oracles

    seed = bio.default_seed() if args.seed is None else args.seed
    if args.check == "toy-sigma2":
        res = oracles.sigma2_from_autocov(oracles.toy_model())
        ok = abs(res.value - oracles.TOY_SIGMA2) <= 1e-10
        print(f"{res.value:.12g}")
        print(
            f"sum {res.value:.17g}, tail bound {res.tail_bound:.3g} after {res.terms} terms: "
            f"{'PASS' if ok else 'FAIL'}"
        )
    elif args.check == "bias-bound":
        model = oracles.toy_model()
        grid = (2, 4, 8, 16, 32, 64)
        ok = True
        for a in grid:
            for b in grid:
                sb = abs(oracles.shifted_bias(model, oracles.grid_schedule(a, b)))
                hi = oracles.bias_upper_bound(a, b, model.lambda_bound, model.f0_norm2)
                lo = oracles.bias_lower_bound(a, b, model.gamma(2))
                cell = lo <= sb <= hi
                ok &= cell
                if not cell:
                    print(f"a={a} b={b}: {lo:.6g} <= {sb:.6g} <= {hi:.6g} violated")
        print(f"bias bounds on {len(grid) ** 2} grid points: {'PASS' if ok else 'FAIL'}")
    else:
        kind = "fourth" if args.check == "moment-a2" else "cross"
        chk = oracles.toy_moment_check(kind, args.b, args.replicates, seed)
        ok = chk.passed
        print(
            f"{args.check}: estimate {chk.estimate.mean:.6g} (se {chk.estimate.stderr:.3g}), "
            f"limit {chk.limit:.6g}, slack {chk.slack:.3g}, tolerance {chk.tolerance:.3g}: "
            f"{'PASS' if ok else 'FAIL'}"
        )
    return 0 if ok else 2


COMMANDS = {
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "experiment": _cmd_experiment,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ValueError, FileNotFoundError) as exc:
        print(f"bmclt {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"bmclt {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
