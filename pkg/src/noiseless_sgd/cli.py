"""Command-line entry point.

Exit codes: 0 success, 1 a theory check failed, 2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiments as ex
from . import tracefile
from .gossip import GraphError
from .rate_lab import report_dict
from .sgd_engine import DivergenceError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
SEED_ENV = "NOISELESS_SGD_SEED"


def _common(p, default_out):
    p.add_argument("--iters", type=int, required=True, help="number of SGD / averaging steps")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help=f"64-bit seed; ${SEED_ENV} overrides it")
    p.add_argument("--per-decade", type=int, default=20, help="log-spaced checkpoints per decade")
    p.add_argument("--jobs", type=int, default=1, help="replicates run concurrently")
    p.add_argument("--out", default=default_out, help="trace CSV path")
    p.add_argument("--report", default=None, help="report JSON path (default: <out>.report.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noiseless-sgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gaussian", help="SGD on a power-law Gaussian least-squares problem")
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--beta-spec", type=float, required=True, help="eigenvalue decay: lambda_i = i^-beta")
    g.add_argument("--delta", type=float, required=True, help="optimum decay: theta*_i = i^-delta")
    g.add_argument("--noise-std", type=float, default=0.0, help="standard deviation of additive output noise")
    g.add_argument("--gamma", type=float, default=None, help="step size (default 1/R0)")
    g.add_argument("--betas", type=float, nargs="*", default=[], help="powers at which phi_n(beta) is traced")
    _common(g, "gaussian_trace.csv")

    s = sub.add_parser("sobolev", help="kernel SGD interpolation on the torus")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--r", type=float, required=True, help="target smoothness")
    s.add_argument("--s", type=float, required=True, help="kernel smoothness")
    s.add_argument("--K", type=int, required=True, help="frequency cutoff")
    s.add_argument("--eps", type=float, default=0.05, help="target smoothness margin")
    s.add_argument("--gamma", type=float, default=None, help="step size (default 1/t(0))")
    _common(s, "sobolev_trace.csv")

    q = sub.add_parser("gossip", help="averaging process on a graph")
    graph = q.add_mutually_exclusive_group(required=True)
    graph.add_argument("--torus", type=int, nargs=2, metavar=("D", "SIDE"))
    graph.add_argument("--edges", help="edge list file with a '# vertices N' header")
    q.add_argument("--spectral-dim", type=float, default=None, help="d for envelopes and predicted exponents")
    q.add_argument("--v-star", type=int, default=0, help="vertex holding the initial unit mass")
    _common(q, "gossip_trace.csv")

    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--only", nargs="+", default=None, metavar="CHECK")
    v.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("rerun", help="re-run the experiment recorded in a trace header")
    r.add_argument("trace")
    r.add_argument("--out", required=True)
    r.add_argument("--report", default=None)
    r.add_argument("--jobs", type=int, default=1)
    return parser


def _seed(args):
    env = os.environ.get(SEED_ENV)
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise ex.ConfigError("seed", f"${SEED_ENV}={env!r} is not an integer") from None
    return args.seed


def config_from_args(args):
    seed = _seed(args)
    if args.cmd == "gaussian":
        return ex.GaussianConfig(
            dim=args.dim,
            beta_spec=args.beta_spec,
            delta=args.delta,
            iters=args.iters,
            noise_std=args.noise_std,
            gamma=args.gamma,
            replicates=args.replicates,
            seed=seed,
            betas=tuple(args.betas),
            per_decade=args.per_decade,
        ).validate()
    if args.cmd == "sobolev":
        return ex.SobolevConfig(
            d=args.d,
            r=args.r,
            s=args.s,
            K=args.K,
            iters=args.iters,
            eps=args.eps,
            gamma=args.gamma,
            replicates=args.replicates,
            seed=seed,
            per_decade=args.per_decade,
        ).validate()
    return ex.GossipConfig(
        iters=args.iters,
        torus=tuple(args.torus) if args.torus else None,
        edges=args.edges,
        spectral_dim=args.spectral_dim,
        v_star=args.v_star,
        replicates=args.replicates,
        seed=seed,
        per_decade=args.per_decade,
    ).validate()


def execute(cfg, out, report_path=None, jobs=1, echo=print) -> int:
    result = ex.run(cfg, jobs)
    header = tracefile.make_header(ex.config_to_dict(cfg))
    text = tracefile.render(header, result.mean, result.extra_columns)
    report = {"kind": cfg.kind, "reports": report_dict(result.reports), "extras": result.extras}
    report_path = report_path or out + ".report.json"
    tracefile.atomic_write(out, text)
    tracefile.atomic_write(report_path, json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    for rep in result.reports:
        echo(rep.line())
    if not result.reports:
        echo("no exponent verdict for this configuration")
    echo(json.dumps(result.extras, sort_keys=True, default=float))
    echo(f"trace written to {out}; report to {report_path}")
    return EXIT_OK if result.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "verify":
            from .verify import run_checks

            try:
                results = run_checks(args.only, _seed(args), echo=print)
            except KeyError as exc:
                print(f"error: {exc.args[0]}", file=sys.stderr)
                return EXIT_USAGE
            return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL
        if args.cmd == "rerun":
            header, _, _ = tracefile.read(args.trace)
            cfg = ex.config_from_dict(header["config"])
            return execute(cfg, args.out, args.report, args.jobs)
        cfg = config_from_args(args)
        if args.jobs < 1:
            raise ex.ConfigError("jobs", "must be >= 1")
        return execute(cfg, args.out, args.report, args.jobs)
    except (ex.ConfigError, GraphError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"runtime error: {exc} (step {exc.step})", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
