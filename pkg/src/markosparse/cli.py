"""Command-line front end.

Subcommands: train, sweep-k, analyze-chain, hitting-time, optimal-k,
reproduce-appendix-b, bench-kernels. Exit codes: 0 success, 2 configuration
or argument error, 3 divergence during training, 4 numerical or structural
failure (non-convergence, non-ergodic chain, state space too large).
"""

import argparse
import sys
from dataclasses import replace

from . import bench, chain_analysis as chains, harness, kernels
from .compressors import BANLAST, KAWASAKI, RAND, SPARSIFYING_KINDS
from .errors import (ConfigError, DivergenceError, InvalidArgumentError,
                     NonErgodicError, NumericalError, ParseError, TooLargeError)


def _parse_k_list(text):
    values = []
    for seg in text.split(","):
        seg = seg.strip()
        if not seg:
            continue
        if "-" in seg[1:]:
            lo, _, hi = seg.partition("-")
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(seg))
    if not values:
        raise InvalidArgumentError(f"no K values in {text!r}")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="markosparse",
        description="Markov-chain coordinate sparsifiers for distributed training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="override the CSV output path")

    p = sub.add_parser("sweep-k", help="one run per history size K")
    p.add_argument("--config", required=True)
    p.add_argument("--k", required=True, help="comma list and/or ranges, e.g. 0,1,4-8")

    p = sub.add_parser("analyze-chain", help="exact stationary/mixing analysis")
    p.add_argument("--kind", required=True, choices=SPARSIFYING_KINDS)
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--b", type=float, default=50.0)
    p.add_argument("--activation", default="normalize")
    p.add_argument("--eps", type=float, default=0.05, help="mixing-time accuracy")
    p.add_argument("--t-max", type=int, default=200, dest="t_max")
    p.add_argument("--output", help="write the deviation curve as CSV")

    p = sub.add_parser("hitting-time", help="formulas and Monte-Carlo estimate")
    p.add_argument("--kind", default=BANLAST, choices=SPARSIFYING_KINDS)
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--b", type=float, default=50.0)
    p.add_argument("--activation", default="normalize")
    p.add_argument("--target", type=int, default=0)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("optimal-k", help="history size minimizing the hitting bound")
    p.add_argument("--alpha", type=float, help="d/m ratio")
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--k-max", type=int, dest="k_max")

    p = sub.add_parser("reproduce-appendix-b",
                       help="alpha-grid table of optimal K and hitting times")
    p.add_argument("--output", help="CSV path")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=2024)

    p = sub.add_parser("bench-kernels", help="compiled vs interpreted kernel timing")
    p.add_argument("--kind", default=BANLAST, choices=SPARSIFYING_KINDS)
    p.add_argument("--activation", default="normalize")
    p.add_argument("--d", type=int, default=500)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--b", type=float, default=50.0)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_train(args):
    cfg = harness.load_config(args.config)
    if args.output:
        cfg = replace(cfg, output=args.output)
    harness.run_experiment(cfg)
    return 0


def _cmd_sweep_k(args):
    cfg = harness.load_config(args.config)
    harness.sweep_k(cfg, _parse_k_list(args.k))
    return 0


def _cmd_analyze_chain(args):
    chain = chains.build_transition_matrix(
        args.kind, args.d, args.m, args.K, b=args.b, activation=args.activation)
    result = chains.stationary_distribution(chain)
    pi_class = result.pi[result.recurrent]
    marginal = chains.newest_mask_marginal(chain, result.pi)
    tau = chains.mixing_time(chain, args.eps)
    print(f"states: {chain.n_states}")
    print(f"recurrent class: {len(result.recurrent)} states "
          f"({result.n_unreachable} unreachable)")
    print(f"stationary range: [{pi_class.min():.10f}, {pi_class.max():.10f}] "
          f"(uniform would be {1 / len(result.recurrent):.10f})")
    print(f"newest-mask marginal range: [{marginal.min():.10f}, {marginal.max():.10f}] "
          f"(m/d = {args.m / args.d:.10f})")
    print(f"mixing time (eps={args.eps:g}): {tau}")
    bound = None
    try:
        if args.kind == BANLAST:
            bound = chains.rho_bound_banlast(args.d, args.m, args.K)
        elif args.kind == KAWASAKI and args.activation == "normalize":
            bound = chains.rho_bound_kawasaki_normalize(args.d, args.m, args.K, args.b)
    except InvalidArgumentError as err:
        print(f"ergodicity bound: not applicable ({err})")
    if bound is not None:
        print(f"ergodicity bound: rho={bound.rho:.10f} C={bound.C:.10f}")
    if args.output:
        devs = chains.deviation_curve(chain, args.t_max, stationary=result)
        lines = ["t,deviation" + (",bound" if bound else "")]
        for t in range(args.t_max + 1):
            row = f"{t},{devs[t]!r}"
            if bound:
                row += f",{bound.C * bound.rho ** t!r}"
            lines.append(row)
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


def _cmd_hitting_time(args):
    alpha = args.d / args.m
    print(f"alpha = d/m = {alpha:g}")
    print(f"rand expected hitting time: {chains.expected_hitting_time_randm(alpha)!r}")
    if args.kind == BANLAST:
        try:
            print(f"banlast closed-form estimate: "
                  f"{chains.expected_hitting_time_banlast(alpha, args.K)!r}")
            print(f"banlast exact process mean:  "
                  f"{chains.banlast_hitting_time_exact(alpha, args.K)!r}")
        except InvalidArgumentError as err:
            print(f"banlast formulas: not applicable ({err})")
    mean, stderr = chains.monte_carlo_hitting_time(
        args.kind, args.d, m=args.m, K=args.K, b=args.b,
        activation=args.activation, target=args.target,
        trials=args.trials, seed=args.seed)
    print(f"monte carlo ({args.trials} trials): {mean!r} +/- {stderr:.6f}")
    return 0


def _cmd_optimal_k(args):
    if args.alpha is None and args.d is None:
        raise InvalidArgumentError("give --alpha or --d/--m")
    alpha = args.alpha if args.alpha is not None else args.d / args.m
    k_star = chains.optimal_history_size(alpha, K_max=args.k_max)
    print(f"alpha: {alpha:g}")
    print(f"optimal K: {k_star}")
    print(f"hitting estimate at K*: {chains.expected_hitting_time_banlast(alpha, k_star)!r}")
    print(f"rand baseline: {chains.expected_hitting_time_randm(alpha)!r}")
    return 0


def _cmd_reproduce(args):
    harness.reproduce_hitting_table(trials=args.trials, seed=args.seed,
                                    output=args.output)
    return 0


def _cmd_bench(args):
    report = bench.benchmark(
        kind={"rand": kernels.KIND_RAND, "banlast": kernels.KIND_BANLAST,
              "kawasaki": kernels.KIND_KAWASAKI}[args.kind],
        activation=kernels.ACTIVATION_IDS[args.activation],
        d=args.d, m=args.m, K=args.K, b=args.b,
        steps=args.steps, repeats=args.repeats, seed=args.seed)
    print(bench.format_report(report))
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "sweep-k": _cmd_sweep_k,
    "analyze-chain": _cmd_analyze_chain,
    "hitting-time": _cmd_hitting_time,
    "optimal-k": _cmd_optimal_k,
    "reproduce-appendix-b": _cmd_reproduce,
    "bench-kernels": _cmd_bench,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except (ConfigError, ParseError, InvalidArgumentError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return 3
    except (NumericalError, NonErgodicError, TooLargeError) as err:
        print(f"failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
