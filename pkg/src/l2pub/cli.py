"""Command-line entry point.

Commands: ``simulate``, ``compare``, ``thresholds``, ``interval``,
``ingest``, ``oracle``, ``check-subadd``. Every command is deterministic
given its config and seed; rerunning overwrites outputs byte-identically.
Exit codes: 0 success, 1 invalid config or failed verification, 2 I/O
failure. Numeric CSV output uses full round-trip decimal formatting so
downstream consumers lose no precision.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import POLICY_KINDS, build_delay, build_policy, load_run_config
from .costs import PublishingCostParams, LinearDelay
from .errors import ConfigError, StateSpaceError
from .oracle import (
    FullMdpConfig,
    LatticePriceProcess,
    ModifiedMdpConfig,
    ThresholdStructureConfig,
    evaluate_modified_policy,
    greedy_decider,
    interval_decider,
    modified_matches_full,
    solve_modified_mdp,
    verify_all_or_nothing,
    verify_fifo,
    verify_threshold_structure,
)
from .policies import (
    MartingaleThreshold,
    OneStepThreshold,
    RollupNumericThreshold,
    RollupParams,
    interval_objective,
    optimal_interval,
)
from .prices import IngestError, fit_factors, ingest_trace, load_fee_rows
from .simulate import compare, monte_carlo, run_episode


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; these are validation errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _fmt(x: float) -> str:
    return repr(float(x))


# --- simulate -------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, episodes=args.episodes)
    if cfg.default_policy is None:
        raise ConfigError("config needs a 'policy' descriptor for simulate")
    policy = build_policy(cfg.default_policy, cfg.sim)
    out = Path(args.out)

    lines = ["episode,total_cost,max_wait\n"]
    if cfg.episodes >= 2:
        summary = monte_carlo(policy, cfg.sim, cfg.episodes)
        for e in range(summary.episodes):
            lines.append(
                f"{e},{_fmt(summary.total_costs[e])},{int(summary.max_waits[e])}\n"
            )
        mean_cost = summary.mean_cost
        std_err = summary.std_err
        mean_max_wait = summary.mean_max_wait
        wait_hist = summary.wait_histogram
        pending = summary.pending_total
        max_step = summary.max_step_cost
    else:
        res = run_episode(policy, cfg.sim)
        lines.append(f"0,{_fmt(res.total_discounted_cost)},{res.max_wait}\n")
        mean_cost = res.total_discounted_cost
        std_err = 0.0
        mean_max_wait = float(res.max_wait)
        wait_hist = res.wait_histogram
        pending = res.pending_count
        max_step = max((r.publish_cost + r.delay_cost) for r in res.records)
    _write(out / "episodes.csv", "".join(lines))

    g, T = cfg.sim.gamma, cfg.sim.horizon
    tail_bound = max_step * g**T / (1.0 - g)
    report = [
        "l2pub simulation summary",
        "========================",
        f"policy: {json.dumps(cfg.default_policy, sort_keys=True)}",
        f"gamma: {_fmt(g)}",
        f"horizon: {T}",
        f"episodes: {cfg.episodes}",
        f"seed: {cfg.sim.seed}",
        f"mean_total_discounted_cost: {_fmt(mean_cost)}",
        f"std_err: {_fmt(std_err)}",
        f"mean_max_wait: {_fmt(mean_max_wait)}",
        f"pending_items_total: {pending}",
        f"truncation_tail_bound: {_fmt(tail_bound)}",
        "wait_histogram (wait,count):",
    ]
    report += [f"  {w},{c}" for w, c in sorted(wait_hist.items())]
    _write(out / "summary.txt", "\n".join(report) + "\n")
    print(f"wrote {out / 'episodes.csv'} and {out / 'summary.txt'}")
    return 0


# --- compare --------------------------------------------------------------------


def cmd_compare(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, episodes=args.episodes)
    pol_a = cfg.build_policy(args.policy_a)
    pol_b = cfg.build_policy(args.policy_b)
    series = compare(pol_a, pol_b, cfg.sim, cfg.episodes)
    out = Path(args.out)
    lines = ["step,mean_cumulative_diff\n"]
    lines += [f"{t},{_fmt(v)}\n" for t, v in enumerate(series)]
    _write(out / "diff_series.csv", "".join(lines))
    print(
        f"wrote {out / 'diff_series.csv'} "
        f"(final mean cumulative diff {args.policy_b} - {args.policy_a}: {_fmt(series[-1])})"
    )
    return 0


# --- thresholds -----------------------------------------------------------------


def cmd_thresholds(args) -> int:
    if args.kind == "martingale":
        fn = MartingaleThreshold(args.c, args.gamma)
    elif args.kind == "onestep":
        if args.mu is None or args.sigma is None:
            raise ConfigError("onestep thresholds need --mu and --sigma")
        fn = OneStepThreshold(args.c, args.gamma, args.mu, args.sigma)
    else:
        if args.mu is None or args.sigma is None:
            raise ConfigError("rollup thresholds need --mu and --sigma")
        params = RollupParams(
            c=args.c,
            gamma=args.gamma,
            mu=args.mu,
            sigma=args.sigma,
            alpha=args.alpha,
            n_max=args.n_max,
        )
        fn = RollupNumericThreshold(params)
    lines = ["age,lambda\n"]
    lines += [f"{age},{_fmt(fn(age))}\n" for age in range(args.age_max + 1)]
    text = "".join(lines)
    sys.stdout.write(text)
    if args.out:
        _write(Path(args.out), text)
    return 0


# --- interval -------------------------------------------------------------------


def cmd_interval(args) -> int:
    spec = build_delay(json.loads(args.delay))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        n_star = optimal_interval(spec, args.gamma, args.beta, args.price, args.n_max)
    value = interval_objective(spec, args.gamma, args.beta, args.price, n_star)
    print(f"n_star={n_star} objective={_fmt(value)}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return 0


# --- ingest ---------------------------------------------------------------------


def cmd_ingest(args) -> int:
    rows = load_fee_rows(args.infile)
    scale = args.wei_scale
    scaled = [(ts, fee * scale) for ts, fee in rows]
    trace = ingest_trace(scaled, args.resample_seconds)
    out_trace = Path(args.out_trace)
    lines = ["step,price\n"]
    lines += [f"{i},{_fmt(p)}\n" for i, p in enumerate(trace.prices)]
    _write(out_trace, "".join(lines))
    written = [str(out_trace)]
    if len(trace.prices) >= 2:
        stats = fit_factors(trace)
        fl = ["index,factor\n"]
        fl += [f"{i},{_fmt(f)}\n" for i, f in enumerate(stats.factors)]
        _write(out_trace.parent / "factors.csv", "".join(fl))
        fit = {
            "mu_hat": stats.mu_hat,
            "sigma_hat": stats.sigma_hat,
            "count": int(stats.factors.size),
        }
        _write(out_trace.parent / "fit.json", json.dumps(fit, sort_keys=True) + "\n")
        written += [str(out_trace.parent / "factors.csv"), str(out_trace.parent / "fit.json")]
        print(f"mu_hat={_fmt(stats.mu_hat)} sigma_hat={_fmt(stats.sigma_hat)}")
    else:
        print("trace shorter than 2 steps; factor fit skipped")
    print("wrote " + ", ".join(written))
    return 0


# --- check-subadd ---------------------------------------------------------------


def cmd_check_subadd(args) -> int:
    from .costs import check_sub_additivity

    spec = build_delay(json.loads(args.delay))
    result = check_sub_additivity(spec, args.gamma, args.sigma, args.n_max)
    if result is None:
        print(f"OK: sigma={args.sigma} sub-additivity holds up to n_max={args.n_max}")
    else:
        print(
            f"COUNTEREXAMPLE: n1={result.n1} n2={result.n2} "
            f"lhs={_fmt(result.lhs)} rhs={_fmt(result.rhs)}"
        )
    return 0


# --- oracle ---------------------------------------------------------------------

_DEFAULT_ORACLE = {
    "seed": 0,
    "checks": {
        "all-or-nothing": {"instances": 20},
        "fifo": {"instances": 20},
        "modified-vs-full": {"instances": 10},
        "interval": {"beta_prices": [16.0, 250.0], "gamma": 0.995},
        "threshold-structure": {},
    },
}


def _rand_spec(rng, kind=None):
    from .costs import ExponentialDelay, LinearDelay, TableDelay

    k = kind or rng.choice(["linear", "exp", "table"])
    if k == "linear":
        return LinearDelay(float(rng.uniform(0.2, 8.0)))
    if k == "exp":
        return ExponentialDelay(float(rng.uniform(0.05, 0.6)))
    vals = np.round(rng.uniform(0.0, 6.0, size=12), 3)
    return TableDelay(tuple(vals))


def _rand_full_cfg(rng, opts, global_monotone: bool):
    horizon = int(opts.get("horizon", rng.integers(3, 6)))
    n_seeds = int(rng.integers(0, 3))
    alpha = float(opts.get("alpha", 0.0 if not global_monotone else rng.uniform(0.0, 2.0)))
    beta = float(rng.uniform(0.2, 4.0))
    lattice = LatticePriceProcess.two_point(
        float(rng.uniform(0.5, 3.0)), float(rng.uniform(1.1, 1.7)), p=float(rng.uniform(0.2, 0.8))
    )
    if global_monotone:
        spec = _rand_spec(rng, "linear" if rng.random() < 0.5 else "exp")
        seeds = tuple([spec] * n_seeds)
        arrivals = tuple([spec] * horizon)
    else:
        seeds = tuple(_rand_spec(rng) for _ in range(n_seeds))
        arrivals = tuple(_rand_spec(rng) for _ in range(horizon))
    return FullMdpConfig(
        gamma=float(rng.uniform(0.85, 0.99)),
        horizon=horizon,
        lattice=lattice,
        publish=PublishingCostParams(alpha, beta),
        seed_specs=seeds,
        arrival_specs=arrivals,
    )


def cmd_oracle(args) -> int:
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    else:
        doc = _DEFAULT_ORACLE
    seed = int(doc.get("seed", 0))
    checks = doc.get("checks", _DEFAULT_ORACLE["checks"])
    out_dir = Path(args.out) if args.out else None

    rows = []  # (name, status, detail)

    def run_check(name, fn):
        try:
            status, detail = fn()
        except StateSpaceError as exc:
            status, detail = "REFUSED", str(exc)
        rows.append((name, status, detail))

    if "all-or-nothing" in checks:
        opts = checks["all-or-nothing"] or {}

        def check_aon():
            rng = np.random.default_rng(seed)
            n = int(opts.get("instances", 20))
            if float(opts.get("alpha", 0.0)) != 0.0:
                return "SKIP", "requires alpha = 0; instance has alpha != 0"
            for i in range(n):
                cfg = _rand_full_cfg(rng, opts, global_monotone=False)
                if not verify_all_or_nothing(cfg):
                    return "FAIL", f"instance {i}"
            return "PASS", f"{n} random flat-cost instances"

        run_check("all-or-nothing", check_aon)

    if "fifo" in checks:
        opts = checks["fifo"] or {}

        def check_fifo():
            rng = np.random.default_rng(seed + 1)
            n = int(opts.get("instances", 20))
            for i in range(n):
                cfg = _rand_full_cfg(rng, opts, global_monotone=True)
                if not verify_fifo(cfg):
                    return "FAIL", f"instance {i}"
            return "PASS", f"{n} random global-monotone instances"

        run_check("fifo", check_fifo)

    if "modified-vs-full" in checks:
        opts = checks["modified-vs-full"] or {}

        def check_mvf():
            rng = np.random.default_rng(seed + 2)
            n = int(opts.get("instances", 10))
            for i in range(n):
                cfg = _rand_full_cfg(rng, opts, global_monotone=True)
                cfg = FullMdpConfig(
                    gamma=cfg.gamma,
                    horizon=cfg.horizon,
                    lattice=cfg.lattice,
                    publish=cfg.publish,
                    seed_specs=(),
                    arrival_specs=cfg.arrival_specs,
                )
                if not modified_matches_full(cfg):
                    return "FAIL", f"instance {i}"
            return "PASS", f"{n} count-vs-subset comparisons"

        run_check("modified-vs-full", check_mvf)

    if "interval" in checks:
        opts = checks["interval"] or {}

        def check_interval():
            gamma = float(opts.get("gamma", 0.995))
            spec = LinearDelay(float(opts.get("slope", 6.0)))
            for bp in opts.get("beta_prices", [16.0, 250.0]):
                n_star = optimal_interval(spec, gamma, 1.0, bp, 500)
                horizon = 6 * n_star
                cfg = ModifiedMdpConfig(
                    gamma=gamma,
                    horizon=horizon,
                    lattice=LatticePriceProcess.constant(1.0),
                    publish=PublishingCostParams(0.0, float(bp)),
                    delay=spec,
                    q_max=horizon,
                )
                sol = solve_modified_mdp(cfg)
                ival = evaluate_modified_policy(cfg, interval_decider(n_star))
                if out_dir is not None:
                    out_dir.mkdir(parents=True, exist_ok=True)
                    sol.to_csv(out_dir / f"oracle_interval_bp{bp:g}.csv")
                if abs(ival - sol.initial_value()) > 1e-8 * sol.initial_value():
                    return "FAIL", f"beta*price={bp}: interval {n_star} vs optimum"
            return "PASS", f"interval schedule optimal for beta_prices={opts.get('beta_prices', [16.0, 250.0])}"

        run_check("interval", check_interval)

    if "threshold-structure" in checks:
        opts = checks["threshold-structure"] or {}

        def check_thr():
            gamma = float(opts.get("gamma", 0.8))
            c = float(opts.get("c", 0.1))
            for drop in (0.0, 0.08):
                u = 1.12
                p = None if drop == 0.0 else (1.0 - 1 / u) / (u - 1 / u) - drop
                lattice = LatticePriceProcess.two_point(3.0, u, p=p)
                cfg = ThresholdStructureConfig(
                    lattice=lattice,
                    gamma=gamma,
                    alpha=1.0,
                    delay=LinearDelay(2 * c),
                    horizon=int(opts.get("horizon", 120)),
                    eval_steps=(20, 30, 40),
                    ages=tuple(range(9)),
                )
                rep = verify_threshold_structure(cfg)
                if not rep.passed:
                    return "FAIL", f"drift offset {drop}"
            return "PASS", "single monotone cut on martingale and negative-drift lattices"

        run_check("threshold-structure", check_thr)

    width = max(len(r[0]) for r in rows) if rows else 10
    for name, status, detail in rows:
        print(f"{name:<{width}}  {status:<7}  {detail}")
    failed = any(status in ("FAIL", "REFUSED") for _, status, _ in rows)
    return 1 if failed else 0


# --- parser ---------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="l2pub", description=__doc__)
    parser.add_argument("--version", action="version", version=f"l2pub {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run episodes under one policy")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--episodes", type=int, default=None, help="override config episodes")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compare", help="mean cumulative cost difference b - a on shared price paths")
    p.add_argument("policy_a", help=f"policy name from config, or one of {POLICY_KINDS}")
    p.add_argument("policy_b")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("thresholds", help="print the age,lambda threshold table")
    p.add_argument("--kind", choices=("rollup", "martingale", "onestep"), default="rollup")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=100_000)
    p.add_argument("--age-max", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_thresholds)

    p = sub.add_parser("interval", help="optimal constant publication interval")
    p.add_argument("--delay", required=True, help='delay spec JSON, e.g. {"kind":"linear","slope":6}')
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--price", type=float, required=True)
    p.add_argument("--n-max", type=int, default=500)
    p.set_defaults(fn=cmd_interval)

    p = sub.add_parser("ingest", help="resample a raw fee CSV into a step,price trace")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--resample-seconds", type=int, required=True)
    p.add_argument("--out-trace", required=True)
    p.add_argument("--wei-scale", type=float, default=1e-9, help="fee unit scale (default gwei)")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("oracle", help="run exact-DP verification checks")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="directory for state-table CSV exports")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("check-subadd", help="exhaustive sub-additivity check")
    p.add_argument("--delay", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.set_defaults(fn=cmd_check_subadd)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ConfigError, StateSpaceError, IngestError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
