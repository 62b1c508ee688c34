"""Command-line front end: run experiment suites and write CSV.

Subcommands
-----------
``spl``
    ensemble regret over a policy x lambda* x pi matrix on the point
    location line (optionally the per-step trace with ``--trace``);
``sweep-prior``
    convergence steps over door counts, truth-level counts and prior shapes;
``track-truth``
    ensemble truthfulness marginals at chosen iterations;
``srf``
    residuals on the root-finding benchmarks, with and without the
    direction-sampling phase.

Every option can also come from a flat JSON object given with ``--config``;
keys mirror the long flags (``lambda-star`` or ``lambda_star``).  Flags win
over the file, the file wins over the built-in defaults.

Exit status is 0 on success, 2 for usage errors and 3 when a run fails.
"""

from __future__ import annotations

import argparse
import io
import itertools
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from .environments import FUNCTION_IDS
from .harness import (
    ConfigError,
    TrialConfig,
    build_environment,
    build_policy,
    ensemble_row,
    run_ensemble,
    write_rows,
    write_trial_csv,
)
from .policies import POLICY_IDS
from .priors import parse_prior

log = logging.getLogger("tsspl")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

# Band used by track-truth when scoring the marginal mode against pi.
MODE_TOLERANCE = 0.05
PRIOR_SIGMA = 0.3

COMMON_DEFAULTS = {
    "policy": "ts-spl",
    "lambda_star": "0.85",
    "pi": "0.85",
    "doors": "201",
    "truth_levels": None,
    "truth_range": None,
    "prior": "F/F",
    "horizon": "1000",
    "trials": "10000",
    "seed": "0",
    "function": "A",
    "sampling_phase": "off",
    "eps": "0.01",
    "threshold": "0.95",
    "out": "-",
    "parallelism": None,
    "trace": False,
    "snapshots": "0,1,5,10,20,50,100",
}

COMMAND_DEFAULTS = {
    "spl": {},
    "sweep-prior": {"doors": "101", "truth_levels": "101"},
    "track-truth": {"pi": "0.15", "horizon": None, "trials": "100"},
    "srf": {"policy": "ts-spl,sa", "pi": "0.65,0.75,0.85", "horizon": "250",
            "function": "A,B,C", "sampling_phase": "both"},
}

OPTION_KEYS = tuple(COMMON_DEFAULTS)


class UsageError(ValueError):
    pass


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsspl",
        description="Thompson-sampling point location experiments (CSV output).")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    helps = {
        "spl": "ensemble regret on the point location line",
        "sweep-prior": "convergence steps over grid sizes and priors",
        "track-truth": "truthfulness marginal snapshots",
        "srf": "residuals on root-finding benchmarks A/B/C",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _add_common(p)
    return parser


def _add_common(p: argparse.ArgumentParser) -> None:
    # every default is None so that config-file values can fill the gaps
    p.add_argument("--config", metavar="FILE", help="flat JSON object with option values")
    p.add_argument("--policy", help=f"comma-separated ids from: {', '.join(POLICY_IDS)}")
    p.add_argument("--lambda-star", dest="lambda_star", help="optimum location(s), comma-separated")
    p.add_argument("--pi", help="truth probabilities, comma-separated")
    p.add_argument("--doors", help="door counts, comma-separated")
    p.add_argument("--truth-levels", dest="truth_levels", help="truthfulness grid sizes, comma-separated")
    p.add_argument("--truth-range", dest="truth_range", metavar="LOW:HIGH",
                   help="truthfulness grid range (default depends on policy)")
    p.add_argument("--prior", help="DOOR/TRUTH prior pairs, comma-separated; each side is "
                                   "C (centred on the true value), I (mirrored), F (flat) or "
                                   "gaussian:MU:SIGMA / inverse-gaussian:MU:SIGMA")
    p.add_argument("--horizon", help="steps per trial")
    p.add_argument("--trials", help="independent trials per setting")
    p.add_argument("--seed", help="master seed")
    p.add_argument("--function", help=f"benchmark ids, comma-separated ({', '.join(FUNCTION_IDS)})")
    p.add_argument("--sampling-phase", dest="sampling_phase", choices=("on", "off", "both"),
                   help="direction-estimation phase for root finding")
    p.add_argument("--eps", help="half-width of the convergence interval")
    p.add_argument("--threshold", help="mass threshold for convergence")
    p.add_argument("--snapshots", help="iterations to snapshot (track-truth)")
    p.add_argument("--trace", action="store_const", const=True, default=None,
                   help="spl: write per-step rows for every trial instead of ensemble rows")
    p.add_argument("--out", help="output CSV path, '-' for stdout")
    p.add_argument("--parallelism", help="worker processes (default: available cores)")


def load_config(path: str) -> Dict[str, object]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a flat JSON object")
    out = {}
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if name not in OPTION_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(value, (dict,)):
            raise UsageError(f"config key {key!r} must be a scalar or a list")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool) and name != "trace":
            value = "on" if value else "off"
        out[name] = value
    return out


def resolve_options(args: argparse.Namespace) -> Dict[str, object]:
    """Merge defaults, config file and flags (in increasing precedence)."""
    opts = dict(COMMON_DEFAULTS)
    opts.update(COMMAND_DEFAULTS[args.command])
    if args.config:
        opts.update(load_config(args.config))
    for key in OPTION_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


# ----------------------------------------------------------------------
# value parsing
# ----------------------------------------------------------------------

def _items(value) -> List[str]:
    items = [v.strip() for v in str(value).split(",")]
    if not items or any(not v for v in items):
        raise UsageError(f"empty entry in list {value!r}")
    return items


def _floats(value, name: str) -> List[float]:
    try:
        return [float(v) for v in _items(value)]
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')} expects numbers, got {value!r}") from None


def _ints(value, name: str, minimum: int = 0) -> List[int]:
    try:
        out = [int(v) for v in _items(value)]
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')} expects integers, got {value!r}") from None
    if any(v < minimum for v in out):
        raise UsageError(f"--{name.replace('_', '-')} values must be at least {minimum}")
    return out


def _one_int(value, name: str, minimum: int = 0) -> int:
    vals = _ints(value, name, minimum)
    if len(vals) != 1:
        raise UsageError(f"--{name.replace('_', '-')} takes a single value")
    return vals[0]


def _one_float(value, name: str) -> float:
    vals = _floats(value, name)
    if len(vals) != 1:
        raise UsageError(f"--{name.replace('_', '-')} takes a single value")
    return vals[0]


def _truth_range(value):
    if value is None or value == "":
        return None, None
    try:
        low, high = (float(v) for v in str(value).split(":"))
    except ValueError:
        raise UsageError(f"--truth-range expects LOW:HIGH, got {value!r}") from None
    return low, high


def _sampling(value) -> List[bool]:
    v = str(value).lower()
    table = {"on": [True], "off": [False], "both": [False, True],
             "true": [True], "false": [False]}
    if v not in table:
        raise UsageError(f"--sampling-phase must be on, off or both, got {value!r}")
    return table[v]


def prior_side(code: str, truth_value: float) -> str:
    """Resolve one side of a prior pair to a prior string.

    ``C`` is a bell of width 0.3 on the true value, ``I`` the same bell
    mirrored about 1/2, ``F`` flat; anything else is passed to
    :func:`~tsspl.priors.parse_prior` as is.
    """
    c = code.strip()
    upper = c.upper()
    if upper == "C":
        c = f"gaussian:{truth_value:g}:{PRIOR_SIGMA:g}"
    elif upper == "I":
        c = f"inverse-gaussian:{truth_value:g}:{PRIOR_SIGMA:g}"
    elif upper == "F":
        c = "flat"
    try:
        prior = parse_prior(c)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return "flat" if prior is None else str(prior)


def prior_pairs(value) -> List[tuple]:
    pairs = []
    for item in _items(value):
        parts = item.split("/")
        if len(parts) == 1:
            parts = [parts[0], "F"]
        if len(parts) != 2:
            raise UsageError(f"prior {item!r} must be DOOR/TRUTH")
        pairs.append((parts[0], parts[1]))
    return pairs


# ----------------------------------------------------------------------
# experiment specs
# ----------------------------------------------------------------------

def _base(opts: Dict[str, object]) -> dict:
    low, high = _truth_range(opts["truth_range"])
    return dict(
        horizon=_one_int(opts["horizon"], "horizon") if opts["horizon"] is not None else 1000,
        seed=_one_int(opts["seed"], "seed"),
        eps=_one_float(opts["eps"], "eps"),
        threshold=_one_float(opts["threshold"], "threshold"),
        truth_low=low,
        truth_high=high,
    )


def _policies(opts) -> List[str]:
    ids = [p.lower() for p in _items(opts["policy"])]
    for p in ids:
        if p not in POLICY_IDS:
            raise UsageError(f"unknown policy {p!r}; expected one of {', '.join(POLICY_IDS)}")
    return ids


def _truth_levels(opts) -> List[Optional[int]]:
    if opts["truth_levels"] is None:
        return [None]
    return _ints(opts["truth_levels"], "truth_levels", minimum=1)


def spl_configs(opts) -> List[TrialConfig]:
    base = _base(opts)
    out = []
    for policy, lam, pi, n, m, (dp, tp) in itertools.product(
            _policies(opts), _floats(opts["lambda_star"], "lambda_star"),
            _floats(opts["pi"], "pi"), _ints(opts["doors"], "doors", 2),
            _truth_levels(opts), prior_pairs(opts["prior"])):
        out.append(TrialConfig(policy=policy, environment="spl", lambda_star=lam, pi=pi,
                               num_doors=n, num_truth_levels=m,
                               door_prior=prior_side(dp, lam), truth_prior=prior_side(tp, pi),
                               **base))
    return out


def sweep_configs(opts) -> List[TrialConfig]:
    # convergence is all that is reported, so trials stop once it happens
    return [c.replace(stop_at_convergence=True, record_steps=False) for c in spl_configs(opts)]


def track_configs(opts) -> List[TrialConfig]:
    snaps = tuple(sorted(set(_ints(opts["snapshots"], "snapshots"))))
    if opts["horizon"] is None:
        opts = dict(opts, horizon=str(max(snaps)))
    configs = []
    for c in spl_configs(opts):
        if c.policy not in ("ts-spl", "ts-spl-inf", "pbs-m", "sgbs-m", "bz-m"):
            raise UsageError(f"track-truth needs a grid-posterior policy, not {c.policy!r}")
        if max(snaps) > c.horizon:
            raise UsageError("snapshot iterations must not exceed the horizon")
        configs.append(c.replace(truth_snapshots=snaps, record_steps=False))
    return configs


def srf_configs(opts) -> List[TrialConfig]:
    base = _base(opts)
    out = []
    for policy, fn, pi, n, m, sampling in itertools.product(
            _policies(opts), [f.upper() for f in _items(opts["function"])],
            _floats(opts["pi"], "pi"), _ints(opts["doors"], "doors", 2),
            _truth_levels(opts), _sampling(opts["sampling_phase"])):
        if fn not in FUNCTION_IDS:
            raise UsageError(f"unknown function {fn!r}; expected one of {', '.join(FUNCTION_IDS)}")
        if sampling and policy in ("ts-spl", "sa"):
            # these run without learning the direction first
            continue
        out.append(TrialConfig(policy=policy, environment="srf", function=fn, pi=pi,
                               num_doors=n, num_truth_levels=m, sampling_phase=sampling, **base))
    return out


BUILDERS = {"spl": spl_configs, "sweep-prior": sweep_configs,
            "track-truth": track_configs, "srf": srf_configs}


def validate(configs: Sequence[TrialConfig]) -> None:
    """Build each policy and environment once so bad settings fail before any run."""
    for c in configs:
        build_environment(c)
        build_policy(c)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def _run_all(configs, trials, parallelism):
    for c in configs:
        log.info("running %s", c.describe())
        yield c, run_ensemble(c, trials, parallelism)


def cmd_spl(configs, trials, parallelism, trace=False) -> str:
    buf = io.StringIO()
    if trace:
        first = True
        for c, (_, results) in _run_all(configs, trials, parallelism):
            for i, r in enumerate(results):
                write_trial_csv(buf, r, c, trial=i, header=first)
                first = False
        return buf.getvalue()
    rows = [ensemble_row(c, stats) for c, (stats, _) in _run_all(configs, trials, parallelism)]
    write_rows(buf, rows)
    return buf.getvalue()


def cmd_sweep_prior(configs, trials, parallelism) -> str:
    buf = io.StringIO()
    rows = []
    for c, (stats, _) in _run_all(configs, trials, parallelism):
        row = ensemble_row(c, stats)
        row["sem_convergence"] = _fmt_opt(stats.sem_convergence)
        rows.append(row)
    write_rows(buf, rows)
    return buf.getvalue()


def cmd_track_truth(configs, trials, parallelism) -> str:
    """One row per (snapshot, truth level) with the ensemble-mean marginal.

    ``mode_median`` and ``mode_hit_rate`` summarise the per-trial marginal
    modes at that snapshot; the hit rate counts modes within
    ``MODE_TOLERANCE`` of pi.
    """
    rows = []
    for c, (_, results) in _run_all(configs, trials, parallelism):
        levels = results[0].truth_levels
        params = {k: _fmt_opt(v) for k, v in c.describe().items()}
        for it in c.truth_snapshots:
            stack = np.array([r.truth_snapshots[it] for r in results])
            modes = levels[np.argmax(stack, axis=1)]
            hit = float(np.mean(np.abs(modes - c.pi) <= MODE_TOLERANCE + 1e-12))
            mean = stack.mean(axis=0)
            for t, w in zip(levels, mean):
                rows.append({**params, "trials": str(trials), "iteration": str(it),
                             "truth": _fmt_opt(float(t)), "mean_weight": _fmt_opt(float(w)),
                             "mode_median": _fmt_opt(float(np.median(modes))),
                             "mode_hit_rate": _fmt_opt(hit)})
    buf = io.StringIO()
    write_rows(buf, rows)
    return buf.getvalue()


def cmd_srf(configs, trials, parallelism) -> str:
    return cmd_spl(configs, trials, parallelism)


def _fmt_opt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)

    try:
        opts = resolve_options(args)
        configs = BUILDERS[args.command](opts)
        if not configs:
            raise UsageError("nothing to run for these settings")
        trials = _one_int(opts["trials"], "trials", minimum=1)
        par = opts["parallelism"]
        parallelism = _one_int(par, "parallelism", 1) if par is not None else (os.cpu_count() or 1)
        validate(configs)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"tsspl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "spl":
            text = cmd_spl(configs, trials, parallelism, trace=bool(opts["trace"]))
        elif args.command == "sweep-prior":
            text = cmd_sweep_prior(configs, trials, parallelism)
        elif args.command == "track-truth":
            text = cmd_track_truth(configs, trials, parallelism)
        else:
            text = cmd_srf(configs, trials, parallelism)
        out = str(opts["out"])
        if out == "-":
            sys.stdout.write(text)
            sys.stdout.flush()
        else:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except Exception as exc:  # noqa: BLE001 - any failure mid-run maps to one exit status
        log.debug("run failed", exc_info=True)
        print(f"tsspl {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
