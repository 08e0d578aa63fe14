"""
Command-Line Front End
Runs experiments, identity checks, reproductions, the self-test and ad-hoc distances
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from config import configure_logging, load_settings
from errors import ApproximationError, InvalidConfigurationError
from harness import (DEFAULT_PARAMS, FORMATS, REPRODUCTIONS, SUITES, ExperimentConfig, VerificationReport,
                     metric_between, read_config_file, run_experiment, selftest, selftest_json)

logger = logging.getLogger(__name__)

VERDICT_ICONS = {
    "bound-holds": "✅",
    "bound-vacuous": "⚠️ ",
    "inconclusive": "⚠️ ",
    "violation": "❌",
}

EXPERIMENTS = ("matern", "occupancy", "palindrome", "marked-trials")
CHECKS = {"stein": "stein-check", "palm": "palm-check"}


# =========================================================================
# ARGUMENT PARSING
# =========================================================================

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _json_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (PPA_SEED)")
    common.add_argument("--samples", type=int, help="draws per replicate N (PPA_SAMPLES)")
    common.add_argument("--replicates", type=int, help="independent replicates R (PPA_REPLICATES)")
    common.add_argument("--out", help="output directory, or a .json report path")
    common.add_argument("--config", help="experiment configuration JSON; overrides flags")
    common.add_argument("--fasta", help="FASTA sequence to analyse (palindrome only)")
    common.add_argument("--format", choices=FORMATS, help="report format echoed on completion")
    common.add_argument("--workers", type=int, help="replicate threads (PPA_WORKERS)")
    common.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="PPA_LOG_LEVEL")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="ppa",
        description="Poisson process approximation: simulate, bound and verify",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("experiment", parents=[common], help="compare an empirical distance with its bound")
    exp.add_argument("kind", choices=EXPERIMENTS)
    matern = exp.add_argument_group("matern")
    matern.add_argument("--mu", type=float, help="parent intensity")
    matern.add_argument("--r", type=float, help="hard-core radius")
    matern.add_argument("--d", type=int, choices=(1, 2, 3), help="dimension")
    matern.add_argument("--geometry", choices=("torus", "box"))
    matern.add_argument("--grid", type=int, help="box quadrature nodes per axis")
    urns = exp.add_argument_group("occupancy / marked-trials")
    urns.add_argument("--n", type=int, help="number of urns")
    urns.add_argument("--s", type=int, help="number of balls")
    urns.add_argument("--m", type=int, help="occupancy threshold")
    urns.add_argument("--p", type=_float_list, help="comma-separated probabilities")
    dna = exp.add_argument_group("palindrome / marked-trials")
    dna.add_argument("--M", type=int, help="sequence length")
    dna.add_argument("--L", type=int, help="palindrome half-length")
    dna.add_argument("--probs", type=_float_list, help="A,C,G,T base probabilities")
    dna.add_argument("--b2-mode", dest="b2_mode", choices=("analytic", "exact", "mc"))
    trials = exp.add_argument_group("marked-trials")
    trials.add_argument("--model", choices=("independent", "explicit", "occupancy", "palindrome"))
    trials.add_argument("--pmf", type=_json_value, help="JSON array of 2^n pattern probabilities")
    trials.add_argument("--neighborhoods", type=_json_value, help="JSON array of 0-based index lists")
    trials.add_argument("--marks", choices=("uniform", "grid"))
    trials.add_argument("--mode", choices=("auto", "exact", "mc"))
    trials.add_argument("--locally-dependent", dest="locally_dependent", action="store_true", default=None)

    chk = sub.add_parser("check", parents=[common], help="Stein or Palm identity check")
    chk.add_argument("which", choices=sorted(CHECKS))
    chk.add_argument("--lams", type=_float_list, help="Poisson totals to test")
    chk.add_argument("--sigmas", type=float, help="acceptance band in standard errors")

    rep = sub.add_parser("reproduce", parents=[common], help="exact worked examples")
    rep.add_argument("which", choices=REPRODUCTIONS)
    rep.add_argument("--q", type=float)
    rep.add_argument("--b", type=float)

    st = sub.add_parser("selftest", parents=[common], help="run the invariant suites")
    st.add_argument("--fault", choices=sorted(SUITES), help="scale one suite's checked quantity by 0.5")
    st.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only these suites")

    met = sub.add_parser("metrics", parents=[common], help="distance between configuration files")
    met.add_argument("which", choices=("rho1", "rho1dd", "d2"))
    met.add_argument("--a", required=True, help="first configuration file")
    met.add_argument("--b", required=True, help="second configuration file")
    met.add_argument("--ground", choices=("capped", "zero"), default="capped")
    met.add_argument("--geometry", choices=("box", "torus"), default="box")
    return parser


# =========================================================================
# CONFIGURATION RESOLUTION
# =========================================================================

def _flag_params(args: argparse.Namespace, kind: str) -> Dict[str, Any]:
    """Model flags that were given and apply to kind"""
    params = {}
    for key in DEFAULT_PARAMS[kind]:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    return params


def resolve_config(kind: str, args: argparse.Namespace, params: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults, then environment, then flags, then the --config file"""
    if args.fasta is not None and kind != "palindrome":
        raise InvalidConfigurationError("--fasta applies to the palindrome experiment only")
    cfg = ExperimentConfig.from_settings(kind, load_settings())
    cfg = cfg.merged(
        params={**_flag_params(args, kind), **(params or {})},
        samples=args.samples,
        replicates=args.replicates,
        seed=args.seed,
        output=args.out,
        workers=args.workers,
        fmt=args.format,
    )
    if args.config:
        data = read_config_file(args.config)
        if data.get("kind", kind) != kind:
            raise InvalidConfigurationError(f"{args.config} describes {data['kind']!r}, not {kind!r}")
        cfg = cfg.merged(**{k: v for k, v in data.items() if k != "kind"})
    return cfg


# =========================================================================
# OUTPUT
# =========================================================================

def print_report(report: VerificationReport) -> None:
    icon = VERDICT_ICONS[report.verdict]
    if report.bound is not None:
        bound = report.bound
        print(f"📐 {bound.tag} bound: {bound.total:.6g}" + ("  (vacuous)" if bound.vacuous else ""))
        for extra in report.extra_bounds:
            print(f"   {extra.tag}: {extra.total:.6g}")
    if report.corrected is not None:
        print(f"📊 estimate {report.estimate.value:.6g} ± {report.estimate.stderr:.2g}, "
              f"baseline {report.baseline.value:.6g}, corrected {report.corrected.value:.6g} "
              f"± {report.corrected.stderr:.2g}")
    for name, check in report.checks.items():
        mark = "✅" if check["passed"] else ("⚠️ " if check.get("power") else "❌")
        value = check.get("value")
        shown = f" {value:.6g}" if isinstance(value, float) else ""
        print(f"   {mark} {name}{shown}")
    print(f"{icon} verdict: {report.verdict} ({report.runtime:.1f}s)")


def _finish(report: VerificationReport) -> int:
    print_report(report)
    json_path, csv_path = report.write()
    print(f"📄 report: {csv_path if report.config.fmt == 'csv' else json_path}")
    return 1 if report.verdict == "violation" else 0


# =========================================================================
# COMMANDS
# =========================================================================

def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.kind, args)
    print(f"🎲 seed {cfg.seed} (config {cfg.config_hash()})")
    return _finish(run_experiment(cfg))


def cmd_check(args: argparse.Namespace) -> int:
    cfg = resolve_config(CHECKS[args.which], args)
    print(f"🎲 seed {cfg.seed} (config {cfg.config_hash()})")
    return _finish(run_experiment(cfg))


def cmd_reproduce(args: argparse.Namespace) -> int:
    cfg = resolve_config("reproduce", args)
    print(f"🎲 seed {cfg.seed} (exact enumeration)")
    report = run_experiment(cfg)
    res = report.details
    if REPRODUCTIONS[args.which] == "conditioning-gap":
        print(f"E[I1 I2 / (I3 + 1)]        = {res['left']:.12g}")
        print(f"E[1 / (I3 + 1)] E[I1 I2]   = {res['right']:.12g}")
    else:
        print(f"P(I3 = I4 = 1 | I1 = I2 = 1) = {res['conditional']:.12g}")
        print(f"P(I3 = I4 = 1 | I1 = 1)      = {res['unconditional']:.12g}")
        print(f"direction: {res['observed_direction']} ({res['family_relation']}ly related family)")
    return _finish(report)


def cmd_selftest(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else load_settings().seed
    print(f"🎲 seed {seed}")
    summary = selftest(seed, args.fault, args.suite)
    for name, suite in summary["suites"].items():
        mark = "✅" if suite["passed"] else "❌"
        print(f"{mark} {name}: {suite['checks'] - len(suite['failures'])}/{suite['checks']} checks")
        for failure in suite["failures"][:5]:
            print(f"     {failure}")
    if args.out:
        path = Path(args.out)
        if path.suffix != ".json":
            path = path / f"selftest-{seed}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(selftest_json(summary))
        print(f"📄 summary: {path}")
    return 0 if summary["passed"] else 1


def cmd_metrics(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else load_settings().seed
    print(f"🎲 seed {seed}")
    value = metric_between(args.which, args.a, args.b, args.geometry, args.ground, seed)
    print(f"{args.which} = {value:.12g}")
    return 0


COMMANDS = {
    "experiment": cmd_experiment,
    "check": cmd_check,
    "reproduce": cmd_reproduce,
    "selftest": cmd_selftest,
    "metrics": cmd_metrics,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point

    Returns:
        0 for bound-holds, bound-vacuous or inconclusive; 1 for a violation
        (or a failed self-test); 2 for usage and configuration errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        configure_logging(args.log_level)
        return COMMANDS[args.command](args)
    except ApproximationError as exc:
        logger.debug("command failed", exc_info=True)
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
