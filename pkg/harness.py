"""
Verification Harness
Runs reproducible experiments that compare empirical distances with the approximation bounds
"""

import hashlib
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy
from scipy.stats import poisson
from tqdm import tqdm

from bounds import (BoundReport, d2_bound_local, d2_bound_marked_trials, d2_bound_negrel,
                    inverse_moment_bound, matern_bound, mu_prime, _mu_prime_bruteforce,
                    negrel_inverse_moment, occupancy_bound, palindrome_bound, tv_count_bound)
from carrier import (Carrier, CappedEuclidean, GroundDistance, LiftedMark, PointConfig, ZeroPseudo,
                     box_region, config_from_json)
from config import Settings, load_settings
from errors import ApproximationError, InvalidConfigurationError, InvalidInputError
from metrics import (EstimateWithError, assignment_solve, brute_force_assignment, count_pmf,
                     d2_lower_bound_counts, empirical_transport, estimate_d2, rho1, rho1_dd,
                     tv_distance)
from occupancy import OccupancyModel, occupancy_indicator_model, sample_occupancy
from palindromes import (PalindromeModel, palindrome_indicator_model, read_fasta, sample_dna,
                         sequence_summary)
from palm import (CountFunctional, check_local_dependence, check_palm_identity, check_stein_identity,
                  epsilon1_exact, inverse_moment_mc, palm_sample)
from processes import (KAPPA, BoxDensity, DiscreteAtoms, matern_mean_measure, sample_matern)
from trials import (IndicatorModel, bits_of, explicit_pmf_model, grid_marks, independent_trials,
                    pmf_from_intersections, sample_lifted_poisson, sample_marked_trials,
                    uniform_marks)

logger = logging.getLogger(__name__)

KINDS = ("matern", "occupancy", "palindrome", "marked-trials",
         "stein-check", "palm-check", "metrics-selftest", "reproduce")
STATISTICAL_KINDS = KINDS[:4]
FORMATS = ("json", "csv")
VERDICTS = ("bound-holds", "bound-vacuous", "violation", "inconclusive")
CONFIG_KEYS = {"kind", "params", "samples", "replicates", "seed", "output", "workers", "format", "fmt"}
# reproduction names accepted on the command line and in config files
REPRODUCTIONS = {
    "remark-3.7": "conditioning-gap",
    "counterexample-4.7": "relation-flip",
    "conditioning-gap": "conditioning-gap",
    "relation-flip": "relation-flip",
}

DEFAULT_PARAMS: Dict[str, Dict[str, Any]] = {
    "matern": {"mu": 100.0, "r": 0.005, "d": 2, "geometry": "torus", "grid": 64},
    "occupancy": {"n": 100, "s": 460, "m": 0, "p": None},
    "palindrome": {"M": 150_000, "L": 5, "probs": None, "fasta": None, "b2_mode": "mc"},
    "marked-trials": {"model": "independent", "p": [0.1] * 10, "pmf": None, "neighborhoods": None,
                      "locally_dependent": False, "marks": "uniform", "n": 10, "s": 20, "m": 0,
                      "M": 40, "L": 2, "probs": None, "mode": "auto"},
    "stein-check": {"lams": [0.5, 2.0, 10.0], "s": 0.5, "region": [0.0, 0.5],
                    "power_mu": 10.0, "power_theta": 0.25, "sigmas": 3.0},
    "palm-check": {"lams": [0.5, 2.0, 10.0], "sigmas": 3.0},
    "metrics-selftest": {"instances": 200, "max_size": 7, "triples": 1000},
    "reproduce": {"which": "conditioning-gap", "q": None, "b": 2.0},
}


# =========================================================================
# CONFIGURATION
# =========================================================================

@dataclass(frozen=True)
class ExperimentConfig:
    """
    Resolved experiment configuration

    params are merged over DEFAULT_PARAMS[kind]; unknown parameter names are
    rejected. output is a directory, or a file path ending in .json.
    """
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    samples: int = 200
    replicates: int = 5
    seed: int = 20240917
    output: Optional[str] = None
    workers: int = 1
    fmt: str = "json"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise InvalidConfigurationError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        object.__setattr__(self, "params", {**DEFAULT_PARAMS[self.kind], **self.params})
        if self.kind in STATISTICAL_KINDS:
            if self.samples < 2 or self.replicates < 3:
                raise InvalidConfigurationError(
                    f"{self.kind} needs samples >= 2 and replicates >= 3 (got {self.samples}, {self.replicates})")
        elif self.kind in ("stein-check", "palm-check") and self.samples < 2:
            raise InvalidConfigurationError(f"{self.kind} needs samples >= 2")
        if self.workers < 1:
            raise InvalidConfigurationError("workers must be >= 1")
        if self.fmt not in FORMATS:
            raise InvalidConfigurationError(f"format must be one of {FORMATS}")

    @classmethod
    def from_settings(cls, kind: str, settings: Optional[Settings] = None) -> "ExperimentConfig":
        """Defaults for kind with the environment settings applied"""
        settings = settings or load_settings()
        replicates = max(settings.replicates, 3) if kind in STATISTICAL_KINDS else settings.replicates
        return cls(kind=kind, samples=max(settings.samples, 2), replicates=replicates, seed=settings.seed,
                   output=settings.output_dir, workers=settings.workers)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], settings: Optional[Settings] = None) -> "ExperimentConfig":
        """Build from a JSON-style mapping; missing fields fall back to settings"""
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise InvalidConfigurationError(f"unknown configuration keys {sorted(unknown)}")
        if "kind" not in data:
            raise InvalidConfigurationError("configuration needs an experiment 'kind'")
        base = cls.from_settings(data["kind"], settings)
        return base.merged(**{k: v for k, v in data.items() if k != "kind"})

    @classmethod
    def from_json(cls, path: str, settings: Optional[Settings] = None) -> "ExperimentConfig":
        return cls.from_mapping(read_config_file(path), settings)

    def merged(self, **overrides) -> "ExperimentConfig":
        """Copy with every non-None override applied; params are merged key by key"""
        changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            key = "fmt" if key == "format" else key
            if key == "params":
                if not isinstance(value, Mapping):
                    raise InvalidConfigurationError("'params' must be a mapping")
                value = {**self.params, **{k: v for k, v in value.items() if v is not None}}
            elif key == "kind" and value != self.kind:
                raise InvalidConfigurationError(f"cannot change kind {self.kind!r} to {value!r}")
            elif key in ("samples", "replicates", "seed", "workers"):
                if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                    raise InvalidConfigurationError(f"{key} must be an integer, got {value!r}")
                value = int(value)
            changes[key] = value
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "params": _plain(self.params),
            "samples": self.samples,
            "replicates": self.replicates,
            "seed": self.seed,
            "output": self.output,
            "workers": self.workers,
            "format": self.fmt,
        }

    def config_hash(self) -> str:
        """sha256 of the result-determining fields, first 16 hex digits"""
        canonical = {k: v for k, v in self.to_dict().items() if k not in ("output", "workers", "format")}
        payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def read_config_file(path: str) -> Dict[str, Any]:
    """Experiment configuration JSON object from disk"""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigurationError(f"{path}: configuration must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise InvalidConfigurationError(f"{path}: unknown configuration keys {sorted(unknown)}")
    return data


def _plain(obj: Any) -> Any:
    """JSON-ready copy of nested results (numpy scalars and arrays included)"""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def environment_stamp() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


# =========================================================================
# REPORTS AND VERDICTS
# =========================================================================

def render_verdict(bound: BoundReport, estimate: EstimateWithError,
                   baseline: Optional[EstimateWithError] = None, sigmas: float = 3.0) -> str:
    """
    bound-vacuous when the bound is >= 1; otherwise compare the baseline-corrected
    estimate with the bound total using sigmas combined standard errors
    """
    if bound.vacuous:
        return "bound-vacuous"
    corrected = estimate.minus(baseline) if baseline is not None else estimate
    se = math.hypot(corrected.stderr, bound.total_stderr)
    if corrected.value + sigmas * se <= bound.total:
        return "bound-holds"
    if bound.total == 0 and abs(corrected.value) <= sigmas * se:
        # a zero bound is met when the estimate is statistically zero
        return "bound-holds"
    if corrected.value - sigmas * se > bound.total:
        return "violation"
    return "inconclusive"


def checks_verdict(checks: Mapping[str, Mapping[str, Any]]) -> str:
    if any(not c["passed"] and not c.get("power", False) for c in checks.values()):
        return "violation"
    if any(not c["passed"] for c in checks.values()):
        return "inconclusive"
    return "bound-holds"


def _residual_check(est: EstimateWithError, sigmas: float, target: float = 0.0) -> Dict[str, Any]:
    gap = est.value - target
    passed = abs(gap) <= max(sigmas * est.stderr, 1e-12)
    return {"passed": bool(passed), "value": est.value, "stderr": est.stderr, "target": target}


def _exact_check(value: float, target: float, tol: float = 1e-12) -> Dict[str, Any]:
    return {"passed": bool(abs(value - target) <= tol), "value": value, "target": target}


@dataclass
class VerificationReport:
    """Bound, empirical distance and verdict of one experiment run"""
    config: ExperimentConfig
    verdict: str
    bound: Optional[BoundReport] = None
    estimate: Optional[EstimateWithError] = None
    baseline: Optional[EstimateWithError] = None
    extra_bounds: Tuple[BoundReport, ...] = ()
    checks: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)
    runtime: float = 0.0
    environment: Dict[str, str] = field(default_factory=environment_stamp)

    @property
    def tag(self) -> str:
        return self.bound.tag if self.bound is not None else self.config.kind

    @property
    def corrected(self) -> Optional[EstimateWithError]:
        if self.estimate is None:
            return None
        return self.estimate.minus(self.baseline) if self.baseline is not None else self.estimate

    def to_dict(self) -> Dict[str, Any]:
        return _plain({
            "tag": self.tag,
            "kind": self.config.kind,
            "seed": self.config.seed,
            "config_hash": self.config.config_hash(),
            "config": self.config.to_dict(),
            "verdict": self.verdict,
            "bound": self.bound.to_dict() if self.bound is not None else None,
            "extra_bounds": [b.to_dict() for b in self.extra_bounds],
            "estimate": self.estimate.to_dict() if self.estimate is not None else None,
            "baseline": self.baseline.to_dict() if self.baseline is not None else None,
            "corrected": self.corrected.to_dict() if self.corrected is not None else None,
            "checks": self.checks,
            "details": self.details,
            "runtime_seconds": self.runtime,
            "environment": self.environment,
        })

    def rows(self) -> List[Tuple[str, float]]:
        """Flat (term, value) rows"""
        rows: List[Tuple[str, float]] = []
        for report in ((self.bound,) if self.bound is not None else ()) + tuple(self.extra_bounds):
            rows += report.rows()
        for name, est in (("estimate", self.estimate), ("baseline", self.baseline), ("corrected", self.corrected)):
            if est is not None:
                rows += [(f"{name}.value", est.value), (f"{name}.stderr", est.stderr)]
        for name, check in self.checks.items():
            for key in ("value", "stderr", "target"):
                if isinstance(check.get(key), (int, float)):
                    rows.append((f"check.{name}.{key}", float(check[key])))
            rows.append((f"check.{name}.passed", float(check["passed"])))
        for key, value in self.details.items():
            if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
                rows.append((f"detail.{key}", float(value)))
        return rows

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows(), columns=["term", "value"])

    def write(self, output: Optional[str] = None) -> Tuple[Path, Path]:
        """
        Write the JSON report and its (term, value) CSV

        Returns:
            (json path, csv path)
        """
        target = Path(output or self.config.output or load_settings().output_dir)
        if target.suffix == ".json":
            json_path = target
        else:
            json_path = target / f"{self.config.kind}-{self.config.config_hash()}.json"
        json_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path = json_path.with_suffix(".csv")
        with json_path.open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
        self.to_frame().to_csv(csv_path, index=False)
        logger.info("wrote %s and %s", json_path, csv_path)
        return json_path, csv_path


# =========================================================================
# REPLICATE EXECUTION
# =========================================================================

def substreams(seed: int, count: int) -> List[np.random.Generator]:
    """Generator r is default_rng(SeedSequence(seed).spawn(count)[r])"""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def run_streams(tasks: Sequence[Callable[[np.random.Generator], Any]], rngs: Sequence[np.random.Generator],
                workers: int = 1, show_progress: bool = False, desc: str = "replicates") -> List[Any]:
    """Run task k with rngs[k] on a thread pool; results come back in task order"""
    results: List[Any] = [None] * len(tasks)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(task, rng): k for k, (task, rng) in enumerate(zip(tasks, rngs))}
        for future in tqdm(as_completed(futures), total=len(futures), desc=desc, disable=not show_progress):
            results[futures[future]] = future.result()
    return results


def _transport_replicate(target: Callable[[np.random.Generator], PointConfig],
                         reference: Callable[[np.random.Generator], PointConfig],
                         g: GroundDistance, N: int) -> Callable[[np.random.Generator], Dict[str, float]]:
    """One replicate: raw distance target-vs-reference and the reference-vs-reference baseline"""
    def task(rng: np.random.Generator) -> Dict[str, float]:
        xs = [target(rng) for _ in range(N)]
        ys = [reference(rng) for _ in range(N)]
        zs = [reference(rng) for _ in range(N)]
        return {
            "raw": empirical_transport(xs, ys, g),
            "baseline": empirical_transport(ys, zs, g),
            "count_tv": d2_lower_bound_counts(xs, ys),
            "mean_count": float(np.mean([x.size for x in xs])),
        }
    return task


# =========================================================================
# EXACT REPRODUCTIONS
# =========================================================================

def _pattern_sum(pmf: np.ndarray, n: int, f: Callable[[np.ndarray], np.ndarray]) -> float:
    bits = bits_of(np.arange(pmf.size), n).astype(float)
    return math.fsum(pmf * f(bits))


def conditioning_gap_model(q: float = 0.1) -> IndicatorModel:
    """Three events with P(B_i) = q, P(B_i B_j) = q^2, P(B_1 B_2 B_3) = 2q^3"""
    pmf = pmf_from_intersections(3, lambda t: {1: q, 2: q * q, 3: 2 * q ** 3}[len(t)])
    return explicit_pmf_model(pmf, neighborhoods=[(0, 1), (0, 1), (0, 2)], name=f"conditioning-gap(q={q})")


def reproduce_conditioning_gap(q: float = 0.1) -> Dict[str, Any]:
    """
    E[I_1 I_2 / (I_3 + 1)] against E[1/(I_3 + 1)] E[I_1 I_2] for a locally dependent triple

    Returns:
        Dict with both exact values, their closed forms q^2 - q^3 and
        (1 - q/2) q^2, and the local-dependence discrepancy of the model
    """
    if not 0 < q < 1:
        raise InvalidInputError(f"q={q} must lie in (0, 1)")
    im = conditioning_gap_model(q)
    pmf = im.exact_pmf
    left = _pattern_sum(pmf, 3, lambda b: b[:, 0] * b[:, 1] / (b[:, 2] + 1.0))
    right = (_pattern_sum(pmf, 3, lambda b: 1.0 / (b[:, 2] + 1.0))
             * _pattern_sum(pmf, 3, lambda b: b[:, 0] * b[:, 1]))
    return {
        "q": q,
        "left": left,
        "right": right,
        "difference": right - left,
        "left_closed_form": q * q - q ** 3,
        "right_closed_form": (1.0 - 0.5 * q) * q * q,
        "equal": bool(abs(left - right) <= 1e-15),
        "local_dependence": check_local_dependence(im),
    }


def relation_flip_pmf(b: float, q: float) -> np.ndarray:
    """Four events with P(B_i) = q and every larger intersection b q^|T|"""
    if not 0 < q < 1 or b <= 0:
        raise InvalidInputError(f"need 0 < q < 1 and b > 0 (got b={b}, q={q})")
    return pmf_from_intersections(4, lambda t: q if len(t) == 1 else b * q ** len(t))


INCREASING_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "first": lambda x: x[:, 0],
    "any": lambda x: x.max(axis=1),
    "sum": lambda x: x.sum(axis=1),
    "pair": lambda x: x[:, 0] * x[:, 1],
    "majority": lambda x: (x.sum(axis=1) >= 2).astype(float),
}


def reproduce_relation_flip(b: float = 2.0, q: float = 0.01) -> Dict[str, Any]:
    """
    Palm indicators of a related family that are not themselves related

    Compares P(I_3 = I_4 = 1 | I_1 = I_2 = 1) = q^2 with
    P(I_3 = I_4 = 1 | I_1 = 1) = b q^2 and checks, for several increasing Phi,
    E[Phi(I_1, I_2, I_3) | I_4 = 1] - E Phi = q (b - 1) [Phi(e_1) + Phi(e_2) + Phi(e_3) - 3 Phi(0)].
    """
    pmf = relation_flip_pmf(b, q)
    bits = bits_of(np.arange(pmf.size), 4).astype(float)
    p12 = math.fsum(pmf * bits[:, 0] * bits[:, 1])
    p1234 = math.fsum(pmf * bits.prod(axis=1))
    p134 = math.fsum(pmf * bits[:, 0] * bits[:, 2] * bits[:, 3])
    conditional = p1234 / p12
    unconditional = p134 / q

    p4 = math.fsum(pmf * bits[:, 3])
    units = np.vstack([np.zeros(3), np.eye(3)])
    identity = {}
    for name, phi in INCREASING_FUNCTIONS.items():
        values = phi(bits[:, :3])
        gap = math.fsum(pmf * bits[:, 3] * values) / p4 - math.fsum(pmf * values)
        at_units = phi(units)
        predicted = q * (b - 1.0) * (at_units[1:].sum() - 3.0 * at_units[0])
        identity[name] = {"gap": gap, "predicted": predicted, "residual": gap - predicted}

    if b > 1:
        relation, direction = "positive", "<"
    elif b < 1:
        relation, direction = "negative", ">"
    else:
        relation, direction = "independent", "="
    observed = "<" if conditional < unconditional - 1e-15 else ">" if conditional > unconditional + 1e-15 else "="
    return {
        "b": b,
        "q": q,
        "conditional": conditional,
        "unconditional": unconditional,
        "conditional_closed_form": q * q,
        "unconditional_closed_form": b * q * q,
        "family_relation": relation,
        "expected_direction": direction,
        "observed_direction": observed,
        "identity": identity,
    }


# =========================================================================
# CONVERGENCE SWEEP
# =========================================================================

def matern_convergence(mu: float, r: float, d: int = 2, geometry: str = "torus",
                       sample_sizes: Sequence[int] = (50, 100, 200), replicates: int = 5,
                       seed: int = 0, workers: int = 1) -> List[Dict[str, float]]:
    """Empirical d2 between the Matérn process and its matched Poisson law for each N"""
    mm = matern_mean_measure(mu, r, d, geometry)
    g = CappedEuclidean(geometry=geometry)
    target = lambda rng: sample_matern(mu, r, d, geometry, rng)[1]
    rows = []
    for k, N in enumerate(sample_sizes):
        task = _transport_replicate(target, mm.sample, g, int(N))
        results = run_streams([task] * replicates, substreams(seed + k, replicates), workers)
        est = EstimateWithError.from_samples([res["raw"] for res in results])
        rows.append({"N": int(N), "estimate": est.value, "stderr": est.stderr})
        logger.info("matern convergence N=%d: %.5f +- %.5f", N, est.value, est.stderr)
    return rows


# =========================================================================
# MODEL BUILDERS
# =========================================================================

def build_indicator_model(params: Mapping[str, Any], pmf_limit: int = 20) -> IndicatorModel:
    """Indicator model described by marked-trials parameters"""
    model = params["model"]
    hoods = params.get("neighborhoods")
    if model in ("independent", "explicit"):
        if model == "independent":
            n = len(params["p"])
        else:
            if params.get("pmf") is None:
                raise InvalidConfigurationError("the explicit model needs a 'pmf' table")
            n = int(round(math.log2(len(params["pmf"]))))
        if params["marks"] == "uniform":
            marks = uniform_marks(n)
        elif params["marks"] == "grid":
            marks = grid_marks(n)
        else:
            raise InvalidConfigurationError(f"marks must be 'uniform' or 'grid', got {params['marks']!r}")
        if model == "independent":
            return independent_trials(params["p"], hoods, marks, pmf_limit)
        return explicit_pmf_model(params["pmf"], hoods, marks, locally_dependent=bool(params["locally_dependent"]))
    if model == "occupancy":
        om = _occupancy_model(params)
        return occupancy_indicator_model(om, pmf_limit)
    if model == "palindrome":
        return palindrome_indicator_model(_palindrome_model(params))
    raise InvalidConfigurationError(f"unknown indicator model {model!r}")


def _occupancy_model(params: Mapping[str, Any]) -> OccupancyModel:
    n, s, m = int(params["n"]), int(params["s"]), int(params["m"])
    if params.get("p") is None:
        return OccupancyModel.uniform(n, s, m)
    return OccupancyModel(n, s, m, np.asarray(params["p"], dtype=float))


def _palindrome_model(params: Mapping[str, Any]) -> PalindromeModel:
    M, L = int(params["M"]), int(params["L"])
    if params.get("probs") is None:
        return PalindromeModel.uniform(M, L)
    return PalindromeModel(M, L, np.asarray(params["probs"], dtype=float))


# =========================================================================
# EXPERIMENT RUNNER
# =========================================================================

class ExperimentRunner:
    """
    Dispatches an ExperimentConfig to its experiment

    Each experiment returns a VerificationReport; errors from the library are
    re-raised with the experiment kind and config hash attached.
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or load_settings()
        self.experiments = {
            "matern": self._run_matern,
            "occupancy": self._run_occupancy,
            "palindrome": self._run_palindrome,
            "marked-trials": self._run_marked_trials,
            "stein-check": self._run_stein_check,
            "palm-check": self._run_palm_check,
            "metrics-selftest": self._run_metrics_selftest,
            "reproduce": self._run_reproduce,
        }

    def run(self, cfg: ExperimentConfig) -> VerificationReport:
        logger.info("running %s (seed=%d, hash=%s)", cfg.kind, cfg.seed, cfg.config_hash())
        start = time.perf_counter()
        try:
            report = self.experiments[cfg.kind](cfg)
        except ApproximationError as exc:
            raise type(exc)(f"{cfg.kind} [{cfg.config_hash()}]: {exc}") from exc
        report.runtime = time.perf_counter() - start
        if report.verdict == "inconclusive":
            logger.warning("%s verdict is inconclusive", cfg.kind)
        elif report.verdict == "violation":
            logger.error("%s verdict is a violation", cfg.kind)
        return report

    # ---------------------------------------------------------------------
    # Shared statistical comparison
    # ---------------------------------------------------------------------

    def _replicates(self, cfg: ExperimentConfig, task: Callable[[np.random.Generator], Any]) -> List[Any]:
        rngs = substreams(cfg.seed, cfg.replicates + 1)[:cfg.replicates]
        return run_streams([task] * cfg.replicates, rngs, cfg.workers,
                           self.settings.show_progress, desc=cfg.kind)

    @staticmethod
    def _bound_rng(cfg: ExperimentConfig) -> np.random.Generator:
        return substreams(cfg.seed, cfg.replicates + 1)[-1]

    def _compare(self, cfg: ExperimentConfig, bound: BoundReport, results: List[Dict[str, float]],
                 **extra) -> VerificationReport:
        estimate = EstimateWithError.from_samples([res["raw"] for res in results])
        baseline = EstimateWithError.from_samples([res["baseline"] for res in results])
        details = {k: float(np.mean([res[k] for res in results])) for k in results[0] if k not in ("raw", "baseline")}
        details.update(extra.pop("details", {}))
        return VerificationReport(cfg, render_verdict(bound, estimate, baseline), bound, estimate, baseline,
                                  details=details, **extra)

    # ---------------------------------------------------------------------
    # Statistical experiments
    # ---------------------------------------------------------------------

    def _run_matern(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        mu, r, d, geometry = float(p["mu"]), float(p["r"]), int(p["d"]), p["geometry"]
        bound = matern_bound(mu, r, d, geometry, int(p["grid"]))
        mm = matern_mean_measure(mu, r, d, geometry, int(p["grid"]))
        target = lambda rng: sample_matern(mu, r, d, geometry, rng)[1]
        results = self._replicates(cfg, _transport_replicate(target, mm.sample, CappedEuclidean(geometry=geometry),
                                                             cfg.samples))
        return self._compare(cfg, bound, results, details={"lambda": mm.total_mass})

    def _run_occupancy(self, cfg: ExperimentConfig) -> VerificationReport:
        om = _occupancy_model(cfg.params)
        bound = occupancy_bound(om)
        atoms = DiscreteAtoms.on_grid(om.pi)
        target = lambda rng: sample_occupancy(om, rng)[2]
        results = self._replicates(cfg, _transport_replicate(target, atoms.sample, CappedEuclidean(), cfg.samples))
        return self._compare(cfg, bound, results, extra_bounds=bound.companions,
                             details={"mu": om.mu, "matched_mass": atoms.total_mass})

    def _run_palindrome(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        details: Dict[str, Any] = {}
        if p.get("fasta"):
            header, codes = read_fasta(p["fasta"])
            summary = sequence_summary(codes, int(p["L"]))
            pm = summary["model"]
            details.update({k: v for k, v in summary.items() if k not in ("model", "indicators")})
            details["header"] = header
            print(f"🧬 {header or p['fasta']}: {summary['observed']} palindromes, "
                  f"lambda={summary['lambda']:.3f}, P(Po >= observed)={summary['upper_tail']:.4g}")
        else:
            pm = _palindrome_model(p)
        lam = pm.lam
        N = cfg.samples

        def task(rng: np.random.Generator) -> Dict[str, Any]:
            counts = np.array([int(sample_dna(pm, rng)[1].sum()) for _ in range(N)])
            reference = rng.poisson(lam, size=N)
            return {
                "raw": tv_distance(count_pmf(counts), poisson(lam)),
                "baseline": tv_distance(count_pmf(reference), poisson(lam)),
                "counts": counts,
            }

        results = self._replicates(cfg, task)
        rng = self._bound_rng(cfg)
        im = palindrome_indicator_model(pm)
        bound = tv_count_bound(im, "exact" if im.exact_pmf is not None else "mc", N, rng)
        d2 = palindrome_bound(pm, p["b2_mode"], N, rng)

        counts = np.concatenate([res.pop("counts") for res in results])
        count_est = EstimateWithError.from_samples(counts)
        b2_se = d2.stderr.get("b2_term", 0.0) * lam / 26.0
        checks = {
            "mean count equals lambda": _residual_check(count_est, 3.0, lam),
            "b2 within its cap": {"passed": bool(d2.diagnostics["b2"] <= d2.diagnostics["b2_cap"] + 3.0 * b2_se),
                                  "value": d2.diagnostics["b2"], "stderr": b2_se,
                                  "target": d2.diagnostics["b2_cap"]},
        }
        details.update({"lambda": lam, "theta": pm.theta, "n": pm.n})
        return self._compare(cfg, bound, results, extra_bounds=(d2,) + d2.companions, checks=checks,
                             details=details)

    def _run_marked_trials(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        im = build_indicator_model(p, self.settings.exact_pmf_limit)
        mode = p["mode"] if p["mode"] != "auto" else ("exact" if im.exact_pmf is not None else "mc")
        rng = self._bound_rng(cfg)
        N = cfg.samples

        bounds = [d2_bound_marked_trials(im, mode, N, rng, local_shortcut=im.locally_dependent)]
        if im.relation == "negative" and im.palm_coupler is not None:
            negrel_mode = "exact" if mode == "exact" and im.palm_law is not None else "mc"
            bounds.append(d2_bound_negrel(im, N, rng, negrel_mode))
        if im.locally_dependent:
            bounds.append(d2_bound_local(im, mode, N, rng))
        bounds.sort(key=lambda b: b.total)
        extra = tuple(bounds[1:]) + (tv_count_bound(im, mode, N, rng),)

        g = im.mark_distance
        task = _transport_replicate(lambda r: sample_marked_trials(im, r), lambda r: sample_lifted_poisson(im, r), g, N)
        results = self._replicates(cfg, task)
        return self._compare(cfg, bounds[0], results, extra_bounds=extra,
                             details={"lambda": im.lam, "n": im.n, "bound_mode": mode})

    # ---------------------------------------------------------------------
    # Identity checks
    # ---------------------------------------------------------------------

    def _run_stein_check(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        sigmas = float(p["sigmas"])
        N = cfg.samples
        jobs: List[Tuple[str, Callable[[np.random.Generator], EstimateWithError]]] = []
        for lam in p["lams"]:
            lam = float(lam)
            mm = BoxDensity(1, lam)
            K = max(1, math.ceil(lam))
            s = float(p["s"])
            functionals = [
                CountFunctional(lambda n, K=K: float(min(n, K)), name=f"min(|xi|, {K})"),
                CountFunctional(lambda n, s=s: s ** n, name=f"{s}^|xi|"),
                CountFunctional(lambda n, K=K: float(min(n, K)), name=f"min(xi(B), {K})",
                                region=box_region(*p["region"])),
            ]
            for h in functionals:
                jobs.append((f"poisson lambda={lam:g} {h.name}",
                             lambda rng, mm=mm, h=h: check_stein_identity(mm, h, N, rng)))

        mu = float(p["power_mu"])
        r = 0.5 * (float(p["power_theta"]) / (mu * KAPPA[2])) ** 0.5
        power_mm = matern_mean_measure(mu, r, 2, "torus")
        K = math.ceil(power_mm.total_mass + 10.0 * math.sqrt(power_mm.total_mass) + 10.0)
        square = CountFunctional(lambda n: float(min(n, K)) ** 2, name="min(|xi|, K)^2")
        power_name = f"matern power mu={mu:g} r={r:.4g}"
        jobs.append((power_name, lambda rng: check_stein_identity(
            power_mm, square, N, rng, sampler=lambda g: sample_matern(mu, r, 2, "torus", g)[1])))

        estimates = run_streams([job for _, job in jobs], substreams(cfg.seed, len(jobs)), cfg.workers,
                                self.settings.show_progress, desc="stein")
        checks = {}
        for (name, _), est in zip(jobs, estimates):
            if name == power_name:
                rejected = abs(est.value) > sigmas * est.stderr
                checks[name] = {"passed": bool(rejected), "power": True, "value": est.value, "stderr": est.stderr}
            else:
                checks[name] = _residual_check(est, sigmas)
        return VerificationReport(cfg, checks_verdict(checks), checks=checks,
                                  details={"power_r": r, "power_lambda": power_mm.total_mass})

    def _run_palm_check(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        sigmas = float(p["sigmas"])
        N = cfg.samples
        trials = independent_trials([0.1, 0.3, 0.5, 0.2])
        urns = occupancy_indicator_model(OccupancyModel.uniform(4, 3, 0))
        gap_model = conditioning_gap_model(0.1)
        inverse_model = occupancy_indicator_model(OccupancyModel.uniform(10, 20, 0))

        jobs: List[Tuple[str, Callable[[np.random.Generator], Any]]] = []
        for lam in p["lams"]:
            mm = BoxDensity(1, float(lam))
            jobs.append((f"poisson lambda={float(lam):g} f=|xi|",
                         lambda rng, mm=mm: check_palm_identity(mm, lambda a, xi: float(xi.size), N, rng)))
        jobs += [
            ("independent f=I_(i+1)", lambda rng: check_palm_identity(
                trials, lambda i, I: float(I[(i + 1) % 4]), N, rng)),
            ("occupancy f=1", lambda rng: check_palm_identity(urns, lambda i, I: 1.0, N, rng)),
            ("conditioning-gap f=|I|", lambda rng: check_palm_identity(
                gap_model, lambda i, I: float(np.sum(I)), N, rng)),
            ("occupancy inverse moment", lambda rng: inverse_moment_mc(inverse_model, N, rng)),
            ("conditioning-gap palm marginal", lambda rng: np.array(
                [palm_sample(gap_model, 0, rng).palm for _ in range(N)])),
        ]
        results = run_streams([job for _, job in jobs], substreams(cfg.seed, len(jobs)), cfg.workers,
                              self.settings.show_progress, desc="palm")

        checks: Dict[str, Dict[str, Any]] = {}
        for (name, _), res in zip(jobs, results):
            if name == "occupancy inverse moment":
                limit = negrel_inverse_moment(inverse_model.lam)
                checks[name] = {"passed": bool(res.value <= limit + sigmas * res.stderr),
                                "value": res.value, "stderr": res.stderr, "target": limit}
            elif name == "conditioning-gap palm marginal":
                codes = (res.astype(np.int64) << np.arange(3)).sum(axis=1)
                empirical = np.bincount(codes, minlength=8) / N
                exact = np.where(np.arange(8) & 1, gap_model.exact_pmf, 0.0) / gap_model.p[0]
                tv = 0.5 * float(np.abs(empirical - exact).sum())
                limit = max(0.01, math.sqrt(8.0 / N))
                checks[name] = {"passed": tv <= limit, "value": tv, "target": limit}
            else:
                checks[name] = _residual_check(res, sigmas)
        checks["conditioning-gap local dependence"] = _exact_check(check_local_dependence(gap_model), 0.0)
        checks["conditioning-gap epsilon1"] = _exact_check(epsilon1_exact(gap_model), 0.0)
        return VerificationReport(cfg, checks_verdict(checks), checks=checks)

    def _run_metrics_selftest(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        rngs = substreams(cfg.seed, 3)
        suites = {
            "assignment": _suite_assignment(rngs[0], instances=int(p["instances"]), max_size=int(p["max_size"])),
            "metric-axioms": _suite_metric_axioms(rngs[1], triples=int(p["triples"])),
            "estimators": _suite_estimators(rngs[2]),
        }
        checks = {name: {"passed": s.passed, "value": float(s.checks), "failures": s.failures[:20]}
                  for name, s in suites.items()}
        details = {f"{name}.{k}": v for name, s in suites.items() for k, v in s.values.items()}
        return VerificationReport(cfg, checks_verdict(checks), checks=checks, details=details)

    def _run_reproduce(self, cfg: ExperimentConfig) -> VerificationReport:
        p = cfg.params
        which = REPRODUCTIONS.get(p["which"])
        if which == "conditioning-gap":
            q = 0.1 if p["q"] is None else float(p["q"])
            res = reproduce_conditioning_gap(q)
            checks = {
                "left closed form": _exact_check(res["left"], res["left_closed_form"]),
                "right closed form": _exact_check(res["right"], res["right_closed_form"]),
                "values differ": {"passed": not res["equal"], "value": res["difference"]},
                "locally dependent": _exact_check(res["local_dependence"], 0.0),
            }
        elif which == "relation-flip":
            q = 0.01 if p["q"] is None else float(p["q"])
            res = reproduce_relation_flip(float(p["b"]), q)
            checks = {
                "conditional closed form": _exact_check(res["conditional"], res["conditional_closed_form"]),
                "unconditional closed form": _exact_check(res["unconditional"], res["unconditional_closed_form"]),
                "direction": {"passed": res["observed_direction"] == res["expected_direction"]},
            }
            for name, row in res["identity"].items():
                checks[f"increasing identity {name}"] = _exact_check(row["residual"], 0.0)
        else:
            raise InvalidConfigurationError(f"unknown reproduction {p['which']!r}")
        return VerificationReport(cfg, checks_verdict(checks), checks=checks, details=res)


def run_experiment(cfg: ExperimentConfig, settings: Optional[Settings] = None) -> VerificationReport:
    """Run one experiment with the default runner"""
    return ExperimentRunner(settings).run(cfg)


# =========================================================================
# AD-HOC DISTANCES
# =========================================================================

def ground_for(carrier: Carrier, geometry: str = "box", ground: str = "capped") -> GroundDistance:
    inner: GroundDistance = ZeroPseudo() if ground == "zero" else CappedEuclidean(geometry=geometry)
    return LiftedMark(inner) if carrier.kind == "lifted" else inner


def load_config_file(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read configuration file {path}: {exc}") from exc


def metric_between(name: str, a_path: str, b_path: str, geometry: str = "box", ground: str = "capped",
                   seed: Optional[int] = None) -> float:
    """
    rho1, rho1dd or d2 between configuration files

    rho1/rho1dd files hold one configuration; d2 files hold a list of them.
    Lists of different lengths are padded by resampling with seed.
    """
    a, b = load_config_file(a_path), load_config_file(b_path)
    if name in ("rho1", "rho1dd"):
        xi1 = config_from_json(a)
        xi2 = config_from_json(b, xi1.carrier)
        g = ground_for(xi1.carrier, geometry, ground)
        return rho1(xi1, xi2, g) if name == "rho1" else rho1_dd(xi1, xi2, g)
    if name == "d2":
        if not isinstance(a, list) or not isinstance(b, list) or not a or not b:
            raise InvalidInputError("d2 files must hold nonempty lists of configurations")
        first = config_from_json(a[0])
        xs = [first] + [config_from_json(item, first.carrier) for item in a[1:]]
        ys = [config_from_json(item, first.carrier) for item in b]
        rng = np.random.default_rng(seed) if seed is not None else None
        return estimate_d2(xs, ys, ground_for(first.carrier, geometry, ground), rng).value
    raise InvalidInputError(f"unknown metric {name!r}")


# =========================================================================
# SELF-TEST SUITES
# =========================================================================

class SuiteResult:
    """Pass/fail bookkeeping of one self-test suite"""

    def __init__(self):
        self.checks = 0
        self.failures: List[str] = []
        self.values: Dict[str, float] = {}

    def expect(self, ok: bool, label: str) -> None:
        self.checks += 1
        if not ok:
            self.failures.append(label)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checks": self.checks, "failures": self.failures,
                "values": _plain(self.values)}


def _random_config(rng: np.random.Generator, max_points: int = 4) -> PointConfig:
    return PointConfig(Carrier.real(1), rng.random(int(rng.integers(0, max_points + 1))))


def _suite_assignment(rng: np.random.Generator, factor: float = 1.0, instances: int = 200,
                      max_size: int = 7) -> SuiteResult:
    suite = SuiteResult()
    worst = 0.0
    for k in range(instances):
        n = int(rng.integers(1, max_size + 1))
        m = int(rng.integers(n, max_size + 1))
        cost = rng.random((n, m)) + 0.01
        solved = assignment_solve(cost).cost * factor
        brute = brute_force_assignment(cost).cost
        worst = max(worst, abs(solved - brute))
        suite.expect(abs(solved - brute) <= 1e-12, f"instance {k} ({n}x{m}): {solved} vs {brute}")
    suite.values["max_gap"] = worst
    return suite


def _suite_metric_axioms(rng: np.random.Generator, factor: float = 1.0, triples: int = 1000) -> SuiteResult:
    suite = SuiteResult()
    grounds = {
        "box": (CappedEuclidean("box"), Carrier.real(1)),
        "torus": (CappedEuclidean("torus"), Carrier.real(1)),
        "torus-2d": (CappedEuclidean("torus"), Carrier.real(2)),
        "zero": (ZeroPseudo(), Carrier.real(1)),
    }
    for name, (g, carrier) in grounds.items():
        pts = PointConfig(carrier, rng.random((60, carrier.dim)))
        D = g.pairwise(pts, pts)
        lhs = D[:, None, :]
        rhs = factor * (D[:, :, None] + D[None, :, :])
        suite.expect(bool(np.all(lhs <= rhs + 1e-12)), f"{name}: triangle inequality")
        suite.expect(bool(np.allclose(D, D.T)), f"{name}: symmetry")
        suite.expect(bool(np.all(np.diag(D) == 0)), f"{name}: zero diagonal")
        suite.expect(bool(np.all((D >= 0) & (D <= 1))), f"{name}: range")

    g = CappedEuclidean()
    rho1_failures = 0
    for k in range(triples):
        x, y, z = (_random_config(rng) for _ in range(3))
        suite.expect(rho1_dd(x, z, g) <= factor * (rho1_dd(x, y, g) + rho1_dd(y, z, g)) + 1e-12,
                     f"rho1dd triangle, triple {k}")
        if rho1(x, z, g) > rho1(x, y, g) + rho1(y, z, g) + 1e-12:
            rho1_failures += 1
    suite.values["rho1_triangle_failures"] = float(rho1_failures)
    return suite


def _suite_estimators(rng: np.random.Generator, factor: float = 1.0) -> SuiteResult:
    suite = SuiteResult()
    left = [[BoxDensity(1, 2.0).sample(rng) for _ in range(30)] for _ in range(3)]
    right = [[BoxDensity(1, 3.0).sample(rng) for _ in range(30)] for _ in range(3)]
    zero = estimate_d2(left, right, ZeroPseudo()).value * factor
    counts = d2_lower_bound_counts(left, right)
    suite.expect(abs(zero - counts) <= 1e-12, f"zero ground: {zero} vs count TV {counts}")
    capped = estimate_d2(left, right, CappedEuclidean()).value * factor
    suite.expect(capped >= counts - 1e-12, f"capped estimate {capped} below count TV {counts}")
    suite.values.update(zero_ground=zero, count_tv=counts, capped=capped)
    return suite


def _suite_inverse_moments(rng: np.random.Generator, factor: float = 1.0) -> SuiteResult:
    suite = SuiteResult()
    for k in range(25):
        a = float(rng.uniform(0.05, 20.0))
        exact = -math.expm1(-a) / a
        suite.expect(exact <= factor * inverse_moment_bound(1.0 + a, a) + 1e-15, f"1 + Po({a:.4g})")
        trials, p = int(rng.integers(1, 60)), float(rng.uniform(0.01, 0.99))
        exact = (1.0 - (1.0 - p) ** (trials + 1)) / ((trials + 1) * p)
        suite.expect(exact <= factor * inverse_moment_bound(1.0 + trials * p, trials * p * (1 - p)) + 1e-15,
                     f"1 + Bin({trials}, {p:.4g})")
    for n in range(1, 51):
        for p in (0.01, 0.05, 0.1, 0.2, 0.3, 0.5):
            exact = (1.0 - (1.0 - p) ** (n + 1)) / ((n + 1) * p)
            suite.expect(exact < factor * negrel_inverse_moment(n * p), f"Bin({n}, {p}) against (1-e^-lam)/lam")
    return suite


def _suite_stein_identity(rng: np.random.Generator, factor: float = 1.0, N: int = 4000) -> SuiteResult:
    suite = SuiteResult()
    for lam in (0.5, 2.0, 10.0):
        truth = BoxDensity(1, lam)
        declared = BoxDensity(1, lam * factor)
        K = max(1, math.ceil(lam))
        for h in (CountFunctional(lambda n, K=K: float(min(n, K)), name="truncated"),
                  CountFunctional(lambda n: 0.5 ** n, name="geometric"),
                  CountFunctional(lambda n, K=K: float(min(n, K)), name="region",
                                  region=box_region(0.0, 0.5))):
            est = check_stein_identity(declared, h, N, rng, sampler=truth.sample)
            suite.values[f"{lam:g}/{h.name}"] = est.value
            suite.expect(abs(est.value) <= 4.0 * est.stderr + 1e-12, f"lambda={lam:g} {h.name}: {est.value:.4g}")
    return suite


def _suite_palm_identity(rng: np.random.Generator, factor: float = 1.0, N: int = 4000) -> SuiteResult:
    suite = SuiteResult()
    p = np.array([0.1, 0.3, 0.5, 0.2])
    if factor == 1.0:
        trials = independent_trials(p)
    else:
        trials = IndicatorModel(p=p * factor, neighborhoods=tuple((i,) for i in range(4)),
                                joint_sampler=lambda g: g.random(4) < p, name="misdeclared")
    cases = {
        "independent": (trials, lambda i, I: float(I[(i + 1) % 4])),
        "poisson": (BoxDensity(1, 2.0), lambda a, xi: float(xi.size)),
        "gap-model": (conditioning_gap_model(0.1), lambda i, I: 1.0),
    }
    for name, (process, f) in cases.items():
        est = check_palm_identity(process, f, N, rng)
        suite.values[name] = est.value
        suite.expect(abs(est.value) <= 4.0 * est.stderr + 1e-12, f"{name}: residual {est.value:.4g}")
    return suite


def _suite_occupancy(rng: np.random.Generator, factor: float = 1.0) -> SuiteResult:
    suite = SuiteResult()
    for k in range(4):
        p = rng.dirichlet(np.ones(8))
        om = OccupancyModel(8, 10, k % 2, p)
        grouped, brute = mu_prime(om) * factor, _mu_prime_bruteforce(om)
        suite.expect(abs(grouped - brute) <= 1e-10 * max(1.0, brute), f"mu' grouped {grouped} vs brute {brute}")
    for n in (50, 100):
        for s in (2 * n, 4 * n):
            for m in (0, 1):
                report = occupancy_bound(OccupancyModel.uniform(n, s, m))
                explicit = report.companions[0]
                if explicit.valid and math.isfinite(explicit.total):
                    suite.expect(report.total <= explicit.total * factor, f"(n={n}, s={s}, m={m}) bound order")
                lower = report.diagnostics.get("mu_prime_lower_bound")
                if lower is not None:
                    suite.expect(report.diagnostics["mu_prime"] * factor >= lower - 1e-12,
                                 f"(n={n}, s={s}, m={m}) mu' lower bound")
    return suite


def _suite_bounds(rng: np.random.Generator, factor: float = 1.0) -> SuiteResult:
    suite = SuiteResult()
    reports = [
        matern_bound(100.0, 0.005, 2, "torus"),
        occupancy_bound(OccupancyModel.uniform(20, 40, 0)),
        palindrome_bound(PalindromeModel.uniform(150_000, 5)),
        tv_count_bound(independent_trials([0.1, 0.2, 0.3]), "exact"),
        d2_bound_marked_trials(conditioning_gap_model(0.1), "exact"),
    ]
    for report in reports:
        suite.expect(abs(report.total - factor * report.recombine()) <= 1e-12 * max(1.0, report.total),
                     f"{report.tag} recombination")
        suite.values[report.tag] = report.total
    totals = [matern_bound(100.0, r, 2, "torus").total for r in np.linspace(0.0, 0.02, 9)]
    suite.expect(all(a <= b for a, b in zip(totals, totals[1:])), "matern bound monotone in r")
    suite.expect(totals[0] == 0.0, "matern bound is 0 at r = 0")
    return suite


def _suite_reproductions(rng: np.random.Generator, factor: float = 1.0) -> SuiteResult:
    suite = SuiteResult()
    gap = reproduce_conditioning_gap(0.1)
    suite.expect(abs(gap["left"] * factor - 0.009) <= 1e-12, f"left {gap['left']}")
    suite.expect(abs(gap["right"] * factor - 0.0095) <= 1e-12, f"right {gap['right']}")
    suite.values.update(left=gap["left"], right=gap["right"])
    for b, direction in ((2.0, "<"), (1.0, "="), (0.5, ">")):
        flip = reproduce_relation_flip(b, 0.01)
        suite.expect(abs(flip["conditional"] * factor - 1e-4) <= 1e-12, f"b={b} conditional")
        suite.expect(abs(flip["unconditional"] * factor - b * 1e-4) <= 1e-12, f"b={b} unconditional")
        suite.expect(flip["observed_direction"] == direction, f"b={b} direction")
        for name, row in flip["identity"].items():
            suite.expect(abs(row["residual"]) <= 1e-12, f"b={b} identity {name}")
    return suite


def _suite_local_dependence(rng: np.random.Generator, factor: float = 1.0) -> SuiteResult:
    suite = SuiteResult()
    models = [palindrome_indicator_model(PalindromeModel.uniform(19, 2)), conditioning_gap_model(0.1)]
    if factor != 1.0:
        models.append(explicit_pmf_model(relation_flip_pmf(2.0, 0.01), name="relation-flip"))
    for im in models:
        worst, eps1 = check_local_dependence(im), epsilon1_exact(im)
        suite.values[im.name] = worst
        suite.expect(worst <= 1e-12 and eps1 <= 1e-12, f"{im.name}: discrepancy {worst:.3g}")
    return suite


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "assignment": _suite_assignment,
    "metric-axioms": _suite_metric_axioms,
    "estimators": _suite_estimators,
    "inverse-moments": _suite_inverse_moments,
    "stein-identity": _suite_stein_identity,
    "palm-identity": _suite_palm_identity,
    "occupancy": _suite_occupancy,
    "bounds": _suite_bounds,
    "reproductions": _suite_reproductions,
    "local-dependence": _suite_local_dependence,
}


def selftest(seed: Optional[int] = None, fault: Optional[str] = None,
             suites: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """
    Run the invariant suites

    Args:
        seed: Master seed (PPA_SEED by default); suite k uses substream k
        fault: Suite whose checked quantity is scaled by 0.5 (test of the tests)
        suites: Subset of SUITES to run, all by default

    Returns:
        JSON-ready summary; identical for identical arguments
    """
    seed = load_settings().seed if seed is None else seed
    names = list(SUITES) if suites is None else list(suites)
    for name in names + ([fault] if fault else []):
        if name not in SUITES:
            raise InvalidInputError(f"unknown self-test suite {name!r}; expected one of {list(SUITES)}")
    rngs = substreams(seed, len(SUITES))
    results = {}
    for k, name in enumerate(SUITES):
        if name not in names:
            continue
        factor = 0.5 if name == fault else 1.0
        results[name] = SUITES[name](rngs[k], factor).to_dict()
        logger.info("self-test %s: %s", name, "passed" if results[name]["passed"] else "FAILED")
    return {
        "seed": seed,
        "fault": fault,
        "passed": all(r["passed"] for r in results.values()),
        "suites": results,
    }


def selftest_json(summary: Mapping[str, Any]) -> str:
    return json.dumps(_plain(summary), sort_keys=True, indent=2)
