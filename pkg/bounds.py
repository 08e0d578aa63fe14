"""
Approximation Bounds
Itemized Stein-method error bounds for Poisson process approximation
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidConfigurationError, InvalidInputError
from metrics import EstimateWithError
from occupancy import OccupancyModel, occupancy_pair_probability, occupancy_pi
from palindromes import PalindromeModel, palindrome_indicators, palindrome_pair_probability
from palm import (check_local_dependence, epsilon1_exact, epsilon2_exact, epsilon2_mc,
                  palm_sample)
from processes import KAPPA, DiscreteAtoms, matern_intensity, matern_mean_measure
from trials import IndicatorModel, bits_of, iter_patterns

logger = logging.getLogger(__name__)

LOCAL_TOLERANCE = 1e-12


# =========================================================================
# BOUND REPORT
# =========================================================================

@dataclass(frozen=True)
class BoundReport:
    """
    Itemized bound: total = sum(summands) + min(alternatives)

    terms holds every named value; summands and alternatives name the ones
    that enter the total. flags are validity conditions of the bound.
    """
    tag: str
    terms: Dict[str, float]
    summands: Tuple[str, ...]
    alternatives: Tuple[str, ...] = ()
    flags: Dict[str, bool] = field(default_factory=dict)
    stderr: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, float] = field(default_factory=dict)
    companions: Tuple["BoundReport", ...] = ()
    total: float = float("nan")

    @classmethod
    def build(cls, tag: str, terms: Dict[str, float], summands: Sequence[str],
              alternatives: Sequence[str] = (), **extra) -> "BoundReport":
        report = cls(tag, dict(terms), tuple(summands), tuple(alternatives), **extra)
        object.__setattr__(report, "total", report.recombine())
        return report

    def recombine(self) -> float:
        total = math.fsum(self.terms[name] for name in self.summands)
        if self.alternatives:
            total += min(self.terms[name] for name in self.alternatives)
        return total

    @property
    def chosen_alternative(self) -> Optional[str]:
        if not self.alternatives:
            return None
        return min(self.alternatives, key=lambda name: self.terms[name])

    @property
    def vacuous(self) -> bool:
        return not self.total < 1.0

    @property
    def valid(self) -> bool:
        return all(self.flags.values())

    @property
    def total_stderr(self) -> float:
        names = list(self.summands)
        if self.chosen_alternative is not None:
            names.append(self.chosen_alternative)
        return math.sqrt(math.fsum(self.stderr.get(name, 0.0) ** 2 for name in names))

    def rows(self) -> List[Tuple[str, float]]:
        """Flat (name, value) rows for CSV output"""
        rows = [(f"{self.tag}.term.{k}", v) for k, v in self.terms.items()]
        rows += [(f"{self.tag}.stderr.{k}", v) for k, v in self.stderr.items()]
        rows += [(f"{self.tag}.diagnostic.{k}", v) for k, v in self.diagnostics.items()]
        rows.append((f"{self.tag}.total", self.total))
        for companion in self.companions:
            rows += companion.rows()
        return rows

    def to_dict(self) -> Dict:
        return {
            "tag": self.tag,
            "terms": self.terms,
            "summands": list(self.summands),
            "alternatives": list(self.alternatives),
            "total": self.total,
            "total_stderr": self.total_stderr,
            "vacuous": self.vacuous,
            "valid": self.valid,
            "flags": self.flags,
            "stderr": self.stderr,
            "diagnostics": self.diagnostics,
            "companions": [c.to_dict() for c in self.companions],
        }


# =========================================================================
# STEIN FACTORS AND INVERSE MOMENTS
# =========================================================================

@dataclass(frozen=True)
class SteinFactors:
    """Magnitude and first-difference bounds of the Stein solutions at lambda"""
    lam: float
    tv_difference: float
    tv_magnitude: float
    d2_magnitude: float

    def d2_difference(self, n):
        """5/lambda + 3/(n + 1); accepts arrays"""
        return 5.0 / self.lam + 3.0 / (np.asarray(n, dtype=float) + 1.0)


def stein_factors(lam: float) -> SteinFactors:
    if not lam > 0 or not np.isfinite(lam):
        raise InvalidInputError(f"lambda={lam} must be finite and > 0")
    return SteinFactors(
        lam=float(lam),
        tv_difference=-math.expm1(-lam) / lam,
        tv_magnitude=min(1.0, math.sqrt(2.0 / (math.e * lam))),
        d2_magnitude=min(1.0, 1.65 / math.sqrt(lam)),
    )


def inverse_moment_bound(mean: float, var: float) -> float:
    """
    Upper bound on E(1/X) for X >= 1 from its mean and variance

    Args:
        mean: E X, at least 1
        var: Var X, nonnegative
    """
    if mean < 1:
        raise InvalidInputError(f"mean={mean} must be >= 1")
    if var < 0:
        raise InvalidInputError(f"variance={var} must be >= 0")
    kappa = var / mean
    return (math.sqrt(kappa * (1.0 + kappa / 4.0)) + 1.0 + kappa / 2.0) / mean


def negrel_inverse_moment(lam: float) -> float:
    """(1 - e^-lambda)/lambda, bounding E 1/(sum I + 1) for negatively related indicators"""
    if lam < 0:
        raise InvalidInputError(f"lambda={lam} must be >= 0")
    if lam == 0:
        return 1.0
    return -math.expm1(-lam) / lam


# =========================================================================
# SHARED PIECES FOR INDICATOR MODELS
# =========================================================================

def _neighbor_counts(im: IndicatorModel, X: np.ndarray) -> np.ndarray:
    """(k, n) array of sum_{j in A_i} X_j"""
    return np.asarray((im.adjacency @ X.T.astype(float)).T)


def _pair_values(im: IndicatorModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per pattern: sum_i I_i (sum_{j in A_i} I_j - 1) and the matrix of V_i"""
    Xf = X.astype(float)
    inside = _neighbor_counts(im, X)
    v = Xf.sum(axis=1, keepdims=True) - inside
    return (Xf * (inside - 1.0)).sum(axis=1), v


def _neighbor_pairs(im: IndicatorModel) -> Tuple[np.ndarray, np.ndarray]:
    coo = im.adjacency.tocoo()
    return coo.row.astype(np.int64), coo.col.astype(np.int64)


def _union_counts(im: IndicatorModel, X: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """(k, pairs) counts of I over A_i union A_j for each neighbor pair (i, j)"""
    Xf = X.astype(float)
    if im.band is not None:
        prefix = np.concatenate([np.zeros((Xf.shape[0], 1)), np.cumsum(Xf, axis=1)], axis=1)
        lo = np.maximum(0, np.minimum(rows, cols) - im.band)
        hi = np.minimum(im.n - 1, np.maximum(rows, cols) + im.band)
        return prefix[:, hi + 1] - prefix[:, lo]
    A = im.adjacency
    union = ((A[rows] + A[cols]) > 0).astype(float)
    return np.asarray((union @ Xf.T).T)


def _shortcut_values(im: IndicatorModel, X: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Per pattern: sum_{(i,j)} 3/(V_ij + 1) p_i p_j with V_ij the count outside A_i union A_j"""
    v_ij = X.sum(axis=1, keepdims=True) - _union_counts(im, X, rows, cols)
    return (3.0 / (v_ij + 1.0)) @ (im.p[rows] * im.p[cols])


def _iter_samples(im: IndicatorModel, N: int, rng: np.random.Generator, batch: int = 64):
    for start in range(0, N, batch):
        yield np.vstack([im.sample(rng) for _ in range(min(batch, N - start))])


def _require_rng(rng: Optional[np.random.Generator], mode: str) -> np.random.Generator:
    if mode == "mc" and rng is None:
        raise InvalidInputError("Monte Carlo mode needs a random generator")
    return rng


def _is_locally_dependent(im: IndicatorModel) -> bool:
    if im.locally_dependent:
        return True
    return im.exact_pmf is not None and check_local_dependence(im) <= LOCAL_TOLERANCE


def _epsilon_terms(im: IndicatorModel, mode: str, N: int, rng: Optional[np.random.Generator],
                   magnitude: float, difference_form: str, prefactor2: float) -> Tuple[Dict[str, float], Dict[str, float]]:
    """Available epsilon alternatives (with stderr) for the count-TV and d2 bounds"""
    terms: Dict[str, float] = {}
    errors: Dict[str, float] = {}
    if im.locally_dependent:
        logger.debug("%s: flagged locally dependent, epsilon1 = 0", im.name)
        terms["epsilon1"] = 0.0
        return terms, errors
    if im.exact_pmf is not None:
        terms["epsilon1"] = magnitude * epsilon1_exact(im)
    if im.identity_outside:
        terms["epsilon2"] = 0.0
    elif mode == "exact" and im.palm_law is not None:
        terms["epsilon2"] = prefactor2 * epsilon2_exact(im, difference_form)
    elif im.palm_coupler is not None and mode == "mc":
        est = epsilon2_mc(im, N, rng, difference_form)
        terms["epsilon2"] = prefactor2 * est.value
        errors["epsilon2"] = prefactor2 * est.stderr
    if not terms:
        raise InvalidConfigurationError(
            f"{im.name}: neither epsilon is computable (needs an exact pmf or a Palm coupler)")
    return terms, errors


# =========================================================================
# MARKED DEPENDENT TRIALS
# =========================================================================

def d2_bound_marked_trials(im: IndicatorModel, mode: str = "exact", N: int = 200,
                           rng: Optional[np.random.Generator] = None,
                           local_shortcut: bool = False) -> BoundReport:
    """
    d2 bound for marked dependent trials

    pair_term  = E sum_i sum_{j in A_i, j != i} (5/lam + 3/(V_i + 1)) I_i I_j
    epsilon    = min(epsilon1, epsilon2)
    mean_term  = sum_i sum_{j in A_i} (5/lam + E[3/(V_i + 1) | I_j = 1]) p_i p_j

    Args:
        im: Indicator model
        mode: 'exact' (enumerate the pmf) or 'mc'
        N: Monte Carlo draws
        rng: Random generator for 'mc'
        local_shortcut: Replace E[3/(V_i+1) | I_j = 1] by E 3/(V_ij + 1), only
                        allowed for locally dependent models

    Returns:
        BoundReport tagged 'marked-trials'
    """
    rng = _require_rng(rng, mode)
    factors = stein_factors(im.lam)
    lam = im.lam
    rows, cols = _neighbor_pairs(im)
    base_mean = 5.0 / lam * math.fsum(im.p[rows] * im.p[cols])
    if local_shortcut and not _is_locally_dependent(im):
        raise InvalidConfigurationError(f"{im.name}: the V_ij shortcut needs a locally dependent model")

    stderr: Dict[str, float] = {}
    if mode == "exact":
        if im.exact_pmf is None:
            raise InvalidConfigurationError(f"{im.name}: exact mode needs an exact pmf")
        pair_term = 0.0
        conditional = np.zeros((im.n, im.n))
        shortcut = 0.0
        for probs, X in iter_patterns(im.exact_pmf, im.n):
            Xf = X.astype(float)
            inside = _neighbor_counts(im, X)
            v = Xf.sum(axis=1, keepdims=True) - inside
            weight = (5.0 / lam + 3.0 / (v + 1.0)) * Xf * (inside - 1.0)
            pair_term += math.fsum(probs * weight.sum(axis=1))
            # conditional[i, j] = E[3/(V_i+1) I_j]
            conditional += (3.0 / (v + 1.0)).T @ (probs[:, None] * Xf)
            if local_shortcut:
                shortcut += math.fsum(probs * _shortcut_values(im, X, rows, cols))
        if local_shortcut:
            mean_term = base_mean + shortcut
        else:
            mean_term = base_mean + math.fsum(conditional[rows, cols] * im.p[rows])
    elif mode == "mc":
        pair_samples = []
        mean_samples = []
        for X in _iter_samples(im, N, rng):
            Xf = X.astype(float)
            inside = _neighbor_counts(im, X)
            v = Xf.sum(axis=1, keepdims=True) - inside
            pair_samples.append(((5.0 / lam + 3.0 / (v + 1.0)) * Xf * (inside - 1.0)).sum(axis=1))
            if local_shortcut:
                mean_samples.append(_shortcut_values(im, X, rows, cols))
        if not local_shortcut:
            mean_samples.append(_palm_mean_samples(im, N, rng))
        pair_est = EstimateWithError.from_samples(np.concatenate(pair_samples))
        mean_est = EstimateWithError.from_samples(np.concatenate(mean_samples))
        pair_term = pair_est.value
        mean_term = base_mean + mean_est.value
        stderr.update(pair_term=pair_est.stderr, mean_term=mean_est.stderr)
    else:
        raise InvalidInputError(f"mode must be 'exact' or 'mc', got {mode!r}")

    eps, eps_err = _epsilon_terms(im, mode, N, rng, factors.d2_magnitude, "d2", 1.0)
    stderr.update(eps_err)
    terms = {"pair_term": pair_term, "mean_term": mean_term, **eps}
    return BoundReport.build(
        "marked-trials", terms, ("pair_term", "mean_term"), tuple(sorted(eps)),
        flags={"epsilon available": True},
        stderr=stderr,
        diagnostics={"lambda": lam, "n": float(im.n)},
    )


def _palm_mean_samples(im: IndicatorModel, N: int, rng: np.random.Generator) -> np.ndarray:
    """Per round: sum_j p_j sum_{i: j in A_i} p_i 3/(W_i^{(j)} + 1) from Palm draws at j"""
    At = im.adjacency.T.tocsr()
    samples = np.zeros(N)
    for k in range(N):
        for j in np.flatnonzero(im.p > 0):
            palm = palm_sample(im, int(j), rng).palm.astype(float)
            owners = At[j].indices
            w = palm.sum() - np.asarray(im.adjacency[owners] @ palm).ravel()
            samples[k] += im.p[j] * math.fsum(im.p[owners] * 3.0 / (w + 1.0))
    return samples


def d2_bound_local(im: IndicatorModel, mode: str = "exact", N: int = 200,
                   rng: Optional[np.random.Generator] = None) -> BoundReport:
    """
    d2 bound for locally dependent trials

    E sum_i (5/lam + 3/(V_i + 1)) I_i (sum_{j in A_i} I_j - 1)
      + sum_i sum_{j in A_i} (5/lam + E 3/(V_ij + 1)) p_i p_j
    """
    if not _is_locally_dependent(im):
        raise InvalidConfigurationError(f"{im.name}: not shown to be locally dependent")
    report = d2_bound_marked_trials(im, mode, N, rng, local_shortcut=True)
    terms = {k: report.terms[k] for k in ("pair_term", "mean_term")}
    return BoundReport.build(
        "local-dependence", terms, ("pair_term", "mean_term"),
        flags={"locally dependent": True},
        stderr={k: v for k, v in report.stderr.items() if k in terms},
        diagnostics=report.diagnostics,
    )


def d2_bound_negrel(im: IndicatorModel, N: int = 200, rng: Optional[np.random.Generator] = None,
                    mode: str = "mc") -> BoundReport:
    """
    d2 bound for negatively related trials

    E sum_i (5/lam + 3/(W_i + 1)) [p_i^2 + p_i sum_{j != i} (I_j - J_ji)],
    W_i = sum_{j != i} J_ji, split into the p_i^2 part and the relation gap.
    """
    if im.palm_coupler is None or im.relation != "negative":
        raise InvalidConfigurationError(f"{im.name}: needs a negatively related Palm coupler")
    lam = im.lam
    active = np.flatnonzero(im.p > 0)

    if mode == "exact":
        if im.palm_law is None:
            raise InvalidConfigurationError(f"{im.name}: exact mode needs an enumerable coupling law")
        squared = gap = 0.0
        for i in active:
            probs, base_codes, palm_codes = im.palm_law(int(i))
            base = bits_of(base_codes, im.n)
            palm = bits_of(palm_codes, im.n)
            others = np.ones(im.n, dtype=bool)
            others[i] = False
            w = palm[:, others].sum(axis=1)
            factor = 5.0 / lam + 3.0 / (w + 1.0)
            diff = base[:, others].sum(axis=1) - w
            squared += im.p[i] ** 2 * math.fsum(probs * factor)
            gap += im.p[i] * math.fsum(probs * factor * diff)
        terms = {"squared_probabilities": squared, "relation_gap": gap}
        stderr: Dict[str, float] = {}
    elif mode == "mc":
        rng = _require_rng(rng, mode)
        sq = np.zeros(N)
        gp = np.zeros(N)
        for k in range(N):
            for i in active:
                ps = palm_sample(im, int(i), rng)
                others = np.ones(im.n, dtype=bool)
                others[i] = False
                w = int(ps.palm[others].sum())
                factor = 5.0 / lam + 3.0 / (w + 1.0)
                sq[k] += factor * im.p[i] ** 2
                gp[k] += factor * im.p[i] * (int(ps.base[others].sum()) - w)
        sq_est, gp_est = EstimateWithError.from_samples(sq), EstimateWithError.from_samples(gp)
        terms = {"squared_probabilities": sq_est.value, "relation_gap": gp_est.value}
        stderr = {"squared_probabilities": sq_est.stderr, "relation_gap": gp_est.stderr}
    else:
        raise InvalidInputError(f"mode must be 'exact' or 'mc', got {mode!r}")

    return BoundReport.build(
        "negatively-related", terms, ("squared_probabilities", "relation_gap"),
        flags={"negatively related": True},
        stderr=stderr,
        diagnostics={"lambda": lam, "n": float(im.n)},
    )


# =========================================================================
# COUNT TOTAL VARIATION
# =========================================================================

def tv_count_bound(im: IndicatorModel, mode: str = "exact", N: int = 200,
                   rng: Optional[np.random.Generator] = None) -> BoundReport:
    """
    Total variation bound between the law of the count and Po(lambda)

    pair_term = c E sum_i I_i (sum_{j in A_i} I_j - 1)
    epsilon1' = (1 ^ sqrt(2/(e lam))) sum_i E|E(I_i | outside A_i) - p_i|
    epsilon2' = c sum_i p_i E|V_i - W_i|
    mean_term = c sum_i sum_{j in A_i} p_i p_j
    with c = (1 - e^-lam)/lam.
    """
    rng = _require_rng(rng, mode)
    factors = stein_factors(im.lam)
    c = factors.tv_difference
    rows, cols = _neighbor_pairs(im)
    mean_term = c * math.fsum(im.p[rows] * im.p[cols])

    stderr: Dict[str, float] = {}
    if mode == "exact":
        if im.exact_pmf is None:
            raise InvalidConfigurationError(f"{im.name}: exact mode needs an exact pmf")
        pair_term = c * math.fsum(math.fsum(probs * _pair_values(im, X)[0])
                                  for probs, X in iter_patterns(im.exact_pmf, im.n))
    elif mode == "mc":
        values = np.concatenate([_pair_values(im, X)[0] for X in _iter_samples(im, N, rng)])
        est = EstimateWithError.from_samples(values)
        pair_term = c * est.value
        stderr["pair_term"] = c * est.stderr
    else:
        raise InvalidInputError(f"mode must be 'exact' or 'mc', got {mode!r}")

    eps, eps_err = _epsilon_terms(im, mode, N, rng, factors.tv_magnitude, "count", c)
    stderr.update(eps_err)
    terms = {"pair_term": pair_term, "mean_term": mean_term, **eps}
    return BoundReport.build(
        "count-tv", terms, ("pair_term", "mean_term"), tuple(sorted(eps)),
        flags={"epsilon available": True},
        stderr=stderr,
        diagnostics={"lambda": im.lam, "n": float(im.n)},
    )


# =========================================================================
# MATERN HARD-CORE
# =========================================================================

def matern_bound(mu: float, r: float, d: int = 2, geometry: str = "torus", grid: int = 64) -> BoundReport:
    """
    d2 bound between the Matérn hard-core process and Po(lambda)

    Args:
        mu: Parent intensity
        r: Hard-core radius
        d: Dimension
        geometry: 'torus' or 'box'
        grid: Quadrature resolution for the box mean measure

    Returns:
        BoundReport with terms 10 theta and
        6 theta [3 + (1 - exp(-theta/2^d)) theta] / (1 + (1 - 2 theta)/lam),
        theta = mu kappa_d (2r)^d
    """
    mm = matern_mean_measure(mu, r, d, geometry, grid)
    lam = mm.total_mass if geometry == "box" else matern_intensity(mu, r, d, geometry)
    theta = mu * KAPPA[d] * (2.0 * r) ** d

    denominator = 1.0 + (1.0 - 2.0 * theta) / lam
    positive = denominator > 0
    if positive:
        interaction = 6.0 * theta * (3.0 + (1.0 - math.exp(-theta / 2 ** d)) * theta) / denominator
    else:
        logger.warning("matern bound denominator %.6g <= 0 (theta=%.6g, lambda=%.6g)", denominator, theta, lam)
        interaction = math.inf
    terms = {"hard_core": 10.0 * theta, "interaction": interaction}
    return BoundReport.build(
        "matern", terms, ("hard_core", "interaction"),
        flags={"positive denominator": bool(positive)},
        diagnostics={"theta": theta, "lambda": lam, "mu": float(mu), "r": float(r), "d": float(d)},
    )


# =========================================================================
# OCCUPANCY
# =========================================================================

def _grouped(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.unique(p, return_counts=True)


def _conditional_sum(om: OccupancyModel, values: np.ndarray, counts: np.ndarray,
                     removed: Sequence[int]) -> float:
    """sum over the other urns k of P(X_k <= m | X_r = 0 for the removed urns)"""
    left = 1.0 - math.fsum(values[g] for g in removed)
    if left <= 0:
        return math.nan
    remaining = counts.astype(float).copy()
    for g in removed:
        remaining[g] -= 1
    probs = np.clip(values / left, 0.0, 1.0)
    return math.fsum(remaining * occupancy_pi(om.s, probs, om.m))


def mu_prime(om: OccupancyModel) -> float:
    """min over urn pairs i != j of sum_{k != i,j} P(X_k <= m | X_i = X_j = 0), grouped by distinct p"""
    values, counts = _grouped(om.p)
    best = math.inf
    for a in range(values.size):
        for b in range(a, values.size):
            if a == b and counts[a] < 2:
                continue
            total = _conditional_sum(om, values, counts, (a, b))
            if not math.isnan(total):
                best = min(best, total)
    return best


def _mu_prime_bruteforce(om: OccupancyModel) -> float:
    best = math.inf
    for i in range(om.n):
        for j in range(om.n):
            if i == j or om.p[i] + om.p[j] >= 1:
                continue
            k = np.array([k for k in range(om.n) if k not in (i, j)])
            total = math.fsum(occupancy_pi(om.s, om.p[k] / (1 - om.p[i] - om.p[j]), om.m))
            best = min(best, total)
    return best


def mu_double_prime(om: OccupancyModel) -> float:
    """min over urns i of sum_{j != i} P(X_j <= m | X_i = 0)"""
    values, counts = _grouped(om.p)
    candidates = [_conditional_sum(om, values, counts, (a,)) for a in range(values.size)]
    candidates = [c for c in candidates if not math.isnan(c)]
    return min(candidates) if candidates else math.inf


def mean_minus_variance(om: OccupancyModel) -> float:
    """E|Xi| - Var|Xi| = sum pi_i^2 - sum_{i != k} (P(X_i <= m, X_k <= m) - pi_i pi_k)"""
    values, counts = _grouped(om.p)
    pis = occupancy_pi(om.s, values, om.m)
    total = math.fsum(counts * pis ** 2)
    for a in range(values.size):
        for b in range(values.size):
            pairs = counts[a] * (counts[b] - 1) if a == b else counts[a] * counts[b]
            if pairs == 0:
                continue
            joint = float(occupancy_pair_probability(om.s, values[a], values[b], om.m)[0])
            total -= pairs * (joint - pis[a] * pis[b])
    return total


def _explicit_occupancy(om: OccupancyModel, mu: float) -> BoundReport:
    s, m, n = om.s, om.m, om.n
    p_star, pi_star = om.p_star, om.pi_star
    loglog = math.log(math.log(s)) if s > 1 and math.log(s) > 0 else math.nan
    mloglog = 0.0 if m == 0 else m * loglog
    log_s = math.log(s) if s > 0 else math.nan
    slack = s - log_s - mloglog - 4 * m
    flags = {
        "p_* < 1/3": bool(p_star < 1.0 / 3.0),
        "s > ln s + m ln ln s + 4m": bool(slack > 0),
    }
    if all(flags.values()) and mu > 2 * pi_star:
        ratio = (1 - 3 * p_star + 2 * p_star ** 2) / (1 - 3 * p_star)
        constant = 5.0 + 3.0 * ratio ** s / (1.0 - 2.0 * pi_star / mu)
        inner = pi_star + s / mu * ((log_s + mloglog + 5 * m) / slack * mu + 4.0 / s) ** 2
        stein = constant * inner
    else:
        constant = math.nan
        stein = math.inf
    return BoundReport.build(
        "occupancy-explicit", {"discretization": 1.0 / (2 * n), "stein_term": stein},
        ("discretization", "stein_term"),
        flags=flags,
        diagnostics={"C": constant},
    )


def occupancy_bound(om: OccupancyModel) -> BoundReport:
    """
    d2 bound for the occupancy process against Po(lambda), lambda(dt) = n pi_i dt

    total = 1/(2n) + (5/mu + 3/mu') (E|Xi| - Var|Xi|); the explicit form with
    the constant C rides along as a companion report.
    """
    mu = om.mu
    mp = mu_prime(om) if om.n >= 2 else math.nan
    gap = mean_minus_variance(om)
    if mu > 0 and mp > 0 and not math.isnan(mp):
        stein = (5.0 / mu + 3.0 / mp) * gap
    else:
        stein = math.inf
    mdp = mu_double_prime(om) if om.n >= 2 else math.nan
    matched = DiscreteAtoms.on_grid(om.pi).total_mass if mu > 0 else 0.0

    diagnostics = {
        "mu": mu,
        "mu_prime": mp,
        "mu_double_prime": mdp,
        "mean_minus_variance": gap,
        "pi_star": om.pi_star,
        "p_star": om.p_star,
        "matched_mass": matched,
    }
    flags = {
        "mu' defined": bool(np.isfinite(stein)),
        "matched mass equals mu": bool(abs(matched - mu) <= 1e-9 * max(1.0, mu)),
        "mu'' >= mu'": bool(np.isnan(mp) or mdp >= mp - 1e-12),
    }
    p_star = om.p_star
    if p_star < 1.0 / 3.0:
        lower = ((1 - 3 * p_star) / (1 - 3 * p_star + 2 * p_star ** 2)) ** om.s * (mu - 2 * om.pi_star)
        diagnostics["mu_prime_lower_bound"] = lower
        flags["mu' >= lower bound"] = bool(np.isnan(mp) or mp >= lower - 1e-12)

    explicit = _explicit_occupancy(om, mu)
    diagnostics["C"] = explicit.diagnostics["C"]
    return BoundReport.build(
        "occupancy", {"discretization": 1.0 / (2 * om.n), "stein_term": stein},
        ("discretization", "stein_term"),
        flags=flags,
        diagnostics=diagnostics,
        companions=(explicit,),
    )


# =========================================================================
# PALINDROMES
# =========================================================================

def _band_pair_count(n: int, band: int) -> int:
    """Number of ordered pairs (i, j), both in 1..n, with |i - j| <= band (i = j included)"""
    width = min(band, n - 1)
    return n + 2 * sum(n - g for g in range(1, width + 1))


def palindrome_bound(pm: PalindromeModel, mode: str = "analytic", N: int = 200,
                     rng: Optional[np.random.Generator] = None) -> BoundReport:
    """
    d2 bound for the palindrome process against Po(lambda) with lambda = n theta^L

    Args:
        pm: Palindrome model
        mode: 'analytic' (b2 at its cap), 'exact' (pair probabilities by
              constraint enumeration) or 'mc' (overlap counts of simulated sequences)
        N: Sequences simulated in 'mc'
        rng: Random generator for 'mc'

    Returns:
        BoundReport 26 b1/lam + 26 b2/lam + 1/(2n), with the crude
        131 L theta^(L/2) cap as a companion
    """
    n, L, theta, lam, band = pm.n, pm.L, pm.theta, pm.lam, pm.band
    b1 = pm.p_site ** 2 * _band_pair_count(n, band)
    b1_cap = n * (4 * L - 1) * theta ** (2 * L)
    b2_cap = n * (4 * L - 2) * theta ** (1.5 * L)

    stderr: Dict[str, float] = {}
    if mode == "analytic":
        b2 = b2_cap
    elif mode == "exact":
        b2 = math.fsum(2 * (n - g) * palindrome_pair_probability(pm, g) for g in range(1, min(band, n - 1) + 1))
    elif mode == "mc":
        rng = _require_rng(rng, mode)
        counts = np.zeros(N)
        for k in range(N):
            codes = rng.choice(4, size=pm.M, p=pm.probs).astype(np.uint8)
            pos = np.flatnonzero(palindrome_indicators(codes, L))
            counts[k] = np.sum(np.searchsorted(pos, pos + band, side="right")
                               - np.searchsorted(pos, pos - band, side="left") - 1)
        est = EstimateWithError.from_samples(counts)
        b2 = est.value
        stderr["b2_term"] = 26.0 * est.stderr / lam
    else:
        raise InvalidInputError(f"mode must be 'analytic', 'exact' or 'mc', got {mode!r}")

    cap = BoundReport.build("palindrome-cap", {"cap": 131.0 * L * theta ** (L / 2.0)}, ("cap",),
                            flags=dict(pm.assumptions))
    return BoundReport.build(
        "palindrome",
        {"b1_term": 26.0 * b1 / lam, "b2_term": 26.0 * b2 / lam, "discretization": 1.0 / (2 * n)},
        ("b1_term", "b2_term", "discretization"),
        flags=dict(pm.assumptions),
        stderr=stderr,
        diagnostics={"lambda": lam, "theta": theta, "b1": b1, "b1_cap": b1_cap, "b2": b2,
                     "b2_cap": b2_cap, "n": float(n)},
        companions=(cap,),
    )
