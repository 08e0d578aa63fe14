"""
Configuration Metrics
Assignment-based distances between point configurations and Wasserstein estimates between their laws
"""

import logging
import math
from dataclasses import dataclass
from itertools import permutations
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from carrier import GroundDistance, PointConfig
from errors import InvalidInputError

logger = logging.getLogger(__name__)

TV_TAIL = 1e-12
PMF_TOLERANCE = 1e-9


# =========================================================================
# RESULT TYPES
# =========================================================================

@dataclass(frozen=True)
class Matching:
    """Injective assignment of row k to column assignment[k]"""
    assignment: tuple
    cost: float


@dataclass(frozen=True)
class EstimateWithError:
    """Replicate mean with its standard error"""
    value: float
    stderr: float
    sample_count: int

    def __post_init__(self):
        if self.sample_count < 1:
            raise InvalidInputError("an estimate needs at least one sample")
        if not self.stderr >= 0:
            raise InvalidInputError(f"stderr={self.stderr} must be >= 0")

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "EstimateWithError":
        """Mean and sd/sqrt(n) of the values; a single value has stderr 0"""
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise InvalidInputError("cannot estimate from an empty sample")
        stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        return cls(float(arr.mean()), stderr, int(arr.size))

    @classmethod
    def exact(cls, value: float) -> "EstimateWithError":
        return cls(float(value), 0.0, 1)

    def minus(self, other: "EstimateWithError") -> "EstimateWithError":
        """Difference of two independent estimates"""
        return EstimateWithError(self.value - other.value, math.hypot(self.stderr, other.stderr),
                                 min(self.sample_count, other.sample_count))

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "stderr": self.stderr, "sample_count": self.sample_count}


# =========================================================================
# ASSIGNMENT
# =========================================================================

def _check_cost(cost: Any) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise InvalidInputError(f"cost matrix must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n > m:
        raise InvalidInputError(f"cost matrix has more rows than columns ({n} > {m}); transpose it")
    if cost.size and (not np.all(np.isfinite(cost)) or cost.min() < 0):
        raise InvalidInputError("costs must be finite and nonnegative")
    return cost


def assignment_solve(cost: Any) -> Matching:
    """
    Minimum-cost injection of the rows of an n x m matrix into its columns

    Args:
        cost: Finite nonnegative matrix with n <= m

    Returns:
        Matching with the column chosen for every row and the total cost
    """
    cost = _check_cost(cost)
    if cost.shape[0] == 0:
        return Matching((), 0.0)
    rows, cols = linear_sum_assignment(cost)
    return Matching(tuple(int(c) for c in cols), math.fsum(cost[rows, cols]))


def brute_force_assignment(cost: Any) -> Matching:
    """Exhaustive search over all injections; used as a test oracle"""
    cost = _check_cost(cost)
    n, m = cost.shape
    best, best_cost = (), 0.0 if n == 0 else math.inf
    for cols in permutations(range(m), n):
        total = math.fsum(cost[k, c] for k, c in enumerate(cols))
        if total < best_cost:
            best, best_cost = cols, total
    return Matching(tuple(best), best_cost)


# =========================================================================
# CONFIGURATION DISTANCES
# =========================================================================

def _same_carrier(xi1: PointConfig, xi2: PointConfig) -> None:
    if xi1.carrier != xi2.carrier:
        raise InvalidInputError(f"carrier mismatch: {xi1.carrier} vs {xi2.carrier}")


def matching_cost(xi1: PointConfig, xi2: PointConfig, g: GroundDistance) -> float:
    """Optimal cost of matching the smaller configuration into the larger one"""
    _same_carrier(xi1, xi2)
    small, large = (xi1, xi2) if xi1.size <= xi2.size else (xi2, xi1)
    if small.size == 0:
        return 0.0
    return assignment_solve(g.pairwise(small, large)).cost


def rho1(xi1: PointConfig, xi2: PointConfig, g: GroundDistance) -> float:
    """
    Normalized matching distance between configurations

    1 when the sizes differ, 0 when both are empty, otherwise the optimal
    matching cost divided by the common size.
    """
    _same_carrier(xi1, xi2)
    if xi1.size != xi2.size:
        return 1.0
    if xi1.size == 0:
        return 0.0
    return min(1.0, matching_cost(xi1, xi2, g) / xi1.size)


def rho1_dd(xi1: PointConfig, xi2: PointConfig, g: GroundDistance) -> float:
    """Optimal matching cost plus the cardinality difference"""
    return matching_cost(xi1, xi2, g) + abs(xi1.size - xi2.size)


# =========================================================================
# COUNT DISTRIBUTIONS
# =========================================================================

def _pmf_vector(p: Any) -> np.ndarray:
    """Pmf on 0..K from an array, a {k: mass} dict or a frozen scipy discrete law"""
    if hasattr(p, "pmf") and hasattr(p, "sf"):
        cutoff = max(int(np.nan_to_num(p.isf(TV_TAIL), posinf=0.0)), 0)
        while p.sf(cutoff) >= TV_TAIL:
            cutoff += 1
        return np.asarray(p.pmf(np.arange(cutoff + 1)), dtype=float)

    if isinstance(p, dict):
        if not p:
            raise InvalidInputError("empty pmf")
        keys = np.array(list(p.keys()))
        if np.any(keys < 0) or np.any(keys != np.round(keys)):
            raise InvalidInputError("pmf support must be nonnegative integers")
        vec = np.zeros(int(keys.max()) + 1)
        for k, mass in p.items():
            vec[int(k)] += float(mass)
    else:
        vec = np.asarray(p, dtype=float).ravel()

    if vec.size == 0 or not np.all(np.isfinite(vec)) or vec.min() < 0:
        raise InvalidInputError("pmf entries must be finite and nonnegative")
    if abs(vec.sum() - 1.0) > PMF_TOLERANCE:
        raise InvalidInputError(f"pmf sums to {vec.sum():.12g}, not 1")
    return vec


def tv_distance(p: Any, q: Any) -> float:
    """
    Total variation distance between two pmfs on the nonnegative integers

    Args:
        p, q: Arrays indexed by count, {count: mass} dicts or frozen scipy
              discrete distributions (truncated where the tail drops below 1e-12)

    Returns:
        1/2 sum_k |p(k) - q(k)|
    """
    a, b = _pmf_vector(p), _pmf_vector(q)
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    return float(min(1.0, 0.5 * math.fsum(np.abs(a - b))))


def count_pmf(counts: Sequence[int]) -> np.ndarray:
    """Empirical pmf of nonnegative integer counts"""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        raise InvalidInputError("no counts given")
    return np.bincount(counts) / counts.size


def sizes(samples: Sequence[PointConfig]) -> np.ndarray:
    return np.array([xi.size for xi in samples], dtype=np.int64)


# =========================================================================
# WASSERSTEIN ESTIMATION
# =========================================================================

def empirical_transport(samples1: Sequence[PointConfig], samples2: Sequence[PointConfig],
                        g: GroundDistance) -> float:
    """
    Optimal transport cost between two equally sized empirical laws, ground cost rho1

    Pairs of different size cost 1 without solving a matching.
    """
    n = len(samples1)
    if n == 0 or len(samples2) != n:
        raise InvalidInputError("empirical transport needs two nonempty samples of equal size")
    size1, size2 = sizes(samples1), sizes(samples2)
    cost = np.ones((n, n))
    for a, b in zip(*np.nonzero(size1[:, None] == size2[None, :])):
        cost[a, b] = rho1(samples1[a], samples2[b], g)
    return assignment_solve(cost).cost / n


def _as_replicates(samples: Sequence[Any]) -> List[List[PointConfig]]:
    if len(samples) == 0:
        raise InvalidInputError("empty sample list")
    if isinstance(samples[0], PointConfig):
        return [list(samples)]
    return [list(rep) for rep in samples]


def _pad(sample: List[PointConfig], target: int, rng: np.random.Generator) -> List[PointConfig]:
    if len(sample) >= target:
        return sample
    extra = rng.integers(0, len(sample), size=target - len(sample))
    return sample + [sample[k] for k in extra]


def estimate_d2(samples1: Sequence[Any], samples2: Sequence[Any], g: GroundDistance,
                rng: Optional[np.random.Generator] = None) -> EstimateWithError:
    """
    Estimate the Wasserstein distance between two process laws

    Args:
        samples1, samples2: One replicate (a list of PointConfig) or a list of
                            replicates; replicate r of one side is paired with
                            replicate r of the other
        g: Ground pseudometric
        rng: Pads a shorter replicate by resampling; required when replicate
             sizes differ

    Returns:
        Mean over replicates of the empirical transport cost, with stderr
    """
    reps1, reps2 = _as_replicates(samples1), _as_replicates(samples2)
    if len(reps1) != len(reps2):
        raise InvalidInputError(f"replicate counts differ ({len(reps1)} vs {len(reps2)})")
    values = []
    for rep1, rep2 in zip(reps1, reps2):
        if not rep1 or not rep2:
            raise InvalidInputError("empty replicate")
        n = max(len(rep1), len(rep2))
        if len(rep1) != len(rep2):
            if rng is None:
                raise InvalidInputError(f"replicate sizes differ ({len(rep1)} vs {len(rep2)}); pass rng to pad")
            logger.debug("padding replicate sizes %d/%d to %d", len(rep1), len(rep2), n)
        values.append(empirical_transport(_pad(rep1, n, rng), _pad(rep2, n, rng), g))
    return EstimateWithError.from_samples(values)


def d2_lower_bound_counts(samples1: Sequence[Any], samples2: Sequence[Any]) -> float:
    """Total variation between the empirical count laws, averaged over replicates"""
    reps1, reps2 = _as_replicates(samples1), _as_replicates(samples2)
    if len(reps1) != len(reps2):
        raise InvalidInputError(f"replicate counts differ ({len(reps1)} vs {len(reps2)})")
    values = []
    for rep1, rep2 in zip(reps1, reps2):
        if not rep1 or not rep2:
            raise InvalidInputError("empty replicate")
        values.append(tv_distance(count_pmf(sizes(rep1)), count_pmf(sizes(rep2))))
    return float(np.mean(values))
