"""
Palm Machinery
Palm and reduced Palm draws for indicator models, the conditional intensity, and identity checks
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np

from carrier import PointConfig, add_point, remove_point, restrict
from config import load_settings
from errors import (CouplingViolationError, InvalidConfigurationError, InvalidInputError,
                    ResourceLimitError)
from metrics import EstimateWithError
from processes import MeanMeasure
from trials import IndicatorModel, bits_of

logger = logging.getLogger(__name__)


# =========================================================================
# PALM SAMPLES
# =========================================================================

@dataclass(frozen=True)
class PalmSample:
    """Base indicators I and Palm indicators J at focal trial i (J_i = 1)"""
    base: np.ndarray
    palm: np.ndarray
    focal: int


def _conditional_codes(im: IndicatorModel, i: int) -> np.ndarray:
    codes = np.arange(im.exact_pmf.size)
    return np.where((codes >> i) & 1 == 1, im.exact_pmf, 0.0) / im.p[i]


def _check_relation(im: IndicatorModel, base: np.ndarray, palm: np.ndarray, i: int) -> None:
    others = np.ones(im.n, dtype=bool)
    others[i] = False
    if im.relation == "negative" and np.any(palm[others] & ~base[others]):
        raise CouplingViolationError(f"{im.name}: J > I outside the focal trial {i} for a negatively related coupler")
    if im.relation == "positive" and np.any(base[others] & ~palm[others]):
        raise CouplingViolationError(f"{im.name}: J < I outside the focal trial {i} for a positively related coupler")


def palm_sample(im: IndicatorModel, i: int, rng: np.random.Generator,
                budget: Optional[int] = None) -> PalmSample:
    """
    Draw (I, J_.i) with J distributed as I given I_i = 1

    Uses the model's coupler when present, otherwise an independent draw from
    the exact conditional pmf, otherwise rejection from the joint sampler.

    Args:
        im: Indicator model
        i: Focal trial (0-based)
        rng: Random generator
        budget: Rejection attempts allowed (PPA_PALM_REJECTION_BUDGET by default)

    Returns:
        PalmSample

    Raises:
        InvalidInputError: p_i = 0
        ResourceLimitError: rejection budget exhausted
        CouplingViolationError: the coupler broke its declared relation
    """
    if not 0 <= i < im.n:
        raise InvalidInputError(f"focal trial {i} outside 0..{im.n - 1}")
    if im.p[i] <= 0:
        raise InvalidInputError(f"trial {i} has probability 0; its Palm law is undefined")

    if im.palm_coupler is not None:
        base, palm = im.palm_coupler(i, rng)
        base = np.asarray(base, dtype=bool)
        palm = np.asarray(palm, dtype=bool).copy()
    elif im.exact_pmf is not None:
        base = im.sample(rng)
        code = rng.choice(im.exact_pmf.size, p=_conditional_codes(im, i))
        palm = bits_of(np.array([code]), im.n)[0]
    elif im.allow_rejection:
        budget = budget if budget is not None else load_settings().palm_rejection_budget
        base = im.sample(rng)
        for attempt in range(budget):
            palm = im.sample(rng)
            if palm[i]:
                break
        else:
            raise ResourceLimitError(
                f"{im.name}: no draw with I_{i} = 1 in {budget} attempts (p_i = {im.p[i]:.3g})")
        logger.debug("rejection Palm draw at trial %d took %d attempts", i, attempt + 1)
    else:
        raise InvalidConfigurationError(f"{im.name}: no coupler, exact pmf or rejection fallback")

    palm[i] = True
    _check_relation(im, base, palm, i)
    return PalmSample(base, palm, i)


@dataclass(frozen=True)
class ReducedPalm:
    """Counts outside A_i: V_i = sum I_j and, for Palm samples, sum J_j"""
    focal: int
    v: int
    palm_v: Optional[int]
    base_outside: np.ndarray
    palm_outside: Optional[np.ndarray]


def reduced_palm(sample: Union[PalmSample, np.ndarray], im: IndicatorModel,
                 i: Optional[int] = None) -> ReducedPalm:
    """Restrict base (and Palm) indicators to the complement of A_i"""
    if isinstance(sample, PalmSample):
        i = sample.focal
        base, palm = sample.base, sample.palm
    else:
        if i is None:
            raise InvalidInputError("plain indicators need an explicit focal trial")
        base, palm = np.asarray(sample, dtype=bool), None
    mask = im.outside_mask(i)
    palm_outside = None if palm is None else palm[mask]
    return ReducedPalm(
        focal=i,
        v=int(base[mask].sum()),
        palm_v=None if palm is None else int(palm_outside.sum()),
        base_outside=base[mask],
        palm_outside=palm_outside,
    )


# =========================================================================
# EXACT CONDITIONAL INTENSITY
# =========================================================================

def _require_pmf(im: IndicatorModel) -> np.ndarray:
    if im.exact_pmf is None:
        raise InvalidConfigurationError(f"{im.name}: this computation needs an exact pmf")
    return im.exact_pmf


def _outside_code(im: IndicatorModel, i: int) -> int:
    return int(np.sum(np.int64(1) << np.flatnonzero(im.outside_mask(i)).astype(np.int64)))


def conditional_intensity(im: IndicatorModel, i: int, outside: Union[Sequence[int], Mapping[int, int]]) -> float:
    """
    P(I_i = 1 | I_j = outside_j for j outside A_i)

    Args:
        im: Model with an exact pmf
        i: Trial (0-based)
        outside: Values of the trials outside A_i, either in increasing index
                 order or as {j: value}

    Raises:
        InvalidInputError: the conditioning event has probability 0
    """
    pmf = _require_pmf(im)
    idx = np.flatnonzero(im.outside_mask(i))
    if isinstance(outside, Mapping):
        if set(outside) != set(idx.tolist()):
            raise InvalidInputError(f"outside values must cover exactly the trials {idx.tolist()}")
        values = np.array([outside[j] for j in idx], dtype=np.int64)
    else:
        values = np.asarray(outside, dtype=np.int64).ravel()
        if values.size != idx.size:
            raise InvalidInputError(f"expected {idx.size} outside values, got {values.size}")
    target = int(np.sum(values.astype(np.int64) << idx.astype(np.int64)))

    codes = np.arange(pmf.size)
    match = (codes & _outside_code(im, i)) == target
    denominator = pmf[match].sum()
    if denominator <= 0:
        raise InvalidInputError(f"outside configuration {values.tolist()} has probability 0")
    return float(pmf[match & ((codes >> i) & 1 == 1)].sum() / denominator)


def _outside_tables(im: IndicatorModel, i: int):
    """Joint mass P(outside = x, I_i = 1) and marginal P(outside = x) per outside code"""
    pmf = im.exact_pmf
    codes = np.arange(pmf.size)
    key = codes & _outside_code(im, i)
    focal = ((codes >> i) & 1).astype(float)
    joint = np.bincount(key, weights=pmf * focal, minlength=pmf.size)
    marginal = np.bincount(key, weights=pmf, minlength=pmf.size)
    return joint, marginal


def epsilon1_exact(im: IndicatorModel) -> float:
    """sum_i E|E(I_i | I_j, j outside A_i) - p_i|, without the Stein-factor prefactor"""
    _require_pmf(im)
    total = 0.0
    for i in range(im.n):
        joint, marginal = _outside_tables(im, i)
        total += math.fsum(np.abs(joint - im.p[i] * marginal))
    return total


def check_local_dependence(im: IndicatorModel) -> float:
    """Largest |G(i, outside) - p_i| over trials and outside configurations of positive probability"""
    _require_pmf(im)
    worst = 0.0
    for i in range(im.n):
        joint, marginal = _outside_tables(im, i)
        seen = marginal > 0
        if np.any(seen):
            worst = max(worst, float(np.abs(joint[seen] / marginal[seen] - im.p[i]).max()))
    return worst


# =========================================================================
# EPSILON-2 (COUPLING DISCREPANCY)
# =========================================================================

def _discrepancy(form: str, lam: float, v: np.ndarray, w: np.ndarray, diff: np.ndarray) -> np.ndarray:
    if form == "d2":
        return (5.0 / lam + 3.0 / (np.minimum(v, w) + 1.0)) * diff
    if form == "count":
        return np.abs(v - w).astype(float)
    raise InvalidInputError(f"unknown discrepancy form {form!r}")


def epsilon2_mc(im: IndicatorModel, N: int, rng: np.random.Generator,
                form: str = "d2") -> EstimateWithError:
    """
    Monte Carlo estimate of the coupling discrepancy term

    form 'd2': sum_i p_i E (5/lam + 3/(V_i ^ W_i + 1)) sum_{j outside A_i} |J_j - I_j|
    form 'count': sum_i p_i E |V_i - W_i|
    with V_i, W_i the base and Palm counts outside A_i.
    """
    if im.identity_outside:
        logger.debug("%s: coupler is the identity outside A_i, epsilon2 = 0", im.name)
        return EstimateWithError.exact(0.0)
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    lam = im.lam
    active = np.flatnonzero(im.p > 0)
    totals = np.zeros(N)
    for k in range(N):
        for i in active:
            rp = reduced_palm(palm_sample(im, int(i), rng), im)
            diff = int(np.sum(rp.base_outside ^ rp.palm_outside))
            totals[k] += im.p[i] * float(_discrepancy(form, lam, np.array(rp.v), np.array(rp.palm_v),
                                                      np.array(diff)))
    return EstimateWithError.from_samples(totals)


def epsilon2_exact(im: IndicatorModel, form: str = "d2") -> float:
    """Exact coupling discrepancy from the model's enumerable coupling law"""
    if im.identity_outside:
        return 0.0
    if im.palm_law is None:
        raise InvalidConfigurationError(f"{im.name}: no enumerable coupling law for an exact epsilon2")
    lam = im.lam
    total = 0.0
    for i in np.flatnonzero(im.p > 0):
        probs, base_codes, palm_codes = im.palm_law(int(i))
        mask = im.outside_mask(int(i))
        base = bits_of(base_codes, im.n)[:, mask]
        palm = bits_of(palm_codes, im.n)[:, mask]
        v, w = base.sum(axis=1), palm.sum(axis=1)
        diff = (base ^ palm).sum(axis=1)
        total += im.p[i] * math.fsum(probs * _discrepancy(form, lam, v, w, diff))
    return total


def inverse_moment_mc(im: IndicatorModel, N: int, rng: np.random.Generator) -> EstimateWithError:
    """E 1/(sum_i I_i + 1)"""
    return EstimateWithError.from_samples([1.0 / (im.sample(rng).sum() + 1.0) for _ in range(N)])


# =========================================================================
# IDENTITY CHECKS
# =========================================================================

def check_palm_identity(process: Union[IndicatorModel, MeanMeasure], f: Callable[[Any, Any], float],
                        N: int, rng: np.random.Generator) -> EstimateWithError:
    """
    Residual of E sum_{alpha in Xi} f(alpha, Xi) = integral E f(alpha, Xi_alpha) lambda(d alpha)

    For an indicator model f takes (trial, indicators) and the right side is
    lam E f(K, J_.K) with K drawn proportionally to p. For a Poisson process f
    takes (point, configuration) and Xi_alpha = Xi + delta_alpha.

    Returns:
        Left minus right, with the combined standard error of both averages
    """
    if N < 2:
        raise InvalidInputError("N must be >= 2 for a residual with a standard error")
    left = np.zeros(N)
    right = np.zeros(N)

    if isinstance(process, IndicatorModel):
        im = process
        lam = im.lam
        weights = im.p / im.p.sum()
        for k in range(N):
            indicators = im.sample(rng)
            left[k] = math.fsum(f(int(i), indicators) for i in np.flatnonzero(indicators))
            focal = int(rng.choice(im.n, p=weights))
            right[k] = lam * f(focal, palm_sample(im, focal, rng).palm)
    elif isinstance(process, MeanMeasure):
        mm = process
        lam = mm.total_mass
        for k in range(N):
            xi = mm.sample(rng)
            left[k] = math.fsum(f(point, xi) for point in xi.points)
            alpha = mm.sample_points(1, rng).point(0)
            right[k] = lam * f(alpha, add_point(mm.sample(rng), alpha))
    else:
        raise InvalidInputError(f"no Palm identity for {type(process).__name__}")

    return EstimateWithError.from_samples(left).minus(EstimateWithError.from_samples(right))


@dataclass(frozen=True)
class CountFunctional:
    """Functional h(xi) = f(xi(B)) of the count in a region B (the whole carrier by default)"""
    f: Callable[[int], float]
    name: str = "count"
    region: Optional[Callable[[Any], bool]] = None

    def count(self, xi: PointConfig) -> int:
        return xi.size if self.region is None else restrict(xi, self.region).size

    def region_mass(self, nodes: PointConfig, weights: np.ndarray) -> float:
        if self.region is None:
            return math.fsum(weights)
        return math.fsum(w for node, w in zip(nodes.points, weights) if self.region(node))

    def __call__(self, xi: PointConfig) -> float:
        return float(self.f(self.count(xi)))

    def generator(self, n: int, lam: float) -> float:
        """Generator of the immigration-death process applied at count n"""
        value = self.f(n)
        death = n * (self.f(n - 1) - value) if n > 0 else 0.0
        return lam * (self.f(n + 1) - value) + death


def check_stein_identity(mm: MeanMeasure, h: Callable[[PointConfig], float], N: int,
                         rng: np.random.Generator,
                         sampler: Optional[Callable[[np.random.Generator], PointConfig]] = None) -> EstimateWithError:
    """
    Estimate E A h(Xi) for the immigration-death generator A with intensity mm

    Args:
        mm: Mean measure; quadrature nodes carry the immigration integral
        h: Bounded functional on configurations
        N: Number of draws
        rng: Random generator
        sampler: Draws Xi; Po(mm) by default. Any other law gives a power check.

    Returns:
        Mean of A h over the draws; zero in expectation exactly when Xi ~ Po(mm)
    """
    draw = sampler if sampler is not None else mm.sample
    nodes, weights = mm.quadrature()
    fast = isinstance(h, CountFunctional)
    lam = h.region_mass(nodes, weights) if fast else mm.total_mass
    values = np.zeros(N)
    for k in range(N):
        xi = draw(rng)
        if fast:
            values[k] = h.generator(h.count(xi), lam)
            continue
        base = h(xi)
        birth = math.fsum(w * (h(add_point(xi, node)) - base) for node, w in zip(nodes.points, weights))
        death = math.fsum(h(remove_point(xi, point)) - base for point in xi.points)
        values[k] = birth + death
    return EstimateWithError.from_samples(values)
