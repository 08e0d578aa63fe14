"""
Occupancy Process
Balls dropped into urns, the urns holding at most m balls, and their negatively related coupling
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.special import comb, gammaln, logsumexp, xlogy
from scipy.stats import binom

from carrier import PointConfig
from errors import InvalidInputError, ResourceLimitError
from trials import Coupler, IndicatorModel, codes_of, grid_config, grid_marks

logger = logging.getLogger(__name__)

COMPOSITION_LIMIT = 200_000
PALM_LAW_LIMIT = 5_000


@dataclass(frozen=True, eq=False)
class OccupancyModel:
    """s balls into n urns with probabilities p; urn i is counted when X_i <= m"""
    n: int
    s: int
    m: int
    p: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("need at least one urn")
        if self.s < 0 or self.m < 0:
            raise InvalidInputError("ball count s and threshold m must be >= 0")
        p = np.array(self.p, dtype=float).ravel()
        if p.size != self.n:
            raise InvalidInputError(f"{p.size} urn probabilities for {self.n} urns")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
            raise InvalidInputError("urn probabilities must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, n: int, s: int, m: int) -> "OccupancyModel":
        return cls(n, s, m, np.full(n, 1.0 / n))

    @cached_property
    def pi(self) -> np.ndarray:
        """pi_i = P(X_i <= m)"""
        return occupancy_pi(self.s, self.p, self.m)

    @property
    def mu(self) -> float:
        return math.fsum(self.pi)

    @property
    def p_star(self) -> float:
        return float(self.p.max())

    @property
    def pi_star(self) -> float:
        return float(self.pi.max())


# =========================================================================
# EXACT PROBABILITIES
# =========================================================================

def occupancy_pi(s: int, p, m: int):
    """
    P(Binomial(s, p) <= m), summed in log space

    Args:
        s: Number of balls
        p: Urn probability (scalar or array)
        m: Threshold

    Returns:
        Same shape as p
    """
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    if m >= s:
        out = np.ones_like(p_arr)
    else:
        j = np.arange(m + 1)
        out = np.exp(logsumexp(binom.logpmf(j[None, :], s, p_arr[:, None]), axis=1))
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if np.ndim(p) == 0 else out


def occupancy_pair_probability(s: int, p_i, p_k, m: int):
    """P(X_i <= m, X_k <= m) by summing trinomial terms in log space"""
    p_i = np.atleast_1d(np.asarray(p_i, dtype=float))
    p_k = np.atleast_1d(np.asarray(p_k, dtype=float))
    top = min(m, s)
    l1, l2 = np.meshgrid(np.arange(top + 1), np.arange(top + 1), indexing="ij")
    feasible = (l1 + l2) <= s
    l1, l2 = l1[feasible], l2[feasible]
    rest = s - l1 - l2
    log_coef = gammaln(s + 1) - gammaln(l1 + 1) - gammaln(l2 + 1) - gammaln(rest + 1)
    remainder = np.clip(1.0 - p_i - p_k, 0.0, None)
    terms = (log_coef[None, :] + xlogy(l1[None, :], p_i[:, None]) + xlogy(l2[None, :], p_k[:, None])
             + xlogy(rest[None, :], remainder[:, None]))
    return np.clip(np.exp(logsumexp(terms, axis=1)), 0.0, 1.0)


def _composition_count(total: int, urns: int) -> int:
    return int(comb(total + urns - 1, urns - 1, exact=True))


def multinomial_table(total: int, probs: Sequence[float], limit: int = COMPOSITION_LIMIT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Every placement of total balls into len(probs) urns with its probability

    Raises:
        ResourceLimitError: when the number of compositions exceeds limit
    """
    probs = np.asarray(probs, dtype=float)
    urns = probs.size
    count = _composition_count(total, urns)
    if count > limit:
        raise ResourceLimitError(f"{count} compositions of {total} balls into {urns} urns exceed {limit}")
    rows = np.empty((count, urns), dtype=np.int64)
    for k, bars in enumerate(combinations(range(total + urns - 1), urns - 1)):
        edges = np.array((-1,) + bars + (total + urns - 1,))
        rows[k] = np.diff(edges) - 1
    log_prob = gammaln(total + 1) - gammaln(rows + 1).sum(axis=1) + xlogy(rows, probs[None, :]).sum(axis=1)
    return rows, np.exp(log_prob)


def occupancy_exact_pmf(om: OccupancyModel, limit: int = COMPOSITION_LIMIT) -> np.ndarray:
    """Joint pmf of (1{X_i <= m}) over pattern codes"""
    rows, probs = multinomial_table(om.s, om.p, limit)
    codes = codes_of(rows <= om.m)
    pmf = np.bincount(codes, weights=probs, minlength=1 << om.n)
    return pmf / pmf.sum()


def _truncated_law(om: OccupancyModel, i: int) -> np.ndarray:
    """L(X_i | X_i <= m) on 0..min(m, s)"""
    support = np.arange(min(om.m, om.s) + 1)
    weights = binom.pmf(support, om.s, om.p[i])
    if weights.sum() <= 0:
        raise InvalidInputError(f"urn {i} cannot hold at most {om.m} balls")
    return weights / weights.sum()


def _redistribution_probs(om: OccupancyModel, i: int) -> np.ndarray:
    others = om.p.copy()
    others[i] = 0.0
    return others / (1.0 - om.p[i])


# =========================================================================
# SAMPLING AND COUPLING
# =========================================================================

def sample_occupancy(om: OccupancyModel, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, PointConfig]:
    """
    Drop the balls once

    Returns:
        (x, indicators, xi): urn counts, 1{x_i <= m}, and sum_i I_i delta_{i/n}
    """
    x = rng.multinomial(om.s, om.p)
    indicators = x <= om.m
    return x, indicators, grid_config(indicators)


def occupancy_coupler(om: OccupancyModel) -> Coupler:
    """
    Palm coupling at urn i

    When X_i > m, a fresh X~ ~ L(X_i | X_i <= m) is drawn and the X_i - X~
    surplus balls move to the other urns with probabilities p_j / (1 - p_i).
    Other urns only gain balls, so J_j <= I_j.
    """
    def coupler(i: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        x = rng.multinomial(om.s, om.p)
        base = x <= om.m
        if x[i] <= om.m:
            return base, base.copy()
        keep = int(rng.choice(min(om.m, om.s) + 1, p=_truncated_law(om, i)))
        y = x.copy()
        y[i] = keep
        y += rng.multinomial(x[i] - keep, _redistribution_probs(om, i))
        return base, y <= om.m

    return coupler


def occupancy_palm_law(om: OccupancyModel, i: int, limit: int = PALM_LAW_LIMIT) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact law of (I, J) under the coupling at urn i, as (probabilities, I codes, J codes)"""
    rows, probs = multinomial_table(om.s, om.p, limit)
    truncated = _truncated_law(om, i)
    redistribution = _redistribution_probs(om, i)
    weights = 1 << np.arange(om.n)
    law: Dict[Tuple[int, int], float] = {}
    tables: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    for x, px in zip(rows, probs):
        base = int(((x <= om.m) * weights).sum())
        if x[i] <= om.m:
            law[(base, base)] = law.get((base, base), 0.0) + px
            continue
        for keep, pk in enumerate(truncated):
            if pk == 0:
                continue
            moved = int(x[i] - keep)
            if moved not in tables:
                tables[moved] = multinomial_table(moved, redistribution, limit)
            extra, p_extra = tables[moved]
            y = x[None, :] + extra
            y[:, i] = keep
            for palm, pe in zip(codes_of(y <= om.m), p_extra):
                key = (base, int(palm))
                law[key] = law.get(key, 0.0) + px * pk * pe

    keys = np.array(list(law.keys()), dtype=np.int64)
    return np.array(list(law.values())), keys[:, 0], keys[:, 1]


def occupancy_indicator_model(om: OccupancyModel, pmf_limit: int = 20,
                              composition_limit: int = COMPOSITION_LIMIT) -> IndicatorModel:
    """
    Indicator model of the urns holding at most m balls

    Neighborhoods are A_i = {i}, trials are marked at i/n, and the Palm
    coupler is the ball-redistribution coupling (negatively related).
    """
    exact = None
    palm_law = None
    count = _composition_count(om.s, om.n)
    if om.n <= pmf_limit and count <= composition_limit:
        exact = occupancy_exact_pmf(om, composition_limit)
        logger.debug("occupancy exact pmf built from %d compositions", count)
    if count <= PALM_LAW_LIMIT:
        palm_law = lambda i: occupancy_palm_law(om, i)

    def sampler(rng: np.random.Generator) -> np.ndarray:
        return rng.multinomial(om.s, om.p) <= om.m

    marks, mark_carrier = grid_marks(om.n)
    return IndicatorModel(
        p=om.pi,
        neighborhoods=tuple((i,) for i in range(om.n)),
        joint_sampler=sampler,
        exact_pmf=exact,
        palm_coupler=occupancy_coupler(om),
        relation="negative",
        palm_law=palm_law,
        marks=marks,
        mark_carrier=mark_carrier,
        name=f"occupancy(n={om.n}, s={om.s}, m={om.m})",
    )
