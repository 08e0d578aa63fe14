"""
Dependent Trials
Indicator models for dependent Bernoulli trials with neighborhoods, marks and Palm couplers
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from carrier import Carrier, CarrierPoint, GroundDistance, LiftedMark, PointConfig, Real1D, RealVec
from errors import InvalidConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator], np.ndarray]
Coupler = Callable[[int, np.random.Generator], Tuple[np.ndarray, np.ndarray]]
PalmLaw = Callable[[int], Tuple[np.ndarray, np.ndarray, np.ndarray]]
MarkSampler = Callable[[np.random.Generator], CarrierPoint]

RELATIONS = (None, "negative", "positive")
PMF_SUM_TOLERANCE = 1e-12
MARGINAL_TOLERANCE = 1e-9
PATTERN_CHUNK = 1 << 16


# =========================================================================
# PATTERN HELPERS
# =========================================================================
# A pattern code x encodes (I_1, ..., I_n) with bit j of x holding I_{j+1}.

def bits_of(codes: np.ndarray, n: int) -> np.ndarray:
    """(k,) pattern codes -> (k, n) boolean indicator rows"""
    codes = np.asarray(codes, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def codes_of(bits: np.ndarray) -> np.ndarray:
    bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
    return bits @ (np.int64(1) << np.arange(bits.shape[1], dtype=np.int64))


def pmf_tensor(pmf: np.ndarray, n: int) -> np.ndarray:
    """View a length-2^n pmf as an n-axis tensor with axis j <-> I_{j+1}"""
    return np.asarray(pmf).reshape((2,) * n).transpose(tuple(range(n))[::-1])


def tensor_pmf(tensor: np.ndarray) -> np.ndarray:
    """Inverse of pmf_tensor"""
    n = tensor.ndim
    return np.ascontiguousarray(tensor.transpose(tuple(range(n))[::-1])).reshape(-1)


def pmf_marginals(pmf: np.ndarray, n: int) -> np.ndarray:
    tensor = pmf_tensor(pmf, n)
    return np.array([np.moveaxis(tensor, j, 0).reshape(2, -1)[1].sum() for j in range(n)])


def iter_patterns(pmf: np.ndarray, n: int, chunk: int = PATTERN_CHUNK) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (probabilities, indicator rows) over the support of a pmf, chunk by chunk"""
    support = np.flatnonzero(pmf > 0)
    for start in range(0, support.size, chunk):
        codes = support[start:start + chunk]
        yield pmf[codes], bits_of(codes, n)


def product_pmf(p: Sequence[float]) -> np.ndarray:
    """Joint pmf of independent trials"""
    pmf = np.array([1.0])
    for pj in p:
        pmf = np.concatenate([pmf * (1.0 - pj), pmf * pj])
    return pmf


def poisson_binomial_pmf(p: Sequence[float]) -> np.ndarray:
    """Law of the number of successes among independent trials"""
    pmf = np.array([1.0])
    for pj in p:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - pj)
        nxt[1:] += pmf * pj
        pmf = nxt
    return pmf


def pmf_from_intersections(n: int, intersection: Callable[[Tuple[int, ...]], float]) -> np.ndarray:
    """
    Joint pmf from the probabilities of every intersection of events

    Args:
        n: Number of events B_1..B_n
        intersection: Maps a nonempty sorted tuple of 0-based indices T to
                      P(B_j for all j in T)

    Returns:
        pmf over pattern codes, obtained by inclusion-exclusion

    Raises:
        InvalidInputError: when the intersection probabilities are infeasible
    """
    size = 1 << n
    inter = np.empty(size)
    inter[0] = 1.0
    for code in range(1, size):
        inter[code] = float(intersection(tuple(j for j in range(n) if code >> j & 1)))

    tensor = pmf_tensor(inter, n).copy()
    for j in range(n):
        moved = np.moveaxis(tensor, j, 0).copy()
        moved[0] -= moved[1]
        tensor = np.moveaxis(moved, 0, j)
    pmf = tensor_pmf(tensor)

    if pmf.min() < -1e-15:
        raise InvalidInputError(f"intersection probabilities are infeasible (pmf minimum {pmf.min():.3g})")
    pmf = np.clip(pmf, 0.0, None)
    if abs(pmf.sum() - 1.0) > PMF_SUM_TOLERANCE:
        raise InvalidInputError(f"inclusion-exclusion pmf sums to {pmf.sum():.15g}")
    return pmf


# =========================================================================
# INDICATOR MODEL
# =========================================================================

@dataclass(frozen=True, eq=False)
class IndicatorModel:
    """
    Joint law of dependent indicators I_1..I_n

    Trials are 0-based internally; neighborhoods A_i either come as explicit
    index sets or as a band |i - j| <= band. relation declares a monotone
    Palm coupling ('negative': J_j <= I_j, 'positive': J_j >= I_j).
    identity_outside declares that the coupler keeps J_j = I_j for j outside A_i.
    """
    p: np.ndarray
    neighborhoods: Optional[Tuple[Tuple[int, ...], ...]] = None
    band: Optional[int] = None
    joint_sampler: Optional[Sampler] = None
    exact_pmf: Optional[np.ndarray] = None
    palm_coupler: Optional[Coupler] = None
    relation: Optional[str] = None
    palm_law: Optional[PalmLaw] = None
    marks: Optional[Tuple[MarkSampler, ...]] = None
    mark_carrier: Optional[Carrier] = None
    mark_distance: Optional[GroundDistance] = None
    locally_dependent: bool = False
    identity_outside: bool = False
    allow_rejection: bool = True
    name: str = "custom"

    def __post_init__(self):
        p = np.array(self.p, dtype=float).ravel()
        if p.size == 0:
            raise InvalidInputError("an indicator model needs at least one trial")
        if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
            raise InvalidInputError("trial probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        n = p.size

        if (self.neighborhoods is None) == (self.band is None):
            raise InvalidInputError("give exactly one of neighborhoods or band")
        if self.neighborhoods is not None:
            if len(self.neighborhoods) != n:
                raise InvalidInputError(f"{len(self.neighborhoods)} neighborhoods for {n} trials")
            hoods = []
            for i, hood in enumerate(self.neighborhoods):
                hood = tuple(sorted({int(j) for j in hood}))
                if i not in hood:
                    raise InvalidInputError(f"trial {i} missing from its own neighborhood")
                if hood[0] < 0 or hood[-1] >= n:
                    raise InvalidInputError(f"neighborhood of trial {i} leaves the index range")
                hoods.append(hood)
            object.__setattr__(self, "neighborhoods", tuple(hoods))
        elif self.band < 0:
            raise InvalidInputError("band width must be >= 0")

        if self.relation not in RELATIONS:
            raise InvalidInputError(f"relation must be one of {RELATIONS}")

        if self.exact_pmf is not None:
            pmf = np.array(self.exact_pmf, dtype=float).ravel()
            if pmf.size != 1 << n:
                raise InvalidInputError(f"exact pmf has {pmf.size} entries, expected 2^{n}")
            if pmf.min() < 0 or abs(pmf.sum() - 1.0) > PMF_SUM_TOLERANCE:
                raise InvalidInputError("exact pmf must be nonnegative and sum to 1")
            gap = np.abs(pmf_marginals(pmf, n) - p).max()
            if gap > MARGINAL_TOLERANCE:
                raise InvalidInputError(f"exact pmf marginals differ from p by {gap:.3g}")
            pmf.setflags(write=False)
            object.__setattr__(self, "exact_pmf", pmf)
            if self.joint_sampler is None:
                object.__setattr__(self, "joint_sampler", _pmf_sampler(pmf, n))

        if self.joint_sampler is None:
            raise InvalidConfigurationError("an indicator model needs a joint sampler or an exact pmf")

        if self.marks is not None:
            if len(self.marks) != n:
                raise InvalidInputError(f"{len(self.marks)} mark samplers for {n} trials")
            if self.mark_carrier is None:
                raise InvalidInputError("mark samplers need a mark carrier")
            object.__setattr__(self, "marks", tuple(self.marks))
            if self.mark_distance is None:
                object.__setattr__(self, "mark_distance", LiftedMark())

    # ---------------------------------------------------------------------
    # Derived quantities
    # ---------------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def lam(self) -> float:
        """lambda = sum_i p_i"""
        return math.fsum(self.p)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """A[i, j] = 1 iff j is in A_i"""
        n = self.n
        if self.band is not None:
            offsets = list(range(-self.band, self.band + 1))
            diagonals = [np.ones(n - abs(k)) for k in offsets if abs(k) < n]
            offsets = [k for k in offsets if abs(k) < n]
            return sparse.diags(diagonals, offsets, shape=(n, n), format="csr")
        rows = np.concatenate([np.full(len(h), i) for i, h in enumerate(self.neighborhoods)])
        cols = np.concatenate([np.asarray(h) for h in self.neighborhoods])
        return sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))

    def neighborhood(self, i: int) -> np.ndarray:
        if self.band is not None:
            return np.arange(max(0, i - self.band), min(self.n, i + self.band + 1))
        return np.asarray(self.neighborhoods[i])

    def outside_mask(self, i: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.neighborhood(i)] = False
        return mask

    @property
    def has_marks(self) -> bool:
        return self.marks is not None

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.joint_sampler(rng), dtype=bool)

    def with_options(self, **changes) -> "IndicatorModel":
        return replace(self, **changes)

    def __repr__(self) -> str:
        return f"IndicatorModel({self.name}, n={self.n}, lambda={self.lam:.6g})"


def _pmf_sampler(pmf: np.ndarray, n: int) -> Sampler:
    def sampler(rng: np.random.Generator) -> np.ndarray:
        return bits_of(np.array([rng.choice(pmf.size, p=pmf)]), n)[0]
    return sampler


# =========================================================================
# MARKS
# =========================================================================

def uniform_marks(n: int, dim: int = 1) -> Tuple[Tuple[MarkSampler, ...], Carrier]:
    """Independent uniform marks on [0,1]^dim for every trial"""
    if dim == 1:
        sampler = lambda rng: Real1D(rng.random())
    else:
        sampler = lambda rng: RealVec(tuple(rng.random(dim)))
    return tuple(sampler for _ in range(n)), Carrier.real(dim)


def fixed_marks(points: Sequence[CarrierPoint]) -> Tuple[Tuple[MarkSampler, ...], Carrier]:
    """Deterministic marks, e.g. trial i sits at i/n"""
    points = list(points)
    carrier = Carrier.of(points[0])
    return tuple((lambda rng, pt=pt: pt) for pt in points), carrier


def grid_marks(n: int) -> Tuple[Tuple[MarkSampler, ...], Carrier]:
    return fixed_marks([Real1D((i + 1) / n) for i in range(n)])


# =========================================================================
# BUILT-IN MODELS
# =========================================================================

def independent_trials(p: Sequence[float], neighborhoods: Optional[Sequence[Sequence[int]]] = None,
                       marks: Optional[Tuple[Tuple[MarkSampler, ...], Carrier]] = None,
                       pmf_limit: int = 20, name: str = "independent") -> IndicatorModel:
    """
    Independent Bernoulli(p_i) trials

    The Palm coupler sets J_i = 1 and keeps J_j = I_j elsewhere, so the family
    is negatively related and locally dependent for any neighborhoods.
    """
    p = np.asarray(p, dtype=float).ravel()
    n = p.size
    if neighborhoods is None:
        neighborhoods = [(i,) for i in range(n)]

    def sampler(rng: np.random.Generator) -> np.ndarray:
        return rng.random(n) < p

    def coupler(i: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        base = sampler(rng)
        palm = base.copy()
        palm[i] = True
        return base, palm

    pmf = product_pmf(p) if n <= pmf_limit else None
    palm_law = None
    if pmf is not None:
        support = np.flatnonzero(pmf > 0)

        def palm_law(i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
            return pmf[support], support, support | (1 << i)

    mark_samplers, mark_carrier = marks if marks is not None else (None, None)
    return IndicatorModel(
        p=p,
        neighborhoods=tuple(tuple(h) for h in neighborhoods),
        joint_sampler=sampler,
        exact_pmf=pmf,
        palm_coupler=coupler,
        palm_law=palm_law,
        relation="negative",
        marks=mark_samplers,
        mark_carrier=mark_carrier,
        locally_dependent=True,
        identity_outside=True,
        name=name,
    )


def explicit_pmf_model(pmf: Sequence[float], neighborhoods: Optional[Sequence[Sequence[int]]] = None,
                       marks: Optional[Tuple[Tuple[MarkSampler, ...], Carrier]] = None,
                       locally_dependent: bool = False, palm_law_limit: int = 10,
                       name: str = "explicit-pmf") -> IndicatorModel:
    """
    Indicator model given by its full joint pmf table

    Palm draws pair an unconditional draw I with an independent draw J from
    the law of I given I_i = 1; the resulting coupling law is enumerable for
    small n.
    """
    pmf = np.asarray(pmf, dtype=float).ravel()
    n = int(round(math.log2(pmf.size)))
    if 1 << n != pmf.size:
        raise InvalidInputError(f"pmf length {pmf.size} is not a power of two")
    p = pmf_marginals(pmf, n)
    if neighborhoods is None:
        neighborhoods = [(i,) for i in range(n)]
    codes = np.arange(pmf.size)

    def conditional(i: int) -> np.ndarray:
        if p[i] <= 0:
            raise InvalidInputError(f"trial {i} has probability 0; its Palm law is undefined")
        return np.where((codes >> i) & 1 == 1, pmf, 0.0) / p[i]

    def coupler(i: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        base = rng.choice(pmf.size, p=pmf)
        palm = rng.choice(pmf.size, p=conditional(i))
        rows = bits_of(np.array([base, palm]), n)
        return rows[0], rows[1]

    def palm_law(i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        cond = conditional(i)
        base = np.flatnonzero(pmf > 0)
        palm = np.flatnonzero(cond > 0)
        probs = np.outer(pmf[base], cond[palm]).ravel()
        return probs, np.repeat(base, palm.size), np.tile(palm, base.size)

    mark_samplers, mark_carrier = marks if marks is not None else (None, None)
    return IndicatorModel(
        p=p,
        neighborhoods=tuple(tuple(h) for h in neighborhoods),
        exact_pmf=pmf,
        palm_coupler=coupler,
        palm_law=palm_law if n <= palm_law_limit else None,
        marks=mark_samplers,
        mark_carrier=mark_carrier,
        locally_dependent=locally_dependent,
        name=name,
    )


# =========================================================================
# MARKED SAMPLERS
# =========================================================================

def grid_config(indicators: np.ndarray) -> PointConfig:
    """Xi = sum_i I_i delta_{i/n} on [0,1]"""
    indicators = np.asarray(indicators, dtype=bool)
    n = indicators.size
    return PointConfig(Carrier.real(1), (np.flatnonzero(indicators) + 1.0) / n)


def _lifted_config(im: IndicatorModel, trials: np.ndarray, rng: np.random.Generator) -> PointConfig:
    carrier = Carrier.lifted(im.mark_carrier)
    if trials.size == 0:
        return PointConfig.empty(carrier)
    rows = [im.mark_carrier.to_row(im.marks[i](rng))[0] for i in trials]
    return PointConfig(carrier, np.vstack(rows), trials + 1)


def sample_marked_trials(im: IndicatorModel, rng: np.random.Generator) -> PointConfig:
    """
    Lifted configuration {(U_i, i) : I_i = 1}

    Args:
        im: Model with mark samplers
        rng: Random generator

    Returns:
        PointConfig on the lifted carrier (mark carrier x trial labels 1..n)
    """
    if not im.has_marks:
        raise InvalidConfigurationError(f"model {im.name!r} has no mark samplers")
    indicators = im.sample(rng)
    return _lifted_config(im, np.flatnonzero(indicators), rng)


def sample_lifted_poisson(im: IndicatorModel, rng: np.random.Generator) -> PointConfig:
    """Matched Poisson process: Poisson(p_i) independent copies of trial i, each with its own mark"""
    if not im.has_marks:
        raise InvalidConfigurationError(f"model {im.name!r} has no mark samplers")
    copies = rng.poisson(im.p)
    return _lifted_config(im, np.repeat(np.arange(im.n), copies), rng)
