"""
Carrier Space
Carrier points, finite point configurations and the ground pseudometrics on them
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InvalidInputError

logger = logging.getLogger(__name__)

GEOMETRIES = ("box", "torus")


# =========================================================================
# CARRIER POINTS
# =========================================================================

def _check_unit(value: float, what: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0 or value > 1.0:
        raise InvalidInputError(f"{what}={value} lies outside [0, 1]")
    return value


def _check_index(value: Any, what: str) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise InvalidInputError(f"{what}={value!r} must be an integer >= 1")
    return int(value)


@dataclass(frozen=True)
class DiscreteIndex:
    """Atom i of a countable index carrier"""
    i: int

    def __post_init__(self):
        object.__setattr__(self, "i", _check_index(self.i, "index"))


@dataclass(frozen=True)
class Real1D:
    """Point of the unit interval"""
    x: float

    def __post_init__(self):
        object.__setattr__(self, "x", _check_unit(self.x, "x"))


@dataclass(frozen=True)
class RealVec:
    """Point of the unit box [0,1]^d, d <= 3"""
    x: Tuple[float, ...]

    def __post_init__(self):
        coords = tuple(_check_unit(v, "coordinate") for v in np.atleast_1d(self.x))
        if not 1 <= len(coords) <= 3:
            raise InvalidInputError(f"RealVec dimension {len(coords)} not in 1..3")
        object.__setattr__(self, "x", coords)


@dataclass(frozen=True)
class Lifted:
    """Point (mark, trial) of a lifted space S x I"""
    mark: Union[DiscreteIndex, Real1D, RealVec]
    trial: int

    def __post_init__(self):
        if not isinstance(self.mark, (DiscreteIndex, Real1D, RealVec)):
            raise InvalidInputError("a lifted mark must be a plain carrier point")
        object.__setattr__(self, "trial", _check_index(self.trial, "trial"))


CarrierPoint = Union[DiscreteIndex, Real1D, RealVec, Lifted]


# =========================================================================
# CARRIER DESCRIPTORS
# =========================================================================

@dataclass(frozen=True)
class Carrier:
    """
    Descriptor shared by every point of a configuration

    kind is 'discrete', 'real' (box [0,1]^dim) or 'lifted' (mark carrier x trials).
    """
    kind: str
    dim: int = 1
    mark: Optional["Carrier"] = None

    def __post_init__(self):
        if self.kind not in ("discrete", "real", "lifted"):
            raise InvalidInputError(f"unknown carrier kind {self.kind!r}")
        if self.kind == "real" and not 1 <= self.dim <= 3:
            raise InvalidInputError(f"real carrier dimension {self.dim} not in 1..3")
        if self.kind == "discrete" and self.dim != 1:
            raise InvalidInputError("discrete carriers are one-dimensional")
        if self.kind == "lifted":
            if self.mark is None or self.mark.kind == "lifted":
                raise InvalidInputError("lifted carriers need a plain mark carrier")
            object.__setattr__(self, "dim", self.mark.dim)
        elif self.mark is not None:
            raise InvalidInputError("only lifted carriers carry a mark carrier")

    @classmethod
    def discrete(cls) -> "Carrier":
        return cls("discrete")

    @classmethod
    def real(cls, dim: int = 1) -> "Carrier":
        return cls("real", int(dim))

    @classmethod
    def lifted(cls, mark: "Carrier") -> "Carrier":
        return cls("lifted", mark.dim, mark)

    @classmethod
    def of(cls, p: CarrierPoint) -> "Carrier":
        """Carrier a single point belongs to"""
        if isinstance(p, DiscreteIndex):
            return cls.discrete()
        if isinstance(p, Real1D):
            return cls.real(1)
        if isinstance(p, RealVec):
            return cls.real(len(p.x))
        if isinstance(p, Lifted):
            return cls.lifted(cls.of(p.mark))
        raise InvalidInputError(f"{p!r} is not a carrier point")

    @property
    def width(self) -> int:
        """Number of coordinate columns per point"""
        return self.dim

    def contains(self, p: Any) -> bool:
        try:
            return Carrier.of(p) == self
        except InvalidInputError:
            return False

    def to_row(self, p: CarrierPoint) -> Tuple[np.ndarray, Optional[int]]:
        if not self.contains(p):
            raise InvalidInputError(f"{p!r} does not belong to carrier {self}")
        if isinstance(p, Lifted):
            coords, _ = self.mark.to_row(p.mark)
            return coords, p.trial
        if isinstance(p, DiscreteIndex):
            return np.array([float(p.i)]), None
        if isinstance(p, Real1D):
            return np.array([p.x]), None
        return np.array(p.x, dtype=float), None

    def from_row(self, coords: np.ndarray, trial: Optional[int] = None) -> CarrierPoint:
        if self.kind == "lifted":
            return Lifted(self.mark.from_row(coords), int(trial))
        if self.kind == "discrete":
            return DiscreteIndex(int(round(coords[0])))
        if self.dim == 1:
            return Real1D(float(coords[0]))
        return RealVec(tuple(float(c) for c in coords))


# =========================================================================
# POINT CONFIGURATIONS
# =========================================================================

class PointConfig:
    """
    Finite multiset of carrier points

    Coordinates live in an immutable (n, width) array; lifted configurations
    keep the trial labels in a parallel integer array.
    """

    __slots__ = ("_carrier", "_coords", "_trials")

    def __init__(self, carrier: Carrier, coords: Any = None, trials: Any = None):
        width = carrier.width
        if coords is None:
            coords = np.empty((0, width))
        coords = np.array(coords, dtype=float).reshape(-1, width) if np.size(coords) else np.empty((0, width))
        n = coords.shape[0]

        if carrier.kind == "discrete":
            if n and (np.any(coords < 1) or np.any(coords != np.round(coords))):
                raise InvalidInputError("discrete coordinates must be integers >= 1")
        else:
            if n and (not np.all(np.isfinite(coords)) or np.any(coords < 0) or np.any(coords > 1)):
                raise InvalidInputError("real coordinates must lie in [0, 1]")

        if carrier.kind == "lifted":
            if trials is None:
                raise InvalidInputError("lifted configurations need trial labels")
            trials = np.array(trials, dtype=np.int64).reshape(-1)
            if trials.shape[0] != n or (n and trials.min() < 1):
                raise InvalidInputError("trial labels must be integers >= 1, one per point")
            trials.setflags(write=False)
        elif trials is not None:
            raise InvalidInputError("only lifted configurations carry trial labels")

        coords.setflags(write=False)
        self._carrier = carrier
        self._coords = coords
        self._trials = trials

    # ---------------------------------------------------------------------
    # Constructors
    # ---------------------------------------------------------------------

    @classmethod
    def empty(cls, carrier: Carrier) -> "PointConfig":
        return cls(carrier)

    @classmethod
    def from_points(cls, points: Iterable[CarrierPoint], carrier: Optional[Carrier] = None) -> "PointConfig":
        points = list(points)
        if carrier is None:
            if not points:
                raise InvalidInputError("an empty configuration needs an explicit carrier")
            carrier = Carrier.of(points[0])
        rows, trials = [], []
        for p in points:
            coords, trial = carrier.to_row(p)
            rows.append(coords)
            trials.append(trial)
        coords = np.vstack(rows) if rows else None
        return cls(carrier, coords, trials if carrier.kind == "lifted" else None)

    # ---------------------------------------------------------------------
    # Accessors
    # ---------------------------------------------------------------------

    @property
    def carrier(self) -> Carrier:
        return self._carrier

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def trials(self) -> Optional[np.ndarray]:
        return self._trials

    @property
    def size(self) -> int:
        return self._coords.shape[0]

    def __len__(self) -> int:
        return self.size

    def point(self, k: int) -> CarrierPoint:
        trial = None if self._trials is None else int(self._trials[k])
        return self._carrier.from_row(self._coords[k], trial)

    @property
    def points(self) -> Tuple[CarrierPoint, ...]:
        return tuple(self.point(k) for k in range(self.size))

    def __iter__(self) -> Iterator[CarrierPoint]:
        return iter(self.points)

    def marks(self) -> "PointConfig":
        """Mark-space view of a lifted configuration (trial labels dropped)"""
        if self._carrier.kind != "lifted":
            raise InvalidInputError("marks() needs a lifted configuration")
        return PointConfig(self._carrier.mark, self._coords)

    def select(self, keep: Any) -> "PointConfig":
        """Sub-multiset picked by a boolean mask or index array"""
        keep = np.asarray(keep)
        trials = None if self._trials is None else self._trials[keep]
        return PointConfig(self._carrier, self._coords[keep], trials)

    def concat(self, other: "PointConfig") -> "PointConfig":
        if other.carrier != self._carrier:
            raise InvalidInputError("cannot merge configurations on different carriers")
        trials = None
        if self._trials is not None:
            trials = np.concatenate([self._trials, other.trials])
        return PointConfig(self._carrier, np.vstack([self._coords, other.coords]), trials)

    def _sorted_rows(self) -> np.ndarray:
        rows = self._coords
        if self._trials is not None:
            rows = np.column_stack([rows, self._trials.astype(float)])
        if rows.shape[0] == 0:
            return rows
        order = np.lexsort(rows.T[::-1])
        return rows[order]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointConfig):
            return NotImplemented
        return (self._carrier == other.carrier and self.size == other.size
                and np.array_equal(self._sorted_rows(), other._sorted_rows()))

    def __hash__(self) -> int:
        return hash((self._carrier, self._sorted_rows().tobytes()))

    def __repr__(self) -> str:
        return f"PointConfig({self._carrier.kind}, dim={self._carrier.dim}, size={self.size})"


# =========================================================================
# CONFIGURATION OPERATIONS
# =========================================================================

def restrict(xi: PointConfig, region: Callable[[CarrierPoint], bool]) -> PointConfig:
    """
    Restriction xi|_B of a configuration to a region

    Args:
        xi: Configuration to filter
        region: Predicate on carrier points, total on the carrier

    Returns:
        The sub-multiset of points for which region(p) is true
    """
    mask = np.fromiter((bool(region(p)) for p in xi.points), dtype=bool, count=xi.size)
    return xi.select(mask)


def box_region(lower: Union[float, Sequence[float]], upper: Union[float, Sequence[float]],
               include_upper: bool = True) -> Callable[[CarrierPoint], bool]:
    """Predicate for a closed (or right-open) box; lifted points are tested on their mark"""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))

    def region(p: CarrierPoint) -> bool:
        if isinstance(p, Lifted):
            p = p.mark
        if isinstance(p, DiscreteIndex):
            x = np.array([float(p.i)])
        elif isinstance(p, Real1D):
            x = np.array([p.x])
        else:
            x = np.asarray(p.x)
        upper_ok = np.all(x <= hi) if include_upper else np.all(x < hi)
        return bool(np.all(x >= lo) and upper_ok)

    return region


def add_point(xi: PointConfig, p: CarrierPoint) -> PointConfig:
    """xi + delta_p"""
    if not xi.carrier.contains(p):
        raise InvalidInputError(f"{p!r} does not belong to the configuration's carrier")
    return xi.concat(PointConfig.from_points([p], xi.carrier))


def remove_point(xi: PointConfig, p: CarrierPoint) -> PointConfig:
    """xi - delta_p; removes one copy of p"""
    if not xi.carrier.contains(p):
        raise InvalidInputError(f"{p!r} does not belong to the configuration's carrier")
    coords, trial = xi.carrier.to_row(p)
    hits = np.all(xi.coords == coords, axis=1)
    if xi.trials is not None:
        hits &= xi.trials == trial
    found = np.flatnonzero(hits)
    if found.size == 0:
        raise InvalidInputError(f"{p!r} is not present in the configuration")
    keep = np.ones(xi.size, dtype=bool)
    keep[found[0]] = False
    return xi.select(keep)


def config_from_json(data: Any, carrier: Optional[Carrier] = None) -> PointConfig:
    """
    Parse the JSON configuration format

    A configuration is an array whose entries are numbers (points of [0,1]),
    arrays (points of [0,1]^d), {"index": i} objects (discrete atoms) or
    {"mark": ..., "trial": i} objects (lifted points).
    """
    if not isinstance(data, list):
        raise InvalidInputError("a configuration must be a JSON array")

    def parse(entry: Any) -> CarrierPoint:
        if isinstance(entry, dict):
            if "trial" in entry:
                return Lifted(parse(entry.get("mark")), entry["trial"])
            if "index" in entry:
                return DiscreteIndex(entry["index"])
            raise InvalidInputError(f"unrecognised point object {entry!r}")
        if isinstance(entry, (list, tuple)):
            return Real1D(entry[0]) if len(entry) == 1 else RealVec(tuple(entry))
        if isinstance(entry, (int, float)) and not isinstance(entry, bool):
            return Real1D(entry)
        raise InvalidInputError(f"unrecognised point {entry!r}")

    points = [parse(entry) for entry in data]
    if not points:
        return PointConfig.empty(carrier or Carrier.real(1))
    return PointConfig.from_points(points, carrier)


# =========================================================================
# GROUND PSEUDOMETRICS
# =========================================================================

class GroundDistance(ABC):
    """Pseudometric rho0 on a carrier, bounded by 1"""

    @abstractmethod
    def supports(self, carrier: Carrier) -> bool:
        ...

    @abstractmethod
    def _matrix(self, a: PointConfig, b: PointConfig) -> np.ndarray:
        ...

    def pairwise(self, a: PointConfig, b: PointConfig) -> np.ndarray:
        """Matrix of ground distances between the points of a and b"""
        if a.carrier != b.carrier:
            raise InvalidInputError(f"carrier mismatch: {a.carrier} vs {b.carrier}")
        if not self.supports(a.carrier):
            raise InvalidInputError(f"{self!r} is not defined on carrier {a.carrier}")
        return self._matrix(a, b)

    def __call__(self, p: CarrierPoint, q: CarrierPoint) -> float:
        return rho0(self, p, q)


@dataclass(frozen=True)
class ZeroPseudo(GroundDistance):
    """rho0 == 0; turns rho2 into total variation of counts"""

    def supports(self, carrier: Carrier) -> bool:
        return True

    def _matrix(self, a: PointConfig, b: PointConfig) -> np.ndarray:
        return np.zeros((a.size, b.size))


@dataclass(frozen=True)
class CappedEuclidean(GroundDistance):
    """|x - y| ^ cap on the unit box, optionally with wrap-around (torus) differences"""
    geometry: str = "box"
    cap: float = 1.0

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise InvalidInputError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if not 0.0 < self.cap <= 1.0:
            raise InvalidInputError(f"cap={self.cap} must lie in (0, 1]")

    def supports(self, carrier: Carrier) -> bool:
        if carrier.kind == "real":
            return True
        return carrier.kind == "discrete" and self.geometry == "box"

    def _matrix(self, a: PointConfig, b: PointConfig) -> np.ndarray:
        diff = np.abs(a.coords[:, None, :] - b.coords[None, :, :])
        if self.geometry == "torus":
            diff = np.minimum(diff, 1.0 - diff)
        return np.minimum(np.sqrt((diff ** 2).sum(axis=2)), self.cap)


@dataclass(frozen=True)
class LiftedMark(GroundDistance):
    """rho0((s,i),(t,j)) = inner(s,t); the trial label is ignored"""
    inner: GroundDistance = field(default_factory=CappedEuclidean)

    def supports(self, carrier: Carrier) -> bool:
        return carrier.kind == "lifted" and self.inner.supports(carrier.mark)

    def _matrix(self, a: PointConfig, b: PointConfig) -> np.ndarray:
        return self.inner.pairwise(a.marks(), b.marks())


def rho0(g: GroundDistance, p: CarrierPoint, q: CarrierPoint) -> float:
    """Ground distance between two single points"""
    carrier = Carrier.of(p)
    if Carrier.of(q) != carrier:
        raise InvalidInputError(f"carrier mismatch between {p!r} and {q!r}")
    a = PointConfig.from_points([p], carrier)
    b = PointConfig.from_points([q], carrier)
    return float(g.pairwise(a, b)[0, 0])
