"""
Point Process Samplers
Poisson, immigration-death and Matérn hard-core processes with their mean measures
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial.distance import cdist

from carrier import GEOMETRIES, Carrier, CarrierPoint, PointConfig, Real1D
from errors import InvalidInputError

logger = logging.getLogger(__name__)

# Unit-ball volumes
KAPPA = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}

QUADRATURE_CHUNK = 4096


# =========================================================================
# MEAN MEASURES
# =========================================================================

class MeanMeasure(ABC):
    """Finite intensity measure on a carrier; total_mass is lambda"""

    carrier: Carrier

    @property
    @abstractmethod
    def total_mass(self) -> float:
        ...

    @abstractmethod
    def sample_points(self, k: int, rng: np.random.Generator) -> PointConfig:
        """k i.i.d. points from the normalized measure"""

    @abstractmethod
    def quadrature(self) -> Tuple[PointConfig, np.ndarray]:
        """Nodes and weights whose weighted sums integrate against the measure"""

    def sample(self, rng: np.random.Generator) -> PointConfig:
        return self.sample_points(int(rng.poisson(self.total_mass)), rng)


class DiscreteAtoms(MeanMeasure):
    """Weighted atoms sum_k w_k delta_{a_k}"""

    def __init__(self, atoms: Sequence[Tuple[CarrierPoint, float]]):
        atoms = list(atoms)
        if not atoms:
            raise InvalidInputError("DiscreteAtoms needs at least one atom")
        weights = np.array([w for _, w in atoms], dtype=float)
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise InvalidInputError("atom weights must be finite and > 0")
        self.points = PointConfig.from_points([p for p, _ in atoms])
        self.carrier = self.points.carrier
        self.weights = weights
        weights.setflags(write=False)

    @classmethod
    def on_grid(cls, weights: Sequence[float]) -> "DiscreteAtoms":
        """Atoms at i/n, i = 1..n (zero weights dropped)"""
        weights = np.asarray(weights, dtype=float)
        n = weights.size
        return cls([(Real1D((i + 1) / n), float(w)) for i, w in enumerate(weights) if w > 0])

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def sample_points(self, k: int, rng: np.random.Generator) -> PointConfig:
        idx = rng.choice(self.weights.size, size=k, p=self.weights / self.weights.sum())
        return self.points.select(idx)

    def quadrature(self) -> Tuple[PointConfig, np.ndarray]:
        return self.points, self.weights

    def sample(self, rng: np.random.Generator) -> PointConfig:
        # independent Poisson multiplicity per atom
        counts = rng.poisson(self.weights)
        return self.points.select(np.repeat(np.arange(self.weights.size), counts))

    def __repr__(self) -> str:
        return f"DiscreteAtoms(atoms={self.weights.size}, mass={self.total_mass:.6g})"


class BoxDensity(MeanMeasure):
    """
    Density on [0,1]^d (box or torus) integrated on a midpoint grid

    A float density means a constant; sampling is then uniform. Otherwise
    points are drawn by rejection under 1.05 x the largest grid value.
    """

    def __init__(self, dim: int, density: Union[float, Callable[[np.ndarray], np.ndarray]],
                 geometry: str = "box", grid: int = 64):
        if geometry not in GEOMETRIES:
            raise InvalidInputError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
        if grid < 1:
            raise InvalidInputError("grid resolution must be >= 1")
        self.carrier = Carrier.real(dim)
        self.dim = dim
        self.geometry = geometry
        self.grid = grid

        axis = (np.arange(grid) + 0.5) / grid
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        self.nodes = np.column_stack([m.ravel() for m in mesh])
        self.cell_volume = grid ** (-dim)

        if callable(density):
            self.constant = None
            self._density = density
            values = np.asarray(density(self.nodes), dtype=float).reshape(-1)
        else:
            self.constant = float(density)
            self._density = None
            values = np.full(self.nodes.shape[0], self.constant)
        if not np.all(np.isfinite(values)) or values.min() < 0:
            raise InvalidInputError("density values must be finite and nonnegative")
        self.values = values
        self._mass = self.constant if self.constant is not None else math.fsum(values) * self.cell_volume
        self._envelope = 1.05 * float(values.max())

    @property
    def total_mass(self) -> float:
        return self._mass

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.constant is not None:
            return np.full(x.shape[0], self.constant)
        return np.asarray(self._density(x), dtype=float).reshape(-1)

    def sample_points(self, k: int, rng: np.random.Generator) -> PointConfig:
        if k == 0:
            return PointConfig.empty(self.carrier)
        if self.constant is not None:
            return PointConfig(self.carrier, rng.random((k, self.dim)))

        accepted: List[np.ndarray] = []
        found = 0
        while found < k:
            batch = max(2 * (k - found), 64)
            x = rng.random((batch, self.dim))
            f = self.density(x)
            if np.any(f > self._envelope):
                logger.warning("density exceeds its rejection envelope (%.6g > %.6g)",
                               float(f.max()), self._envelope)
            keep = x[rng.random(batch) * self._envelope < f]
            accepted.append(keep)
            found += keep.shape[0]
        return PointConfig(self.carrier, np.vstack(accepted)[:k])

    def quadrature(self) -> Tuple[PointConfig, np.ndarray]:
        return PointConfig(self.carrier, self.nodes), self.values * self.cell_volume

    def __repr__(self) -> str:
        kind = "constant" if self.constant is not None else "variable"
        return f"BoxDensity(d={self.dim}, {self.geometry}, {kind}, mass={self._mass:.6g})"


# =========================================================================
# POISSON AND IMMIGRATION-DEATH PROCESSES
# =========================================================================

def sample_poisson_process(mm: MeanMeasure, rng: np.random.Generator) -> PointConfig:
    """One realization of Po(mm)"""
    return mm.sample(rng)


def _check_time(t: float) -> float:
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise InvalidInputError(f"time t={t} must be finite and >= 0")
    return t


def sample_immigration_death(xi0: PointConfig, mm: MeanMeasure, t: float,
                             rng: np.random.Generator) -> PointConfig:
    """
    State at time t of the immigration-death process started from xi0

    Args:
        xi0: Initial configuration
        mm: Immigration intensity measure (rate lambda, locations from mm normalized)
        t: Time horizon
        rng: Random generator

    Returns:
        Surviving initial points (each with probability e^-t) plus the
        immigrants still alive at t, a Poisson(lambda (1 - e^-t)) number of
        independent draws from mm
    """
    t = _check_time(t)
    if xi0.carrier != mm.carrier:
        raise InvalidInputError("initial configuration and mean measure live on different carriers")
    if t == 0:
        return xi0
    survivors = xi0.select(rng.random(xi0.size) < math.exp(-t))
    k = int(rng.poisson(mm.total_mass * -math.expm1(-t)))
    return survivors.concat(mm.sample_points(k, rng))


def immigration_death_path(xi0: PointConfig, mm: MeanMeasure, t: float,
                           rng: np.random.Generator) -> Tuple[List[Tuple[float, str, CarrierPoint]], PointConfig]:
    """Event-by-event simulation up to time t; returns (events, final configuration)"""
    t = _check_time(t)
    if xi0.carrier != mm.carrier:
        raise InvalidInputError("initial configuration and mean measure live on different carriers")

    lam = mm.total_mass
    alive = list(xi0.points)
    events: List[Tuple[float, str, CarrierPoint]] = []
    clock = 0.0
    while True:
        rate = lam + len(alive)
        if rate <= 0:
            break
        clock += rng.exponential(1.0 / rate)
        if clock > t:
            break
        if rng.random() < lam / rate:
            point = mm.sample_points(1, rng).point(0)
            alive.append(point)
            events.append((clock, "immigration", point))
        else:
            point = alive.pop(int(rng.integers(len(alive))))
            events.append((clock, "death", point))

    logger.debug("immigration-death path: %d events up to t=%g", len(events), t)
    return events, PointConfig.from_points(alive, xi0.carrier)


# =========================================================================
# MATERN HARD-CORE PROCESS
# =========================================================================

def _check_matern(mu: float, r: float, d: int, geometry: str) -> None:
    if not mu > 0 or not np.isfinite(mu):
        raise InvalidInputError(f"mu={mu} must be finite and > 0")
    if not r >= 0 or not np.isfinite(r):
        raise InvalidInputError(f"r={r} must be finite and >= 0")
    if d not in KAPPA:
        raise InvalidInputError(f"dimension d={d} not in {sorted(KAPPA)}")
    if geometry not in GEOMETRIES:
        raise InvalidInputError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")


def pairwise_distances(coords: np.ndarray, geometry: str = "box") -> np.ndarray:
    """Capped (at 1) Euclidean distances between the rows of coords"""
    if geometry == "torus":
        diff = np.abs(coords[:, None, :] - coords[None, :, :])
        diff = np.minimum(diff, 1.0 - diff)
        dist = np.sqrt((diff ** 2).sum(axis=2))
    else:
        dist = cdist(coords, coords)
    return np.minimum(dist, 1.0)


def hard_core_survivors(coords: np.ndarray, r: float, geometry: str = "box") -> np.ndarray:
    """Mask of points with no other point strictly closer than r"""
    n = coords.shape[0]
    if n < 2 or r <= 0:
        return np.ones(n, dtype=bool)
    dist = pairwise_distances(coords, geometry)
    np.fill_diagonal(dist, np.inf)
    return ~np.any(dist < r, axis=1)


def thin_hard_core(z: PointConfig, r: float, geometry: str = "box") -> PointConfig:
    """Delete every point of z lying within distance r of another point of z"""
    return z.select(hard_core_survivors(z.coords, r, geometry))


def sample_matern(mu: float, r: float, d: int, geometry: str,
                  rng: np.random.Generator) -> Tuple[PointConfig, PointConfig]:
    """
    Matérn hard-core sample on [0,1]^d

    Returns:
        (z, xi): the Poisson(mu) uniform parent configuration and its thinning
    """
    _check_matern(mu, r, d, geometry)
    count = int(rng.poisson(mu))
    z = PointConfig(Carrier.real(d), rng.random((count, d)))
    return z, thin_hard_core(z, r, geometry)


def _ball_box(alpha: np.ndarray, radius: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Volume of ball(alpha, radius) inside [0,1]^d, integrating one axis at a time"""
    a0 = alpha[:, 0]
    if alpha.shape[1] == 1:
        return np.clip(np.minimum(a0 + radius, 1.0) - np.maximum(a0 - radius, 0.0), 0.0, None)

    safe = np.where(radius > 0, radius, 1.0)
    lo = np.arcsin(np.clip((np.maximum(a0 - radius, 0.0) - a0) / safe, -1.0, 1.0))
    hi = np.arcsin(np.clip((np.minimum(a0 + radius, 1.0) - a0) / safe, -1.0, 1.0))
    half = np.where(radius > 0, 0.5 * (hi - lo), 0.0)
    phi = 0.5 * (hi + lo)[:, None] + half[:, None] * x[None, :]
    section = radius[:, None] * np.cos(phi)

    k, nodes = phi.shape
    inner = _ball_box(np.repeat(alpha[:, 1:], nodes, axis=0), section.ravel(), x, w).reshape(k, nodes)
    return (inner * section * w[None, :]).sum(axis=1) * half


def ball_box_volume(alpha: np.ndarray, r: float, nodes: int = 32) -> np.ndarray:
    """
    V(alpha, r): volume of the radius-r ball around each row of alpha intersected with [0,1]^d

    Exact for d = 1 and for balls inside the box; Gauss-Legendre quadrature in
    the angle variable along each axis otherwise.
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    d = alpha.shape[1]
    volume = np.full(alpha.shape[0], KAPPA[d] * r ** d)
    if r == 0:
        return volume * 0.0
    boundary = np.flatnonzero(np.any((alpha < r) | (alpha > 1.0 - r), axis=1))
    x, w = leggauss(nodes)
    for start in range(0, boundary.size, QUADRATURE_CHUNK):
        idx = boundary[start:start + QUADRATURE_CHUNK]
        volume[idx] = _ball_box(alpha[idx], np.full(idx.size, float(r)), x, w)
    return volume


def matern_intensity(mu: float, r: float, d: int, geometry: str = "torus") -> float:
    """Torus intensity mu exp(-mu kappa_d r^d)"""
    _check_matern(mu, r, d, geometry)
    return mu * math.exp(-mu * KAPPA[d] * r ** d)


def matern_mean_measure(mu: float, r: float, d: int, geometry: str = "torus",
                        grid: int = 64) -> BoxDensity:
    """
    Mean measure of the Matérn hard-core process

    Args:
        mu: Parent Poisson intensity
        r: Hard-core radius
        d: Dimension (1..3)
        geometry: 'torus' (constant density) or 'box' (quadrature of V(alpha, r))
        grid: Quadrature nodes per axis, at least 32

    Returns:
        BoxDensity with density mu exp(-mu V(alpha, r))
    """
    _check_matern(mu, r, d, geometry)
    if grid < 32:
        raise InvalidInputError(f"grid={grid} must be >= 32")
    if geometry == "torus":
        if r > 0.5:
            raise InvalidInputError(f"torus geometry needs r <= 0.5, got {r}")
        return BoxDensity(d, matern_intensity(mu, r, d, geometry), "torus", grid)
    if r == 0:
        return BoxDensity(d, float(mu), "box", grid)
    return BoxDensity(d, lambda x: mu * np.exp(-mu * ball_box_volume(x, r)), "box", grid)
