import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, model_validator

from comink.cone.cone import Cone, atom_margins
from comink.errors import DimensionMismatch, MissingValue, NonpositiveMass, NonUnitAtom
from comink.geom.polytope import UNIT_TOL, as_vector, is_unit

# Atoms closer than this are the same atom
ATOM_TOL = 1e-12


class DiscreteMeasure(BaseModel):
    """
    Finite discrete Borel measure on the unit sphere.

    Attributes
    ----------
    dim : int
        Ambient dimension, 0 for an empty measure built without one.
    points : np.ndarray
        Unit atoms, shape (n, dim), pairwise farther apart than ATOM_TOL.
    masses : np.ndarray
        Strictly positive masses, shape (n,).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dim: int
    points: np.ndarray
    masses: np.ndarray

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.points.shape != (len(self.masses), self.dim):
            raise ValueError(f"Atoms of shape {self.points.shape} do not match {len(self.masses)} masses")
        if np.any(self.masses <= 0.0) or not np.all(np.isfinite(self.masses)):
            raise ValueError("Masses must be finite and strictly positive")
        return self

    @property
    def total(self) -> float:
        return math.fsum(self.masses)

    def __len__(self) -> int:
        return len(self.masses)

    def __iter__(self):
        return iter(zip(self.points, self.masses))

    def atoms(self) -> List[Tuple[np.ndarray, float]]:
        return [(u.copy(), float(m)) for u, m in self]

    def mass_at(self, u) -> float:
        """Mass of the atom within ATOM_TOL of u, 0 if there is none."""
        if not len(self):
            return 0.0
        dist = np.linalg.norm(self.points - np.asarray(u, dtype=float), axis=1)
        j = int(np.argmin(dist))
        return float(self.masses[j]) if dist[j] <= ATOM_TOL else 0.0

    def subset(self, keep) -> "DiscreteMeasure":
        keep = np.asarray(keep, dtype=bool)
        return DiscreteMeasure(dim=self.dim, points=self.points[keep], masses=self.masses[keep])


def make_measure(atoms: Iterable[Tuple[Sequence[float], float]], dim: Optional[int] = None) -> DiscreteMeasure:
    """
    Build a discrete measure from (unit vector, mass) pairs.

    Atoms closer than ATOM_TOL are merged by adding their masses.

    Parameters
    ----------
    atoms : iterable of (array_like, float)
        Atom positions and masses.
    dim : int, optional
        Ambient dimension; inferred from the first atom when omitted.

    Returns
    -------
    DiscreteMeasure
        The measure.

    Raises
    ------
    NonpositiveMass
        If a mass is not strictly positive.
    NonUnitAtom
        If a position is not a unit vector within 1e-12.
    """
    points: List[np.ndarray] = []
    masses: List[float] = []
    for u, mass in atoms:
        u = as_vector(u, dim)
        dim = u.shape[0]
        mass = float(mass)
        if not mass > 0.0 or not math.isfinite(mass):
            logger.error(f"Atom {u.tolist()} carries mass {mass}")
            raise NonpositiveMass(f"Atom {u.tolist()} has nonpositive mass {mass}")
        if not is_unit(u, UNIT_TOL):
            logger.error(f"Atom {u.tolist()} has norm {np.linalg.norm(u)!r}")
            raise NonUnitAtom(f"Atom {u.tolist()} is not a unit vector")
        u = u / np.linalg.norm(u)
        for i, p in enumerate(points):
            if np.linalg.norm(p - u) <= ATOM_TOL:
                masses[i] += mass
                break
        else:
            points.append(u)
            masses.append(mass)

    dim = dim or 0
    return DiscreteMeasure(
        dim=dim,
        points=np.array(points, dtype=float) if points else np.zeros((0, dim)),
        masses=np.array(masses, dtype=float),
    )


def empty_measure(dim: int) -> DiscreteMeasure:
    return make_measure([], dim)


# ==============================================================================


class AtomFunction(BaseModel):
    """
    A real function given by its values on finitely many unit vectors.

    Calling it on a vector returns the value of the listed vector within
    ATOM_TOL and raises MissingValue otherwise.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    values: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Sequence[float], float]]) -> "AtomFunction":
        pairs = list(pairs)
        if not pairs:
            return cls(points=np.zeros((0, 0)), values=np.zeros(0))
        return cls(
            points=np.array([np.asarray(u, dtype=float) for u, _ in pairs]),
            values=np.array([float(v) for _, v in pairs]),
        )

    @classmethod
    def from_callable(cls, f: Callable[[np.ndarray], float], points) -> "AtomFunction":
        points = np.asarray(points, dtype=float)
        return cls(points=points, values=np.array([float(f(u)) for u in points]))

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=float)
        if len(self.values):
            if self.points.shape[1] != u.shape[0]:
                raise DimensionMismatch("Function and argument dimensions differ")
            dist = np.linalg.norm(self.points - u, axis=1)
            j = int(np.argmin(dist))
            if dist[j] <= ATOM_TOL:
                return float(self.values[j])
        raise MissingValue(f"No value given at {u.tolist()}")


def bl_norm(f: Callable[[np.ndarray], float], omega) -> Tuple[float, float, float]:
    """
    Bounded-Lipschitz norm of f restricted to the atoms of omega.

    Parameters
    ----------
    f : callable
        Function of a unit vector, for instance an AtomFunction.
    omega : array_like
        Nonempty list of unit vectors on which f is evaluated.

    Returns
    -------
    tuple of float
        (lip, sup, bl) with bl = lip + sup; lip is 0 on a single atom.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] == 0:
        raise ValueError("bl_norm needs at least one atom")
    values = np.array([f(u) for u in omega])
    diff = np.abs(values[:, None] - values[None, :])
    dist = np.linalg.norm(omega[:, None, :] - omega[None, :, :], axis=2)
    off = dist > ATOM_TOL
    lip = float(np.max(diff[off] / dist[off])) if np.any(off) else 0.0
    sup = float(np.max(np.abs(values)))
    return lip, sup, lip + sup


def pairing_gap(f: Callable[[np.ndarray], float], mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """|∫ f dmu - ∫ f dnu| for f defined on both supports."""
    terms = [f(u) * m for u, m in mu] + [-f(v) * m for v, m in nu]
    return abs(math.fsum(terms))


def restrict_margin(mu: DiscreteMeasure, C: Cone, delta: float) -> DiscreteMeasure:
    """
    Restriction of mu to the atoms at boundary margin at least delta.

    Raises
    ------
    AtomOutsideOmega
        If an atom of mu is outside Omega_C.
    """
    if not len(mu):
        return DiscreteMeasure(dim=C.dim, points=np.zeros((0, C.dim)), masses=np.zeros(0))
    if mu.dim != C.dim:
        raise DimensionMismatch(f"Measure of dimension {mu.dim} on a cone of dimension {C.dim}")
    margins = atom_margins(C, mu.points)
    restricted = mu.subset(margins >= delta)
    logger.debug(f"Margin {delta:.3e} keeps {len(restricted)} of {len(mu)} atoms")
    return restricted
