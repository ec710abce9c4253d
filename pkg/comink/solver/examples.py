"""Generators of the boundary examples: a C-close set with unbounded
coconvex part in the octant, and a locally finite measure that is not a
surface area measure."""

import math
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy.spatial import ConvexHull

from comink.cone.cone import Cone, atom_margins
from comink.errors import CertificationFailed, InvalidInputError
from comink.geom.polytope import _plane_basis, unit
from comink.measures.measure import DiscreteMeasure, make_measure

MAX_ORTHANT_BANDS = 100_000
MAX_BLOWUP_ATOMS = 60


class BandFacet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    normal: np.ndarray
    area: float


class OrthantExample(BaseModel):
    """
    Truncation of the octant example with bands n = 1..N.

    Attributes
    ----------
    vertices : np.ndarray
        Rows p_1, q_1, p_2, q_2, ..., p_{N+1}, q_{N+1}.
    facets : list of BandFacet
        Outer unit normal and exact area of every band.
    slantless_series : float
        (1/sqrt 2) sum_{n<=N} (a_n + a_{n+1}), the series without slant factor.
    exact_series : float
        Sum of the exact band areas.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vertices: np.ndarray
    facets: List[BandFacet]
    slantless_series: float
    exact_series: float

    def band(self, n: int) -> np.ndarray:
        """The four corners p_n, q_n, q_{n+1}, p_{n+1} of band n (1-based)."""
        i = 2 * (n - 1)
        return self.vertices[[i, i + 1, i + 3, i + 2]]


def _band_hull_area(corners: np.ndarray, normal: np.ndarray) -> float:
    e1, e2 = _plane_basis(normal)
    return float(ConvexHull(np.column_stack([corners @ e1, corners @ e2])).volume)


def gen_orthant_example(n_bands: int, hull_check: Optional[int] = 200) -> OrthantExample:
    """
    Vertices, band facets and partial sums of the octant example with a_n = 1/n^2.

    Parameters
    ----------
    n_bands : int
        Number N of bands, 1 <= N <= 10^5.
    hull_check : int, optional
        Number of leading bands whose exact areas are compared against a
        convex hull of their corners; None skips the comparison.

    Returns
    -------
    OrthantExample
        The truncated example.

    Raises
    ------
    CertificationFailed
        If a hull area differs from the exact area by more than 1e-9 relative.
    """
    if not 1 <= n_bands <= MAX_ORTHANT_BANDS:
        raise InvalidInputError(f"Number of bands must lie in [1, {MAX_ORTHANT_BANDS}], got {n_bands}")
    n = np.arange(1, n_bands + 2, dtype=float)
    a = 1.0 / n**2
    vertices = np.empty((2 * len(n), 3))
    vertices[0::2] = np.column_stack([a, np.zeros_like(a), n - 1.0])
    vertices[1::2] = np.column_stack([np.zeros_like(a), a, n - 1.0])

    slope = np.diff(a)
    areas = (a[:-1] + a[1:]) / math.sqrt(2.0) * np.sqrt(1.0 + slope**2 / 2.0)
    normals = np.column_stack([-np.ones_like(slope), -np.ones_like(slope), slope])
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)

    example = OrthantExample(
        vertices=vertices,
        facets=[BandFacet(normal=u, area=float(f)) for u, f in zip(normals, areas)],
        slantless_series=math.fsum(a[:-1] + a[1:]) / math.sqrt(2.0),
        exact_series=math.fsum(areas),
    )

    for k in range(1, min(n_bands, hull_check or 0) + 1):
        facet = example.facets[k - 1]
        hull_area = _band_hull_area(example.band(k), facet.normal)
        if abs(hull_area - facet.area) > 1e-9 * facet.area:
            logger.error(f"Band {k}: hull area {hull_area!r} against exact area {facet.area!r}")
            raise CertificationFailed(f"Band {k} area does not match its convex hull")

    logger.info(
        f"Octant example with {n_bands} bands: slantless series {example.slantless_series:.10f}, "
        f"exact series {example.exact_series:.10f}"
    )
    return example


def gen_boundary_blowup_measure(C: Cone, count: int) -> DiscreteMeasure:
    """
    Locally finite measure with delta^(d-1) phi unbounded near bd Omega_C.

    Atom k sits at boundary margin 2^-k on the geodesic from -w to the nearest
    point of bd Omega_C and has mass k 2^(k(d-1)). Atoms closer than the merge
    tolerance, which happens for k beyond about 36, coalesce.

    Raises
    ------
    InvalidInputError
        If count is outside [1, 60] or -w is closer than 1/2 to bd Omega_C.
    """
    if not 1 <= count <= MAX_BLOWUP_ATOMS:
        raise InvalidInputError(f"count must lie in [1, {MAX_BLOWUP_ATOMS}], got {count}")
    center = -C.w
    inner = -(C.generators @ center)
    j = int(np.argmin(inner))
    if math.asin(min(float(inner[j]), 1.0)) <= 0.5:
        raise InvalidInputError("Omega_C is too narrow for the dyadic margin ladder")
    g = C.generators[j]
    foot = unit(center - (center @ g) * g)

    atoms: List[Tuple[np.ndarray, float]] = []
    for k in range(1, count + 1):
        delta = 2.0**-k
        u = unit(math.cos(delta) * foot - math.sin(delta) * g)
        atoms.append((u, k * delta ** -(C.dim - 1)))
    phi = make_measure(atoms, C.dim)

    margins = atom_margins(C, phi.points)
    logger.debug(f"Blow-up measure: {len(phi)} atoms, smallest margin {margins.min():.3e}")
    return phi
