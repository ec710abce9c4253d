from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from comink.errors import DimensionMismatch, EmptyIntersection, Unbounded

# Incidence tolerance, scaled by (1 + coordinate magnitude)
EPS_GEO = 1e-9
# Tolerance on | |v| - 1 | for vectors that must be unit
UNIT_TOL = 1e-12


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    """
    Convert a sequence of coordinates into a 1-D float array.

    Parameters
    ----------
    x : array_like
        Coordinates.
    dim : int, optional
        Required length; checked when given.

    Returns
    -------
    np.ndarray
        The coordinates as a float array of shape (d,).

    Raises
    ------
    DimensionMismatch
        If the array is not 1-D of length 2 or 3, or differs from `dim`.
    """
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] not in (2, 3) or (dim is not None and v.shape[0] != dim):
        raise DimensionMismatch(f"Expected a vector of length {dim or '2 or 3'}, got {v.shape[0]}")
    return v


def unit(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("Cannot normalize the zero vector")
    return v / norm


def is_unit(x, tol: float = UNIT_TOL) -> bool:
    return abs(float(np.linalg.norm(x)) - 1.0) <= tol


def geo_tol(scale: float) -> float:
    return EPS_GEO * (1.0 + scale)


class Halfspace(BaseModel):
    """
    The closed halfspace {x : <normal, x> <= offset}.

    Attributes
    ----------
    normal : np.ndarray
        Unit outer normal.
    offset : float
        Right-hand side of the inequality.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    normal: np.ndarray
    offset: float

    @field_validator("normal", mode="before")
    @classmethod
    def _coerce_normal(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check_unit(self):
        if not is_unit(self.normal):
            raise ValueError(f"Halfspace normal is not a unit vector: {self.normal}")
        return self


class Facet(BaseModel):
    """
    Facet record of a polytope.

    Attributes
    ----------
    normal : np.ndarray
        Unit outer normal, stored exactly as given by the originating halfspace.
    offset : float
        Offset of the supporting hyperplane.
    vertex_indices : list of int
        Indices into the polytope vertices, ordered counterclockwise seen from outside.
    area : float
        (d-1)-dimensional area; an edge length when d = 2.
    source : int, optional
        Index of the input halfspace the facet comes from.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    normal: np.ndarray
    offset: float
    vertex_indices: List[int]
    area: float
    source: Optional[int] = None


class Polytope(BaseModel):
    """
    Bounded convex polytope in dimension 2 or 3 with its facet records.

    Attributes
    ----------
    dim : int
        Ambient dimension.
    vertices : np.ndarray
        Array of shape (n, dim).
    facets : list of Facet
        One record per facet.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dim: int
    vertices: np.ndarray
    facets: List[Facet]

    _segments: Optional[Tuple[np.ndarray, np.ndarray]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.dim not in (2, 3):
            raise ValueError(f"Polytopes live in dimension 2 or 3, got {self.dim}")
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[0] == 0 or vertices.shape[1] != self.dim:
            raise ValueError(f"Vertex array has shape {vertices.shape}")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("Polytope vertices must be finite")
        self.vertices = vertices

        tol = geo_tol(self.scale)
        for facet in self.facets:
            if facet.area < 0.0:
                raise ValueError(f"Negative facet area {facet.area}")
            slack = vertices @ facet.normal - facet.offset
            if np.any(slack > tol):
                raise ValueError("A vertex violates a facet inequality")
            if np.any(np.abs(slack[facet.vertex_indices]) > tol):
                raise ValueError("A facet vertex is off its hyperplane")
        return self

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.vertices)))

    @property
    def normals(self) -> np.ndarray:
        return np.array([facet.normal for facet in self.facets]).reshape(-1, self.dim)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([facet.offset for facet in self.facets])

    def facet_by_source(self, source: int) -> Optional[Facet]:
        for facet in self.facets:
            if facet.source == source:
                return facet
        return None

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        """Edges of the polytope as two endpoint arrays of shape (m, dim)."""
        if self._segments is None:
            starts, ends = [], []
            for facet in self.facets:
                idx = facet.vertex_indices
                if self.dim == 2:
                    starts.append(self.vertices[idx[0]])
                    ends.append(self.vertices[idx[-1]])
                else:
                    for k in range(len(idx)):
                        starts.append(self.vertices[idx[k]])
                        ends.append(self.vertices[idx[(k + 1) % len(idx)]])
            self._segments = (np.array(starts), np.array(ends))
        return self._segments


# ==============================================================================
# Construction


def _check_bounded(normals: np.ndarray) -> None:
    """The intersection is bounded iff the origin is interior to the hull of the normals."""
    try:
        hull = ConvexHull(normals)
    except (QhullError, ValueError) as e:
        logger.error(f"Halfspace normals do not positively span the space: {e}")
        raise Unbounded("The halfspace intersection has a recession direction") from e
    if np.any(hull.equations[:, -1] > -UNIT_TOL):
        logger.error("Origin is not interior to the hull of the halfspace normals")
        raise Unbounded("The halfspace intersection has a recession direction")


def _chebyshev_center(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Center of the largest ball inside the intersection, found by linear programming."""
    dim = normals.shape[1]
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([normals, np.ones((normals.shape[0], 1))])
    bounds = [(None, None)] * dim + [(0.0, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=offsets, bounds=bounds, method="highs")
    if res.status == 2 or res.x is None:
        logger.error("Halfspace intersection is infeasible")
        raise EmptyIntersection("The halfspaces have empty intersection")
    radius = float(res.x[-1])
    if radius <= UNIT_TOL * (1.0 + float(np.max(np.abs(offsets)))):
        logger.error(f"Halfspace intersection has no interior (inradius {radius:.3e})")
        raise EmptyIntersection("The halfspace intersection has empty interior")
    return np.asarray(res.x[:dim], dtype=float)


def _dedup_points(points: np.ndarray, tol: float) -> np.ndarray:
    kept: List[np.ndarray] = []
    for p in points:
        if not kept or np.min(np.linalg.norm(np.array(kept) - p, axis=1)) > tol:
            kept.append(p)
    return np.array(kept)


def _plane_basis(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal (e1, e2) with e1 x e2 = normal."""
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(normal)))] = 1.0
    e1 = unit(np.cross(normal, axis))
    e2 = np.cross(normal, e1)
    return e1, e2


def _order_facet(vertices: np.ndarray, idx: np.ndarray, normal: np.ndarray) -> Tuple[List[int], float]:
    """Order the facet vertices counterclockwise around `normal` and return the facet area."""
    pts = vertices[idx]
    if vertices.shape[1] == 2:
        tangent = np.array([-normal[1], normal[0]])
        order = np.argsort(pts @ tangent)
        ordered = idx[order]
        length = float(np.linalg.norm(vertices[ordered[-1]] - vertices[ordered[0]]))
        return [int(i) for i in ordered], length

    center = pts.mean(axis=0)
    e1, e2 = _plane_basis(normal)
    rel = pts - center
    order = np.argsort(np.arctan2(rel @ e2, rel @ e1))
    ordered = idx[order]
    poly = vertices[ordered] - center
    # fan triangulation from the facet centroid
    crosses = np.cross(poly, np.roll(poly, -1, axis=0))
    area = 0.5 * float(np.sum(crosses @ normal))
    return [int(i) for i in ordered], max(area, 0.0)


def halfspace_intersection(
    dim: int,
    halfspaces: Sequence[Halfspace],
    interior_point: Optional[np.ndarray] = None,
) -> Polytope:
    """
    Intersect halfspaces into a bounded polytope.

    The intersection is computed by the dual transform: after moving a strictly
    interior point to the origin each halfspace <a, x> <= b maps to the point
    a / b, the convex hull of those points is taken, and every hull facet gives
    one primal vertex. Vertices are refined by least squares over their active
    halfspaces.

    Parameters
    ----------
    dim : int
        Ambient dimension, 2 or 3.
    halfspaces : sequence of Halfspace
        At least dim + 1 halfspaces.
    interior_point : np.ndarray, optional
        A point strictly inside the intersection. When missing or not strictly
        feasible, the Chebyshev center is computed instead.

    Returns
    -------
    Polytope
        The intersection, redundant halfspaces dropped.

    Raises
    ------
    DimensionMismatch
        If a normal does not have length `dim`.
    Unbounded
        If the intersection has a recession direction.
    EmptyIntersection
        If the intersection is empty or has empty interior.
    """
    if dim not in (2, 3):
        raise DimensionMismatch(f"Only dimensions 2 and 3 are supported, got {dim}")
    for halfspace in halfspaces:
        if halfspace.normal.shape[0] != dim:
            raise DimensionMismatch(
                f"Halfspace normal of length {halfspace.normal.shape[0]} in dimension {dim}"
            )
    if len(halfspaces) < dim + 1:
        raise Unbounded(f"{len(halfspaces)} halfspaces cannot bound a region in dimension {dim}")

    normals = np.array([h.normal for h in halfspaces])
    offsets = np.array([h.offset for h in halfspaces], dtype=float)
    _check_bounded(normals)

    scale = float(np.max(np.abs(offsets)))
    if interior_point is not None:
        x0 = as_vector(interior_point, dim)
        if np.min(offsets - normals @ x0) <= UNIT_TOL * (1.0 + scale):
            logger.debug("Supplied interior point is not strictly feasible, using the Chebyshev center")
            x0 = _chebyshev_center(normals, offsets)
    else:
        x0 = _chebyshev_center(normals, offsets)

    shifted = offsets - normals @ x0
    dual = normals / shifted[:, None]
    try:
        hull = ConvexHull(dual)
    except QhullError as e:
        logger.error(f"Dual hull construction failed: {e}")
        raise EmptyIntersection("Degenerate halfspace intersection") from e

    raw = x0 - hull.equations[:, :dim] / hull.equations[:, dim:]
    tol = geo_tol(max(scale, float(np.max(np.abs(raw)))))
    refined = []
    for v in raw:
        active = np.abs(normals @ v - offsets) <= tol
        if np.count_nonzero(active) >= dim:
            fitted, *_ = np.linalg.lstsq(normals[active], offsets[active], rcond=None)
            if np.max(normals @ fitted - offsets) <= np.max(normals @ v - offsets):
                v = fitted
        refined.append(v)
    vertices = _dedup_points(np.array(refined), tol)

    scale = float(np.max(np.abs(vertices)))
    tol = geo_tol(scale)
    min_area = 1e-12 * (1.0 + scale) ** (dim - 1)
    facets: List[Facet] = []
    for i, (normal, offset) in enumerate(zip(normals, offsets)):
        incident = np.flatnonzero(np.abs(vertices @ normal - offset) <= tol)
        if incident.size < dim:
            continue
        if any(
            np.linalg.norm(f.normal - normal) <= UNIT_TOL and abs(f.offset - offset) <= tol
            for f in facets
        ):
            continue
        order, area = _order_facet(vertices, incident, normal)
        if area <= min_area:
            continue
        facets.append(
            Facet(normal=normal, offset=float(offset), vertex_indices=order, area=area, source=i)
        )

    logger.debug(
        f"Halfspace intersection: {len(halfspaces)} halfspaces, "
        f"{len(vertices)} vertices, {len(facets)} facets"
    )
    return Polytope(dim=dim, vertices=vertices, facets=facets)


# ==============================================================================
# Measurements


def volume(P: Polytope) -> float:
    """
    Volume of a polytope by fan decomposition from the vertex centroid.

    Parameters
    ----------
    P : Polytope
        A valid polytope.

    Returns
    -------
    float
        V_d(P) >= 0.
    """
    center = P.vertices.mean(axis=0)
    heights = P.offsets - P.normals @ center
    areas = np.array([facet.area for facet in P.facets])
    return max(float(np.sum(areas * heights)) / P.dim, 0.0)


def facet_areas(P: Polytope) -> List[Tuple[np.ndarray, float]]:
    """One (unit normal, area) pair per facet; edge lengths when d = 2."""
    return [(facet.normal, facet.area) for facet in P.facets]


def _point_segment_distances(x: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    direction = ends - starts
    length2 = np.einsum("ij,ij->i", direction, direction)
    safe = np.where(length2 > 0.0, length2, 1.0)
    s = np.clip(np.einsum("ij,ij->i", x - starts, direction) / safe, 0.0, 1.0)
    s = np.where(length2 > 0.0, s, 0.0)
    foot = starts + s[:, None] * direction
    return np.linalg.norm(x - foot, axis=1)


def distance_to(P: Polytope, x) -> float:
    """
    Euclidean distance from a point to a polytope.

    The minimum is taken exactly over the faces: vertices and edges through the
    point-to-segment distances, facet interiors through plane projections.

    Parameters
    ----------
    P : Polytope
        A valid polytope.
    x : array_like
        The point.

    Returns
    -------
    float
        0 if x lies in P, the distance otherwise.
    """
    x = as_vector(x, P.dim)
    slack = P.normals @ x - P.offsets
    if np.all(slack <= geo_tol(max(P.scale, float(np.max(np.abs(x)))))):
        return 0.0

    starts, ends = P.segments()
    best = float(np.min(_point_segment_distances(x, starts, ends)))
    if P.dim == 3:
        for facet, gap in zip(P.facets, slack):
            if gap <= 0.0 or gap >= best:
                continue
            proj = x - gap * facet.normal
            poly = P.vertices[facet.vertex_indices]
            edges = np.roll(poly, -1, axis=0) - poly
            inside = np.cross(edges, proj - poly) @ facet.normal >= 0.0
            if np.all(inside):
                best = float(gap)
    return best


def hausdorff(P: Polytope, Q: Polytope) -> float:
    """
    Hausdorff distance of two polytopes.

    The distance to a convex set is a convex function, so its maximum over a
    polytope is attained at a vertex.

    Raises
    ------
    DimensionMismatch
        If the polytopes live in different dimensions.
    """
    if P.dim != Q.dim:
        raise DimensionMismatch(f"Cannot compare polytopes of dimension {P.dim} and {Q.dim}")
    forward = max(distance_to(Q, v) for v in P.vertices)
    backward = max(distance_to(P, v) for v in Q.vertices)
    return max(forward, backward)
