import math
from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from comink.errors import (
    AtomOutsideOmega,
    CertificationFailed,
    DimensionMismatch,
    InvalidInputError,
    NotFullDim,
    NotPointed,
)
from comink.geom.polytope import (
    UNIT_TOL,
    Halfspace,
    Polytope,
    _plane_basis,
    as_vector,
    halfspace_intersection,
    is_unit,
    unit,
)


class Cone(BaseModel):
    """
    Pointed, full-dimensional polyhedral cone C with apex at the origin.

    Attributes
    ----------
    dim : int
        Ambient dimension, 2 or 3.
    generators : np.ndarray
        Unit extreme rays, shape (k, dim), ordered counterclockwise around `w`.
    facet_normals : np.ndarray
        Unit outer facet normals, so that C = {x : <n, x> <= 0 for all n}.
        In d = 3 row i is the facet spanned by generators i and i + 1; in d = 2
        row i is the outer normal at the ray of generator i.
    w : np.ndarray
        Distinguished unit direction with w in int C and -w in int C°.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dim: int
    generators: np.ndarray
    facet_normals: np.ndarray
    w: np.ndarray

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.dim not in (2, 3):
            raise ValueError(f"Cones live in dimension 2 or 3, got {self.dim}")
        for name in ("generators", "facet_normals"):
            rows = getattr(self, name)
            if rows.ndim != 2 or rows.shape[1] != self.dim or rows.shape[0] < self.dim:
                raise ValueError(f"Cone {name} have shape {rows.shape}")
            if not all(is_unit(row) for row in rows):
                raise ValueError(f"Cone {name} must be unit vectors")
        if not is_unit(self.w):
            raise ValueError("Cone direction w must be a unit vector")
        if np.any(self.generators @ self.w <= 0.0) or np.any(self.facet_normals @ self.w >= 0.0):
            raise ValueError("Direction w is not interior to C and -C°")
        if np.any(self.facet_normals @ self.generators.T > 1e-9):
            raise ValueError("A generator lies outside a facet halfspace")
        return self

    def facet_halfspaces(self) -> List[Halfspace]:
        return [Halfspace(normal=n, offset=0.0) for n in self.facet_normals]

    def same_as(self, other: "Cone") -> bool:
        return (
            self.dim == other.dim
            and self.generators.shape == other.generators.shape
            and bool(np.allclose(self.generators, other.generators, atol=UNIT_TOL, rtol=0.0))
        )

    def __str__(self):
        rays = ", ".join(np.array2string(g, precision=4) for g in self.generators)
        return f"Cone(dim={self.dim}, generators=[{rays}])"


# ==============================================================================


def _strict_side(rows: np.ndarray) -> Tuple[np.ndarray, float]:
    """y with |y|_inf <= 1 maximizing s = min <y, row>, and that s."""
    dim = rows.shape[1]
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-rows, np.ones((rows.shape[0], 1))])
    bounds = [(-1.0, 1.0)] * dim + [(None, 1.0)]
    res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(rows.shape[0]), bounds=bounds, method="highs")
    if res.x is None:
        return np.zeros(dim), 0.0
    return np.asarray(res.x[:dim], dtype=float), float(res.x[-1])


def _choose_w(extreme: np.ndarray, facet_normals: np.ndarray) -> np.ndarray:
    """Unit w with <g, w> > 0 for every ray and <n, w> < 0 for every facet normal."""
    w = unit(extreme.sum(axis=0))
    if np.all(extreme @ w > UNIT_TOL) and np.all(facet_normals @ w < -UNIT_TOL):
        return w
    y, s = _strict_side(np.vstack([extreme, -facet_normals]))
    if s <= UNIT_TOL:
        logger.error(f"No direction interior to C and -C° (certificate {s:.3e})")
        raise CertificationFailed("Could not find the direction w of the cone")
    logger.debug("Sum of the rays is not interior to -C°, w taken from a linear program")
    return unit(y)


def make_cone(dim: int, generators: Sequence) -> Cone:
    """
    Build a cone from a positively spanning set of generators.

    Generators are unitized and reduced to extreme rays and the facet normals
    are computed. w is the normalized sum of the extreme unit generators when
    that sum lies in int C ∩ -int C°, and otherwise the point of that set
    farthest from its boundary found by linear programming.

    Parameters
    ----------
    dim : int
        Ambient dimension, 2 or 3.
    generators : sequence of array_like
        At least `dim` nonzero vectors.

    Returns
    -------
    Cone
        The cone.

    Raises
    ------
    NotPointed
        If the positive hull contains a line.
    NotFullDim
        If the generators do not span the space.
    """
    if dim not in (2, 3):
        raise DimensionMismatch(f"Only dimensions 2 and 3 are supported, got {dim}")
    gens = np.array([as_vector(g, dim) for g in generators]).reshape(-1, dim)
    if gens.shape[0] < dim:
        raise NotFullDim(f"{gens.shape[0]} generators cannot span dimension {dim}")
    norms = np.linalg.norm(gens, axis=1)
    if np.any(norms == 0.0):
        raise InvalidInputError("Cone generators must be nonzero")
    gens = gens / norms[:, None]

    side, certificate = _strict_side(gens)
    if certificate <= UNIT_TOL:
        logger.error(f"Generators do not lie strictly on one side of a hyperplane: {gens.tolist()}")
        raise NotPointed("The positive hull of the generators contains a line")
    if np.linalg.matrix_rank(gens, tol=1e-10) < dim:
        logger.error("Cone generators are degenerate")
        raise NotFullDim("The generators do not span the ambient space")

    # every generator has a positive inner product with center
    center = unit(side)
    if dim == 2:
        perp = np.array([-center[1], center[0]])
        angles = np.arctan2(gens @ perp, gens @ center)
        extreme = gens[[int(np.argmin(angles)), int(np.argmax(angles))]]
        g_a, g_b = extreme
        facet_normals = np.array([[g_a[1], -g_a[0]], [-g_b[1], g_b[0]]])
    else:
        e1, e2 = _plane_basis(center)
        lifted = gens / (gens @ center)[:, None]
        try:
            hull = ConvexHull(np.column_stack([lifted @ e1, lifted @ e2]))
        except QhullError as e:
            raise NotFullDim("The generators do not span the ambient space") from e
        # 2-D hull vertices come counterclockwise
        extreme = gens[hull.vertices]
        facet_normals = np.array(
            [unit(np.cross(extreme[(i + 1) % len(extreme)], extreme[i])) for i in range(len(extreme))]
        )

    inside = extreme.sum(axis=0)
    facet_normals = np.where((facet_normals @ inside)[:, None] > 0.0, -facet_normals, facet_normals)
    w = _choose_w(extreme, facet_normals)
    try:
        cone = Cone(dim=dim, generators=extreme, facet_normals=facet_normals, w=w)
    except ValidationError as e:
        logger.error(f"Cone invariants failed: {e}")
        raise CertificationFailed("Could not certify the cone") from e
    logger.debug(f"Built {cone}")
    return cone


def polar(C: Cone) -> Cone:
    """The polar cone C°, generated by the outer facet normals of C."""
    return make_cone(C.dim, C.facet_normals)


def omega_contains(C: Cone, u) -> Tuple[bool, float]:
    """
    Membership of a unit vector in Omega_C = S^{d-1} ∩ int C°.

    Returns
    -------
    tuple of (bool, float)
        Whether <u, g> < 0 for every generator g, and the margin min_g -<u, g>.
    """
    u = as_vector(u, C.dim)
    margin = float(np.min(-(C.generators @ u)))
    return margin > 0.0, margin


def check_atoms(C: Cone, atoms) -> np.ndarray:
    """Return the atoms as an (n, d) array, raising AtomOutsideOmega for any outside Omega_C."""
    rows = np.asarray(atoms, dtype=float).reshape(-1, C.dim) if len(atoms) else np.zeros((0, C.dim))
    for u in rows:
        inside, margin = omega_contains(C, u)
        if not inside:
            logger.error(f"Atom {u.tolist()} is outside Omega_C (margin {margin:.3e})")
            raise AtomOutsideOmega(f"Atom {u.tolist()} is outside Omega_C")
    return rows


def section_area(C: Cone, t: float = 1.0) -> float:
    """(d-1)-volume of the cross-section C ∩ H(w, t)."""
    points = C.generators * (t / (C.generators @ C.w))[:, None]
    if C.dim == 2:
        return float(np.linalg.norm(points[1] - points[0]))
    crosses = np.cross(points, np.roll(points, -1, axis=0))
    return 0.5 * float(np.sum(crosses @ C.w))


def truncate(C: Cone, t: float) -> Polytope:
    """
    The bounded truncation C_t = C ∩ H^-(w, t).

    Raises
    ------
    InvalidInputError
        If t is not positive.
    """
    if not t > 0.0:
        raise InvalidInputError(f"Truncation height must be positive, got {t}")
    halfspaces = C.facet_halfspaces() + [Halfspace(normal=C.w, offset=float(t))]
    return halfspace_intersection(C.dim, halfspaces, interior_point=0.5 * t * C.w)


def aperture(C: Cone) -> float:
    """
    Spherical measure of S^{d-1} ∩ int C.

    In d = 2 this is the angle between the two extreme rays; in d = 3 the
    spherical polygon area by angle excess.
    """
    if C.dim == 2:
        return float(np.arccos(np.clip(C.generators[0] @ C.generators[1], -1.0, 1.0)))
    normals = C.facet_normals
    k = len(normals)
    # interior angle at ray i lies between facets i - 1 and i
    cosines = np.clip(np.einsum("ij,ij->i", np.roll(normals, 1, axis=0), normals), -1.0, 1.0)
    interior = math.pi - np.arccos(cosines)
    return float(np.sum(interior) - (k - 2) * math.pi)


def atom_margins(C: Cone, atoms) -> np.ndarray:
    """
    Geodesic distance of every atom from the boundary of Omega_C.

    The distance to the great circle <y, g> = 0 is arcsin(-<u, g>). The cap of
    the smallest such radius lies on the inner side of every circle, so its
    touching point is in cl Omega_C and the minimum is the boundary distance.

    Raises
    ------
    AtomOutsideOmega
        If an atom is outside Omega_C.
    """
    rows = check_atoms(C, atoms)
    if rows.shape[0] == 0:
        return np.zeros(0)
    inner = np.clip(-(rows @ C.generators.T), 0.0, 1.0)
    return np.arcsin(inner).min(axis=1)


def boundary_margin(C: Cone, atoms) -> float:
    """Delta(omega): smallest geodesic distance from the atoms to bd Omega_C (inf when empty)."""
    margins = atom_margins(C, atoms)
    return float(margins.min()) if margins.size else math.inf


def _slerp(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    angle = float(np.arccos(np.clip(a @ b, -1.0, 1.0)))
    steps = max(int(math.ceil(angle / resolution)), 1)
    s = np.linspace(0.0, 1.0, steps + 1)[:, None]
    if angle < 1e-15:
        return a[None, :]
    return (np.sin((1.0 - s) * angle) * a + np.sin(s * angle) * b) / math.sin(angle)


def boundary_margin_sampled(C: Cone, atoms, resolution: float = 1e-3) -> float:
    """
    Delta(omega) estimated by dense sampling of bd Omega_C.

    The boundary is the pair of polar generators in d = 2 and the great-circle
    arcs between consecutive polar generators in d = 3.
    """
    rows = check_atoms(C, atoms)
    if C.dim == 2:
        samples = C.facet_normals
    else:
        k = len(C.facet_normals)
        samples = np.vstack(
            [_slerp(C.facet_normals[i], C.facet_normals[(i + 1) % k], resolution) for i in range(k)]
        )
    angles = np.arccos(np.clip(rows @ samples.T, -1.0, 1.0))
    return float(angles.min()) if rows.shape[0] else math.inf


def normal_gap(C: Cone, atoms) -> float:
    """
    The constant a > 0 with a|x| <= |<x, u>| for x in C and u in omega.

    For every atom the maximum of <x, u> over C ∩ S^{d-1} is found by
    enumerating faces of C: the normalized projection of u onto the span of a
    face is a candidate when it lies in the face, the extreme rays always are.

    Raises
    ------
    AtomOutsideOmega
        If an atom is outside Omega_C.
    """
    rows = check_atoms(C, atoms)
    if rows.shape[0] == 0:
        raise InvalidInputError("normal_gap needs at least one atom")

    gaps = []
    for u in rows:
        candidates = list(C.generators @ u)
        spans = [np.zeros(C.dim)] + (list(C.facet_normals) if C.dim == 3 else [])
        for n in spans:
            p = u - (u @ n) * n
            norm = np.linalg.norm(p)
            if norm <= UNIT_TOL:
                continue
            x = p / norm
            if np.all(C.facet_normals @ x <= 1e-12):
                candidates.append(float(x @ u))
        gaps.append(-max(candidates))
    return float(min(gaps))
