import math
from typing import List, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, model_validator

from comink.cone.cone import (
    Cone,
    aperture,
    atom_margins,
    check_atoms,
    normal_gap,
    omega_contains,
    section_area,
)
from comink.errors import (
    CertificationFailed,
    ConeMismatch,
    DirectionOutsideClosure,
    InsufficientBound,
    InvalidInputError,
    NonUnitAtom,
    PositiveSupportNumber,
)
from comink.geom.polytope import (
    UNIT_TOL,
    Halfspace,
    Polytope,
    as_vector,
    distance_to,
    halfspace_intersection,
    hausdorff,
    is_unit,
    volume,
)
from comink.measures.measure import AtomFunction, DiscreteMeasure, bl_norm, make_measure

MAX_DOUBLINGS = 20
# Relative tolerance of the truncation certificate and the reported checks
CERT_TOL = 1e-9


class CFullSet(BaseModel):
    """
    C-full set K = C ∩ {x : <u_i, x> <= h_i for all i} with its certified truncation.

    Attributes
    ----------
    cone : Cone
        The cone C.
    normals : np.ndarray
        Cut normals u_i in Omega_C, shape (m, d).
    support : np.ndarray
        Support numbers h_i <= 0, shape (m,).
    trunc_height : float
        Height t of the truncation along w.
    body : Polytope
        K ∩ {x : <w, x> <= t}. Its halfspaces are ordered as the facets of C,
        then the cuts, then the top, so `Facet.source` identifies them.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    cone: Cone
    normals: np.ndarray
    support: np.ndarray
    trunc_height: float
    body: Polytope

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.normals.shape != (len(self.support), self.cone.dim):
            raise ValueError(f"{self.normals.shape[0]} normals for {len(self.support)} support numbers")
        return self

    @property
    def dim(self) -> int:
        return self.cone.dim

    @property
    def cut_offset(self) -> int:
        """Index of the first cut halfspace in the body."""
        return len(self.cone.facet_normals)

    @property
    def top_source(self) -> int:
        return self.cut_offset + len(self.support)

    def cut_facets(self):
        """(cut index, facet) for every cut that shows up as a facet of the body."""
        k, m = self.cut_offset, len(self.support)
        return [(f.source - k, f) for f in self.body.facets if k <= f.source < k + m]


# ==============================================================================


def _validate(C: Cone, normals, support):
    support = np.asarray(support, dtype=float).reshape(-1)
    normals = check_atoms(C, [as_vector(u, C.dim) for u in normals]) if len(normals) else np.zeros((0, C.dim))
    if len(normals) != len(support):
        raise InvalidInputError(f"{len(normals)} normals for {len(support)} support numbers")
    if np.any(support > 0.0):
        logger.error(f"Positive support numbers: {support[support > 0.0].tolist()}")
        raise PositiveSupportNumber("Support numbers must be nonpositive")
    for u in normals:
        if not is_unit(u, UNIT_TOL):
            logger.error(f"Cut normal {u.tolist()} has norm {np.linalg.norm(u)!r}")
            raise NonUnitAtom(f"Cut normal {u.tolist()} is not a unit vector")
    # rounding only, every row is already unit within UNIT_TOL
    return normals / np.linalg.norm(normals, axis=1, keepdims=True) if len(normals) else normals, support


def _certified(K: CFullSet) -> bool:
    t = K.trunc_height
    top = K.body.facet_by_source(K.top_source)
    expected = section_area(K.cone, t)
    if top is None or abs(top.area - expected) > CERT_TOL * expected:
        logger.debug(f"Top facet at t={t:.6g} does not match the cone section")
        return False
    for _, facet in K.cut_facets():
        heights = K.body.vertices[facet.vertex_indices] @ K.cone.w
        if np.max(heights) > 0.5 * t:
            logger.debug(f"Excavated region reaches height {np.max(heights):.6g} of t={t:.6g}")
            return False
    return True


def _build_at(C: Cone, normals: np.ndarray, support: np.ndarray, t: float) -> CFullSet:
    halfspaces = C.facet_halfspaces()
    halfspaces += [Halfspace(normal=u, offset=float(h)) for u, h in zip(normals, support)]
    halfspaces.append(Halfspace(normal=C.w, offset=float(t)))
    body = halfspace_intersection(C.dim, halfspaces, interior_point=0.75 * t * C.w)
    return CFullSet(cone=C, normals=normals, support=support, trunc_height=float(t), body=body)


def _certified_build(C: Cone, normals: np.ndarray, support: np.ndarray, t: float) -> CFullSet:
    for _ in range(MAX_DOUBLINGS + 1):
        K = _build_at(C, normals, support, t)
        if _certified(K):
            return K
        t *= 2.0
    logger.error(f"Truncation not certified after {MAX_DOUBLINGS} doublings")
    raise CertificationFailed("Could not certify a truncation height")


def build(C: Cone, normals: Sequence, support: Sequence[float]) -> CFullSet:
    """
    Encode the C-full set K = C ∩ ⋂ H^-(u_i, h_i) and certify its truncation.

    The truncation height starts at 4 (1 + max |h_i| / a), a being the normal
    gap of the cut normals, and is doubled until the top facet of the body is
    the full cone section and the excavated region stays below half of it.

    Parameters
    ----------
    C : Cone
        The cone.
    normals : sequence of array_like
        Cut normals in Omega_C.
    support : sequence of float
        Nonpositive support numbers, one per normal.

    Returns
    -------
    CFullSet
        The certified set.

    Raises
    ------
    AtomOutsideOmega
        If a normal is outside Omega_C.
    NonUnitAtom
        If a normal is not a unit vector within 1e-12.
    PositiveSupportNumber
        If a support number is positive.
    CertificationFailed
        If no certified height is found after 20 doublings.
    """
    normals, support = _validate(C, normals, support)
    if len(support):
        t = 4.0 * (1.0 + float(np.max(np.abs(support))) / normal_gap(C, normals))
    else:
        t = 4.0
    return _certified_build(C, normals, support, t)


def surface_area_measure(K: CFullSet) -> DiscreteMeasure:
    """Facet areas of the body at the cut normals; C's facets and the top are left out."""
    atoms = [(K.normals[i], facet.area) for i, facet in K.cut_facets()]
    return make_measure(atoms, K.dim)


def support_value(K: CFullSet, u) -> float:
    """
    h(K, u) for u in the closure of Omega_C.

    Raises
    ------
    DirectionOutsideClosure
        If u is farther than 1e-12 outside the closure of Omega_C.
    """
    u = as_vector(u, K.dim)
    _, margin = omega_contains(K.cone, u)
    if margin < -1e-12:
        raise DirectionOutsideClosure(f"Direction {u.tolist()} is outside the closure of Omega_C")
    return float(np.max(K.body.vertices @ u))


def coconvex_volume(K: CFullSet, method: str = "integral") -> float:
    """
    Volume of the coconvex set C \\ K.

    Parameters
    ----------
    K : CFullSet
        Certified set.
    method : {"integral", "direct"}
        "integral" sums -(1/d) h_i S(K, {u_i}) over the cut facets; "direct"
        subtracts the volume of the body from that of the truncated cone.
    """
    if method == "integral":
        terms = [-K.support[i] * facet.area for i, facet in K.cut_facets()]
        return math.fsum(terms) / K.dim
    if method == "direct":
        t = K.trunc_height
        truncated = t * section_area(K.cone, t) / K.dim
        return max(truncated - volume(K.body), 0.0)
    raise InvalidInputError(f"Unknown volume method {method!r}")


def clearance_radius(K: CFullSet) -> float:
    """Radius of the largest origin-centred ball missing int K."""
    return distance_to(K.body, np.zeros(K.dim))


def rebuild(K: CFullSet, t: float) -> CFullSet:
    """The same set truncated at height t, which must be certified."""
    L = _build_at(K.cone, K.normals, K.support, t)
    if not _certified(L):
        raise CertificationFailed(f"Truncation at t={t:.6g} is not certified")
    return L


def hausdorff_cfull(K: CFullSet, L: CFullSet) -> float:
    """
    Hausdorff distance of two C-full sets of the same cone.

    Both are truncated at twice the larger height and the result is checked
    against a truncation at twice that height.

    Raises
    ------
    ConeMismatch
        If the sets live in different cones.
    CertificationFailed
        If the two truncation heights disagree by more than 1e-9.
    """
    if not K.cone.same_as(L.cone):
        raise ConeMismatch("Hausdorff distance needs sets of the same cone")
    t = 2.0 * max(K.trunc_height, L.trunc_height)
    value = hausdorff(rebuild(K, t).body, rebuild(L, t).body)
    check = hausdorff(rebuild(K, 2.0 * t).body, rebuild(L, 2.0 * t).body)
    if abs(value - check) > CERT_TOL * (1.0 + value):
        logger.error(f"Hausdorff distance moved from {value!r} to {check!r} when doubling t")
        raise CertificationFailed("Hausdorff distance depends on the truncation height")
    return value


# ==============================================================================


def clearance_bound(C: Cone, b: float) -> float:
    """c1 = (b / sigma_C)^(1/(d-1)), an upper bound for the clearance radius at total mass b."""
    return (b / aperture(C)) ** (1.0 / (C.dim - 1))


class BoundsReport(BaseModel):
    r: float
    c1: float
    a: float
    c8: float
    sup_abs_h: float
    lip_h: float
    bl_h: float
    all_checks_pass: bool


def bounds_report(K: CFullSet, omega, b: float) -> BoundsReport:
    """
    Clearance, support and Lipschitz bounds of a C-full set.

    Parameters
    ----------
    K : CFullSet
        Certified set.
    omega : array_like
        Nonempty list of unit vectors in Omega_C, expected to cover the
        atoms of the surface area measure of K.
    b : float
        Upper bound for the total surface area measure.

    Returns
    -------
    BoundsReport
        r, c1 = (b / sigma_C)^(1/(d-1)), a, c8 = c1 / a and the BL data of
        h(K, .) on omega, with all_checks_pass set when r <= c1,
        -r <= h <= 0, sup |h| <= c1 and lip h <= c8 hold within 1e-9.

    Raises
    ------
    InsufficientBound
        If b is below the total surface area measure of K.
    """
    omega = check_atoms(K.cone, omega)
    if omega.shape[0] == 0:
        raise InvalidInputError("bounds_report needs a nonempty omega")
    sam = surface_area_measure(K)
    if b < sam.total - 1e-12 * (1.0 + sam.total):
        logger.error(f"Bound {b} is below the total surface area {sam.total}")
        raise InsufficientBound(f"Bound {b} is below the total surface area {sam.total:.12g}")
    if any(np.min(np.linalg.norm(omega - u, axis=1)) > 1e-12 for u in sam.points):
        logger.warning("omega does not contain every atom of the surface area measure")

    r = clearance_radius(K)
    c1 = clearance_bound(K.cone, b)
    a = normal_gap(K.cone, omega)
    c8 = c1 / a
    h = AtomFunction.from_callable(lambda u: support_value(K, u), omega)
    lip, sup, bl = bl_norm(h, omega)

    tol = CERT_TOL
    checks = [
        r <= c1 + tol,
        bool(np.all(h.values >= -r - tol)) and bool(np.all(h.values <= tol)),
        sup <= c1 + tol,
        lip <= c8 + tol,
    ]
    report = BoundsReport(r=r, c1=c1, a=a, c8=c8, sup_abs_h=sup, lip_h=lip, bl_h=bl, all_checks_pass=all(checks))
    logger.info(f"Bounds: r={r:.6g}, c1={c1:.6g}, a={a:.6g}, c8={c8:.6g}, checks pass: {report.all_checks_pass}")
    return report


class NecessaryBound(BaseModel):
    margin: float
    height: float
    height_bound: float
    projected_mass: float
    mass_bound: float
    ok: bool


def necessary_bound(K: CFullSet, omega) -> NecessaryBound:
    """
    Height and projected-mass bounds for the facets of K with normals in omega.

    Facets with normals at boundary margin at least Delta lie below height
    r / sin(Delta), and their areas projected along w fit in the cone section
    at the largest such height.
    """
    omega = check_atoms(K.cone, omega)
    if omega.shape[0] == 0:
        raise InvalidInputError("necessary_bound needs a nonempty omega")
    margin = float(np.min(atom_margins(K.cone, omega)))
    r = clearance_radius(K)
    w = K.cone.w

    height = 0.0
    projected: List[float] = []
    for i, facet in K.cut_facets():
        u = K.normals[i]
        if np.min(np.linalg.norm(omega - u, axis=1)) > 1e-12:
            continue
        height = max(height, float(np.max(K.body.vertices[facet.vertex_indices] @ w)))
        projected.append(abs(float(u @ w)) * facet.area)

    projected_mass = math.fsum(projected)
    height_bound = r / math.sin(margin)
    mass_bound = section_area(K.cone, height) if height > 0.0 else 0.0
    ok = height <= height_bound + CERT_TOL * (1.0 + height_bound) and (
        projected_mass <= mass_bound + CERT_TOL * (1.0 + mass_bound)
    )
    return NecessaryBound(
        margin=margin,
        height=height,
        height_bound=height_bound,
        projected_mass=projected_mass,
        mass_bound=mass_bound,
        ok=ok,
    )
