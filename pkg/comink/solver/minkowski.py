import itertools
import math
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from comink.coconvex.cfull import CFullSet, build, coconvex_volume
from comink.cone.cone import Cone, aperture, atom_margins
from comink.errors import DimensionMismatch, NegativeEndpoint
from comink.geom.polytope import UNIT_TOL, Polytope
from comink.measures.measure import DiscreteMeasure

# Sufficient decrease constant of the line search
ARMIJO = 1e-4
MIN_LAMBDA = 1e-12


class SolverOptions(BaseModel):
    """
    Options of the damped Newton solver.

    Attributes
    ----------
    tol : float
        Convergence when max |F_i - f_i| <= tol * max(1, max f_i).
    max_iter : int
        Iteration limit.
    seed : int, optional
        Seed of the small multiplicative perturbation of the initial support
        numbers; no perturbation when None.
    lambda_init : float
        Initial damping.
    max_backtracks : int
        Step halvings of the line search before the step is rejected.
    stall_iterations : int
        Iterations without a 10% drop of the residual before a restart.
    init_scale : float
        Factor applied to the initial support numbers.
    """

    tol: float = 1e-10
    max_iter: int = 200
    seed: Optional[int] = None
    lambda_init: float = 1e-3
    max_backtracks: int = 40
    stall_iterations: int = 20
    init_scale: float = 1.0


class SolveReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    K: CFullSet
    residual_inf: float
    iterations: int
    converged: bool
    objective_trace: List[float]


def _rot90(x: np.ndarray) -> np.ndarray:
    return np.array([-x[1], x[0]])


def solve_chain_2d(C: Cone, phi: DiscreteMeasure) -> CFullSet:
    """
    Exact planar solution of the discrete Minkowski problem in a cone.

    The boundary of K inside C is a polygonal chain from the ray of the second
    generator to the ray of the first. Its edges are the atoms, sorted
    counterclockwise from the outer normal at the second ray, turned by +90
    degrees and scaled by their masses; the endpoints on the two rays follow
    from a 2x2 linear system.

    Parameters
    ----------
    C : Cone
        Planar cone.
    phi : DiscreteMeasure
        Measure with atoms in Omega_C.

    Returns
    -------
    CFullSet
        The set whose surface area measure is phi.

    Raises
    ------
    DimensionMismatch
        If the cone is not planar.
    NegativeEndpoint
        If an endpoint falls on the wrong side of the apex.
    """
    if C.dim != 2 or (len(phi) and phi.dim != 2):
        raise DimensionMismatch("solve_chain_2d works in the plane only")
    if not len(phi):
        return build(C, [], [])
    atom_margins(C, phi.points)

    g_a, g_b = C.generators
    start = _rot90(g_b)
    cross = start[0] * phi.points[:, 1] - start[1] * phi.points[:, 0]
    angles = np.mod(np.arctan2(cross, phi.points @ start), 2 * math.pi)
    order = np.argsort(angles, kind="stable")

    edges = np.array([m * _rot90(u) for u, m in zip(phi.points[order], phi.masses[order])])
    sigma, tau = np.linalg.solve(np.column_stack([g_a, -g_b]), edges.sum(axis=0))
    if sigma < -1e-12 or tau < -1e-12:
        logger.error(f"Chain endpoints sigma={sigma!r}, tau={tau!r}")
        raise NegativeEndpoint("The chain does not end on the rays of the cone")

    starts = max(tau, 0.0) * g_b + np.vstack([np.zeros(2), np.cumsum(edges, axis=0)[:-1]])
    support = np.empty(len(phi))
    support[order] = np.minimum(np.einsum("ij,ij->i", starts, phi.points[order]), 0.0)
    logger.debug(f"Chain endpoints: {tau:.12g} on the second ray, {sigma:.12g} on the first")
    return build(C, phi.points, support)


# ==============================================================================


def _facet_adjacency(P: Polytope) -> List[Tuple[int, int, float]]:
    """(facet a, facet b, (d-2)-volume of their common face) for adjacent facets."""
    owners: Dict[Tuple[int, ...], List[int]] = defaultdict(list)
    for k, facet in enumerate(P.facets):
        idx = facet.vertex_indices
        if P.dim == 2:
            keys = [(idx[0],), (idx[-1],)]
        else:
            keys = [tuple(sorted((idx[i], idx[(i + 1) % len(idx)]))) for i in range(len(idx))]
        for key in keys:
            owners[key].append(k)

    pairs = []
    for key, facets in owners.items():
        length = 1.0 if len(key) == 1 else float(np.linalg.norm(P.vertices[key[0]] - P.vertices[key[1]]))
        for a, b in itertools.combinations(facets, 2):
            pairs.append((a, b, length))
    return pairs


def area_hessian(K: CFullSet) -> np.ndarray:
    """
    Hessian of the coconvex volume in the support numbers, H = -dF/dh.

    Two cut facets meeting along a face of (d-2)-volume l at normal angle
    theta contribute -l / sin(theta) off the diagonal; every neighbour of a
    cut facet, cut or not, adds l cot(theta) to its diagonal entry. Cuts that
    are not facets of K have zero rows.

    Parameters
    ----------
    K : CFullSet
        Certified set.

    Returns
    -------
    np.ndarray
        Symmetric positive semidefinite array of shape (m, m).
    """
    m, offset = len(K.support), K.cut_offset
    hess = np.zeros((m, m))
    facets = K.body.facets
    for a, b, length in _facet_adjacency(K.body):
        first, second = facets[a], facets[b]
        cos = float(np.clip(first.normal @ second.normal, -1.0, 1.0))
        sin = math.sqrt(1.0 - cos * cos)
        if sin <= UNIT_TOL:
            continue
        i, j = first.source - offset, second.source - offset
        cut_i, cut_j = 0 <= i < m, 0 <= j < m
        if cut_i:
            hess[i, i] += length * cos / sin
        if cut_j:
            hess[j, j] += length * cos / sin
        if cut_i and cut_j:
            hess[i, j] -= length / sin
            hess[j, i] -= length / sin
    return hess


class _Iterate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    support: np.ndarray
    K: CFullSet
    areas: np.ndarray
    potential: float
    residual: float


def _evaluate(C: Cone, normals: np.ndarray, target: np.ndarray, support: np.ndarray) -> _Iterate:
    K = build(C, normals, support)
    areas = np.zeros(len(support))
    for i, facet in K.cut_facets():
        areas[i] += facet.area
    potential = coconvex_volume(K, "integral") + math.fsum(target * support)
    return _Iterate(
        support=support, K=K, areas=areas, potential=potential, residual=float(np.max(np.abs(areas - target)))
    )


def _rescaled(it: _Iterate, target: np.ndarray, d: int) -> np.ndarray:
    """Minimizer of the potential along the ray through the support numbers."""
    vol = it.potential - math.fsum(target * it.support)
    linear = -math.fsum(target * it.support)
    if vol <= 0.0 or linear <= 0.0:
        return it.support
    return it.support * (linear / (d * vol)) ** (1.0 / (d - 1))


def solve(C: Cone, phi: DiscreteMeasure, opts: Optional[SolverOptions] = None) -> SolveReport:
    """
    Find support numbers whose facet areas are the masses of phi.

    The solution minimizes the convex potential V(C \\ K(h)) + sum f_i h_i,
    whose gradient is f - F(h). Newton steps solve (H + mu I) p = F(h) - f
    with the analytic Hessian H of `area_hessian`, mu = lambda * max(1, max
    diag H), and are followed by a backtracking line search on the potential
    along h + t p, projected onto h <= 0. Facets may vanish on intermediate
    iterates; their zero Hessian rows get the median positive diagonal. When
    the residual max-norm has not dropped by 10% for `stall_iterations`
    iterations the search restarts from the current iterate, rescaled along its
    ray to the multiple of least potential.

    Parameters
    ----------
    C : Cone
        The cone.
    phi : DiscreteMeasure
        Target measure with atoms in Omega_C.
    opts : SolverOptions, optional
        Solver options, defaults when None.

    Returns
    -------
    SolveReport
        Best iterate; `converged` is False when max_iter was reached.

    Raises
    ------
    AtomOutsideOmega
        If an atom is outside Omega_C.
    """
    opts = opts or SolverOptions()
    if not len(phi):
        return SolveReport(K=build(C, [], []), residual_inf=0.0, iterations=0, converged=True, objective_trace=[])
    if phi.dim != C.dim:
        raise DimensionMismatch(f"Measure of dimension {phi.dim} on a cone of dimension {C.dim}")
    atom_margins(C, phi.points)

    normals, target = phi.points, phi.masses
    m, d = len(target), C.dim
    threshold = opts.tol * max(1.0, float(np.max(target)))
    h_init = -((target / aperture(C)) ** (1.0 / (d - 1))) * opts.init_scale
    if opts.seed is not None:
        rng = np.random.default_rng(opts.seed)
        h_init = h_init * np.exp(rng.uniform(-1e-2, 1e-2, size=m))

    current = _evaluate(C, normals, target, h_init)
    best = current
    trace = [current.potential]
    lam = opts.lambda_init
    mark_residual, mark_iteration, restarts = current.residual, 0, 0

    iterations = 0
    while iterations < opts.max_iter and best.residual > threshold:
        iterations += 1
        hess = area_hessian(current.K)
        diag = np.diag(hess).copy()
        positive = diag[diag > 0.0]
        floor = float(np.median(positive)) if positive.size else 1.0
        vanished = np.flatnonzero(diag <= 0.0)
        hess[vanished, vanished] = floor

        gradient = target - current.areas
        mu = lam * max(1.0, float(np.max(np.diag(hess))))
        try:
            direction = np.linalg.solve(hess + mu * np.eye(m), -gradient)
        except np.linalg.LinAlgError:
            direction, *_ = np.linalg.lstsq(hess + mu * np.eye(m), -gradient, rcond=None)

        accepted = None
        slack = 1e-12 * (1.0 + abs(current.potential))
        t = 1.0
        for _ in range(opts.max_backtracks):
            support = np.minimum(current.support + t * direction, 0.0)
            candidate = _evaluate(C, normals, target, support)
            decrease = min(float(gradient @ (support - current.support)), 0.0)
            sufficient = candidate.potential <= current.potential + ARMIJO * decrease and (
                candidate.potential < current.potential
            )
            flat = candidate.potential <= current.potential + slack and candidate.residual < current.residual
            if sufficient or flat:
                accepted = candidate
                break
            t *= 0.5

        if accepted is None:
            lam *= 10.0
            logger.debug(f"Iteration {iterations}: line search failed, lambda {lam:.1e}")
        else:
            current = accepted
            trace.append(current.potential)
            if t == 1.0:
                lam = max(lam / 10.0, MIN_LAMBDA)
            if current.residual < best.residual:
                best = current
            logger.debug(f"Iteration {iterations}: residual {current.residual:.3e}, step {t:.1e}, lambda {lam:.1e}")

        if best.residual < 0.9 * mark_residual:
            mark_residual, mark_iteration = best.residual, iterations
        elif iterations - mark_iteration >= opts.stall_iterations:
            restarts += 1
            current = _evaluate(C, normals, target, _rescaled(current, target, d))
            if current.residual < best.residual:
                best = current
            lam = opts.lambda_init
            mark_residual, mark_iteration = best.residual, iterations
            logger.debug(f"Restart {restarts} from the rescaled iterate, residual {current.residual:.3e}")

    converged = best.residual <= threshold
    if converged:
        logger.info(f"Solved {m} atoms in {iterations} iterations, residual {best.residual:.3e}")
    else:
        logger.warning(f"No convergence after {iterations} iterations, residual {best.residual:.3e}")
    return SolveReport(
        K=best.K, residual_inf=best.residual, iterations=iterations, converged=converged, objective_trace=trace
    )
