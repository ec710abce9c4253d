"""Exact Lévy–Prokhorov distance between finite discrete measures.

For a fixed epsilon the worst violation

    g(mu, nu, eps) = max_A [mu(A) - nu(A_eps)],   A_eps = {y : |x - y| < eps, x in A}

only depends on which atom pairs are closer than eps, so it is constant on
the intervals between consecutive pairwise distances. It is evaluated by a
minimum cut on the bipartite graph source -> mu atoms -> nu atoms -> sink.
"""

import itertools
import math

import networkx as nx
import numpy as np
from loguru import logger

from comink.errors import DimensionMismatch, TooManyAtoms
from comink.measures.measure import DiscreteMeasure

ORACLE_MAX_ATOMS = 16


def _pairwise_distances(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    if len(mu) and len(nu) and mu.dim != nu.dim:
        raise DimensionMismatch(f"Measures of dimension {mu.dim} and {nu.dim}")
    if not len(mu) or not len(nu):
        return np.zeros((len(mu), len(nu)))
    return np.linalg.norm(mu.points[:, None, :] - nu.points[None, :, :], axis=2)


def _breakpoints(dist: np.ndarray) -> np.ndarray:
    return np.unique(np.concatenate([[0.0], dist.ravel()]))


def _excess(masses_a: np.ndarray, chosen: np.ndarray, masses_b: np.ndarray, reached: np.ndarray) -> float:
    return math.fsum(list(masses_a[chosen]) + [-m for m in masses_b[reached]])


def _worst_excess_flow(masses_a: np.ndarray, masses_b: np.ndarray, adjacent: np.ndarray) -> float:
    """max_A [a(A) - b(N(A))] through a minimum source/sink cut."""
    if not len(masses_a):
        return 0.0
    graph = nx.DiGraph()
    graph.add_node("source")
    graph.add_node("sink")
    for i, m in enumerate(masses_a):
        graph.add_edge("source", ("a", i), capacity=float(m))
    for j, m in enumerate(masses_b):
        graph.add_edge(("b", j), "sink", capacity=float(m))
    for i, j in zip(*np.nonzero(adjacent)):
        # no capacity attribute means infinite capacity
        graph.add_edge(("a", int(i)), ("b", int(j)))

    _, (source_side, _) = nx.minimum_cut(graph, "source", "sink")
    chosen = np.array([("a", i) in source_side for i in range(len(masses_a))], dtype=bool)
    reached = adjacent[chosen].any(axis=0) if chosen.any() else np.zeros(len(masses_b), dtype=bool)
    return max(0.0, _excess(masses_a, chosen, masses_b, reached))


def lp_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """
    Exact Lévy–Prokhorov distance between two finite discrete measures.

    Chordal distances are used between atoms. Empty measures are allowed.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
        The measures.

    Returns
    -------
    float
        The infimum of the eps with mu(A) <= nu(A_eps) + eps and
        nu(A) <= mu(A_eps) + eps for every Borel set A.
    """
    dist = _pairwise_distances(mu, nu)
    points = _breakpoints(dist)
    for k, left in enumerate(points):
        right = points[k + 1] if k + 1 < len(points) else math.inf
        adjacent = dist <= left
        worst = max(
            _worst_excess_flow(mu.masses, nu.masses, adjacent),
            _worst_excess_flow(nu.masses, mu.masses, adjacent.T),
        )
        logger.debug(f"Interval ({left:.6g}, {right:.6g}]: worst excess {worst:.12g}")
        if worst <= right:
            return float(max(worst, left))
    # the last interval is unbounded, so the scan always returns
    raise AssertionError("Breakpoint scan ended without a feasible interval")


# ==============================================================================


def _worst_excess_brute(masses_a: np.ndarray, masses_b: np.ndarray, adjacent: np.ndarray) -> float:
    best = 0.0
    n = len(masses_a)
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            chosen = np.zeros(n, dtype=bool)
            chosen[list(subset)] = True
            reached = adjacent[chosen].any(axis=0)
            best = max(best, _excess(masses_a, chosen, masses_b, reached))
    return best


def lp_distance_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """
    Lévy–Prokhorov distance by exhaustive enumeration of atom subsets.

    Slow reference implementation for verification of `lp_distance`.

    Raises
    ------
    TooManyAtoms
        If the two supports hold more than 16 atoms together.
    """
    if len(mu) + len(nu) > ORACLE_MAX_ATOMS:
        raise TooManyAtoms(f"Oracle is limited to {ORACLE_MAX_ATOMS} atoms, got {len(mu) + len(nu)}")
    dist = _pairwise_distances(mu, nu)

    def worst_after(eps: float) -> float:
        # sets A_eps' for eps' slightly above eps
        adjacent = dist <= eps
        return max(
            _worst_excess_brute(mu.masses, nu.masses, adjacent),
            _worst_excess_brute(nu.masses, mu.masses, adjacent.T),
        )

    # the infimum is either a pairwise distance or a value of the worst excess
    breakpoints = [float(b) for b in _breakpoints(dist)]
    candidates = set(breakpoints) | {worst_after(b) for b in breakpoints}
    for c in sorted(candidates):
        if worst_after(c) <= c:
            return float(c)
    raise AssertionError("No feasible candidate")
