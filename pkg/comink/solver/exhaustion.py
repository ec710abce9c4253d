import math
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from comink.coconvex.cfull import (
    CFullSet,
    clearance_bound,
    clearance_radius,
    coconvex_volume,
    hausdorff_cfull,
)
from comink.cone.cone import Cone, atom_margins
from comink.errors import InvalidInputError
from comink.measures.measure import DiscreteMeasure, restrict_margin
from comink.solver.minkowski import SolverOptions, solve

# Relative tolerance of the bin edges of the necessary profile
BIN_TOL = 1e-9


class StageDiagnostics(BaseModel):
    margin: float
    atoms: int
    volume: float
    clearance: float
    hausdorff_prev: Optional[float] = None
    c1: float
    volume_bound: float
    volume_bound_ok: bool
    converged: bool


class ExhaustionStage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    K: CFullSet
    diagnostics: StageDiagnostics


def solve_exhaustion(
    C: Cone, phi: DiscreteMeasure, margins: Sequence[float], opts: Optional[SolverOptions] = None
) -> List[ExhaustionStage]:
    """
    Solve on the restrictions of phi to atoms at margin at least delta_j.

    Parameters
    ----------
    C : Cone
        The cone.
    phi : DiscreteMeasure
        Measure with atoms in Omega_C.
    margins : sequence of float
        Strictly decreasing positive margins.
    opts : SolverOptions, optional
        Options handed to `solve`.

    Returns
    -------
    list of ExhaustionStage
        One stage per margin with the solved set and its diagnostics: atom
        count, coconvex volume, clearance radius, Hausdorff distance to the
        previous stage and the volume bound V(C \\ L_j) <= (c1 / d) phi(total).
    """
    margins = [float(delta) for delta in margins]
    if not margins or any(delta <= 0.0 for delta in margins) or any(
        b >= a for a, b in zip(margins, margins[1:])
    ):
        raise InvalidInputError(f"Margins must be positive and strictly decreasing, got {margins}")

    c1 = clearance_bound(C, phi.total)
    volume_bound = c1 / C.dim * phi.total
    stages: List[ExhaustionStage] = []
    for delta in margins:
        restricted = restrict_margin(phi, C, delta)
        report = solve(C, restricted, opts)
        volume = coconvex_volume(report.K, "direct")
        previous = hausdorff_cfull(stages[-1].K, report.K) if stages else None
        ok = volume <= volume_bound + 1e-9
        if not ok:
            logger.warning(f"Stage at margin {delta:.3e}: volume {volume:.12g} exceeds {volume_bound:.12g}")
        diagnostics = StageDiagnostics(
            margin=delta,
            atoms=len(restricted),
            volume=volume,
            clearance=clearance_radius(report.K),
            hausdorff_prev=previous,
            c1=c1,
            volume_bound=volume_bound,
            volume_bound_ok=ok,
            converged=report.converged,
        )
        logger.info(
            f"Stage at margin {delta:.3e}: {diagnostics.atoms} atoms, volume {volume:.6g}, "
            f"clearance {diagnostics.clearance:.6g}"
        )
        stages.append(ExhaustionStage(K=report.K, diagnostics=diagnostics))
    return stages


# ==============================================================================


def dyadic_margins(decades: int) -> List[float]:
    """The margins 2^-1, 2^-2, ... down to 10^-decades."""
    if decades < 1:
        raise InvalidInputError(f"Need at least one decade, got {decades}")
    floor = 10.0 ** (-decades)
    margins = []
    k = 1
    while 2.0**-k >= floor:
        margins.append(2.0**-k)
        k += 1
    return margins


class ProfileEntry(BaseModel):
    delta: float
    value: float


class NecessaryProfile(BaseModel):
    entries: List[ProfileEntry]
    unbounded_suspect: bool


def necessary_profile(phi: DiscreteMeasure, C: Cone, margins: Sequence[float]) -> NecessaryProfile:
    """
    Profile of delta^(d-1) phi(omega) over the annuli of atoms at margin in [delta, 2 delta).

    The profile is flagged as unbounded when, over the last four decades of
    delta, the values never decrease as delta shrinks, start positive and at
    least double.
    """
    deltas = sorted((float(delta) for delta in margins), reverse=True)
    found = atom_margins(C, phi.points) if len(phi) else np.zeros(0)
    entries = []
    for delta in deltas:
        lower, upper = delta * (1.0 - BIN_TOL), 2.0 * delta * (1.0 - BIN_TOL)
        inside = (found >= lower) & (found < upper)
        mass = math.fsum(phi.masses[inside]) if len(phi) else 0.0
        entries.append(ProfileEntry(delta=delta, value=delta ** (C.dim - 1) * mass))

    suspect = False
    if entries:
        smallest = entries[-1].delta
        window = [e.value for e in entries if e.delta <= 1e4 * smallest]
        suspect = (
            len(window) >= 2
            and window[0] > 0.0
            and all(b >= a for a, b in zip(window, window[1:]))
            and window[-1] >= 2.0 * window[0]
        )
    if suspect:
        logger.warning("Necessary profile is UNBOUNDED-SUSPECT")
    return NecessaryProfile(entries=entries, unbounded_suspect=suspect)
