import math
from typing import List, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict

from comink.coconvex.cfull import CFullSet, hausdorff_cfull, surface_area_measure
from comink.cone.cone import Cone, atom_margins
from comink.errors import InvalidInputError, MarginTooSmall
from comink.measures.measure import DiscreteMeasure, make_measure
from comink.measures.prokhorov import lp_distance
from comink.solver.minkowski import SolverOptions, solve, solve_chain_2d

MIN_TRIALS = 10
RECORD_COLUMNS = ["trial", "jitter", "lp", "dh", "ratio"]


class StabilityRecord(BaseModel):
    trial: int
    jitter: float
    lp: float
    dh: float
    ratio: Optional[float] = None


class StabilityResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: List[StabilityRecord]
    c_hat: float
    slope: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([record.model_dump() for record in self.records], columns=RECORD_COLUMNS)


def _solve_body(C: Cone, phi: DiscreteMeasure, opts: Optional[SolverOptions]) -> CFullSet:
    if C.dim == 2:
        return solve_chain_2d(C, phi)
    return solve(C, phi, opts).K


def perturb(phi: DiscreteMeasure, C: Cone, jitter: float, rng: np.random.Generator) -> DiscreteMeasure:
    """Scale every mass by 1 + U[-jitter, jitter] and move every atom by a geodesic angle of at most jitter."""
    if jitter == 0.0:
        return phi
    atoms = []
    for u, m in phi:
        direction = rng.standard_normal(C.dim)
        direction -= (direction @ u) * u
        direction /= np.linalg.norm(direction)
        angle = rng.uniform(0.0, jitter)
        moved = math.cos(angle) * u + math.sin(angle) * direction
        atoms.append((moved / np.linalg.norm(moved), m * (1.0 + rng.uniform(-jitter, jitter))))
    perturbed = make_measure(atoms, C.dim)
    atom_margins(C, perturbed.points)
    return perturbed


def run_stability(
    C: Cone,
    phi: DiscreteMeasure,
    jitter: float,
    trials: int,
    seed: int,
    rungs: int = 6,
    opts: Optional[SolverOptions] = None,
) -> StabilityResult:
    """
    Empirical stability constant of the discrete Minkowski problem.

    Every trial perturbs phi, solves for both measures and records the
    Lévy–Prokhorov distance of the surface area measures, the Hausdorff
    distance of the sets and their ratio dh / lp^(1/d). Trials run on the
    jitter ladder jitter, jitter / 2, ..., jitter / 2^(rungs - 1), each with
    its own random stream derived from (seed, rung, trial).

    Parameters
    ----------
    C : Cone
        The cone.
    phi : DiscreteMeasure
        Measure whose atoms have margin at least 4 jitter.
    jitter : float
        Largest relative mass change and geodesic atom move.
    trials : int
        Trials per rung, at least 10.
    seed : int
        Seed of the random streams.
    rungs : int, optional
        Length of the jitter ladder, by default 6.
    opts : SolverOptions, optional
        Options of the three-dimensional solver.

    Returns
    -------
    StabilityResult
        The records, c_hat = max ratio (0 when no ratio is defined) and the
        least-squares slope of log dh against log lp (None when undefined).

    Raises
    ------
    MarginTooSmall
        If an atom of phi has margin below 4 jitter.
    """
    if trials < MIN_TRIALS:
        raise InvalidInputError(f"At least {MIN_TRIALS} trials are needed, got {trials}")
    if jitter < 0.0 or rungs < 1:
        raise InvalidInputError(f"Invalid jitter {jitter} or ladder length {rungs}")
    if len(phi) and float(np.min(atom_margins(C, phi.points))) < 4.0 * jitter:
        logger.error(f"Atoms closer than {4.0 * jitter:.3e} to the boundary of Omega_C")
        raise MarginTooSmall("Atom margins must be at least four times the jitter")

    base = _solve_body(C, phi, opts)
    base_sam = surface_area_measure(base)
    records: List[StabilityRecord] = []
    for rung in range(rungs):
        level = jitter / 2.0**rung
        for trial in range(trials):
            rng = np.random.default_rng([seed, rung, trial])
            body = _solve_body(C, perturb(phi, C, level, rng), opts)
            lp = lp_distance(base_sam, surface_area_measure(body))
            dh = hausdorff_cfull(base, body)
            ratio = dh / lp ** (1.0 / C.dim) if lp > 0.0 else None
            records.append(StabilityRecord(trial=trial, jitter=level, lp=lp, dh=dh, ratio=ratio))
        logger.debug(f"Rung {rung} (jitter {level:.3e}) done")

    ratios = [r.ratio for r in records if r.ratio is not None]
    c_hat = max(ratios) if ratios else 0.0
    usable = [(r.lp, r.dh) for r in records if r.lp > 0.0 and r.dh > 0.0]
    slope = None
    if len({lp for lp, _ in usable}) >= 2:
        logs = np.log(np.array(usable))
        slope = float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])
    logger.info(f"Stability: {len(records)} trials, c_hat {c_hat:.6g}, slope {slope}")
    return StabilityResult(records=records, c_hat=c_hat, slope=slope)
