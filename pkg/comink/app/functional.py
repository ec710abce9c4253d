from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

import yaml
from loguru import logger
from pydantic import BaseModel

from comink.coconvex.cfull import CFullSet, build, coconvex_volume, surface_area_measure
from comink.cone.cone import Cone, make_cone
from comink.errors import ConeMismatch
from comink.measures.measure import DiscreteMeasure, make_measure
from comink.solver.minkowski import SolveReport

DEFAULT_CONFIG = Path(__file__).parent.parent.parent / "config/comink.yaml"

Document = TypeVar("Document", bound=BaseModel)


def get_config(config_path: Path = DEFAULT_CONFIG) -> Dict[str, Any]:
    """
    Load the comink configuration from a YAML file.

    Parameters
    ----------
    config_path : Path
        Path to the YAML configuration file.

    Returns
    -------
    dict
        Dictionary with the `solver`, `stability` and `logging` sections.

    Raises
    ------
    FileNotFoundError
        If the specified config_path does not exist.
    yaml.YAMLError
        If there is an error parsing the YAML file.
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, "r") as f:
        try:
            config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            logger.error(f"Error parsing YAML file: {e}")
            raise

    logger.debug(f"Configuration loaded successfully from {config_path}")
    return config


# ==============================================================================
# JSON documents


class ConeDocument(BaseModel):
    dim: int
    generators: List[List[float]]

    def to_cone(self) -> Cone:
        return make_cone(self.dim, self.generators)

    @classmethod
    def from_cone(cls, C: Cone) -> "ConeDocument":
        return cls(dim=C.dim, generators=C.generators.tolist())


class SupportAtom(BaseModel):
    u: List[float]
    h: float


class BodyDocument(BaseModel):
    cone: Optional[ConeDocument] = None
    atoms: List[SupportAtom] = []

    def to_cfull(self, C: Cone) -> CFullSet:
        if self.cone is not None and not self.cone.to_cone().same_as(C):
            logger.error("Body document embeds a cone different from the given one")
            raise ConeMismatch("Body and cone documents disagree")
        return build(C, [atom.u for atom in self.atoms], [atom.h for atom in self.atoms])

    @classmethod
    def from_cfull(cls, K: CFullSet) -> "BodyDocument":
        return cls(
            cone=ConeDocument.from_cone(K.cone),
            atoms=[SupportAtom(u=u.tolist(), h=float(h)) for u, h in zip(K.normals, K.support)],
        )


class MassAtom(BaseModel):
    u: List[float]
    mass: float


class MeasureDocument(BaseModel):
    atoms: List[MassAtom] = []

    def to_measure(self, dim: Optional[int] = None) -> DiscreteMeasure:
        return make_measure([(atom.u, atom.mass) for atom in self.atoms], dim)

    @classmethod
    def from_measure(cls, mu: DiscreteMeasure) -> "MeasureDocument":
        return cls(atoms=[MassAtom(u=u.tolist(), mass=float(m)) for u, m in mu])


class SolutionAtom(BaseModel):
    u: List[float]
    h: float
    target_mass: float
    achieved_mass: float


class SolutionDocument(BaseModel):
    atoms: List[SolutionAtom]
    residual_inf: float
    iterations: int
    converged: bool
    coconvex_volume: float

    @classmethod
    def from_report(cls, report: SolveReport, phi: DiscreteMeasure) -> "SolutionDocument":
        K = report.K
        achieved = surface_area_measure(K)
        atoms = [
            SolutionAtom(u=u.tolist(), h=float(h), target_mass=phi.mass_at(u), achieved_mass=achieved.mass_at(u))
            for u, h in zip(K.normals, K.support)
        ]
        return cls(
            atoms=atoms,
            residual_inf=report.residual_inf,
            iterations=report.iterations,
            converged=report.converged,
            coconvex_volume=coconvex_volume(K, "integral"),
        )


def read_document(path: Path, model: Type[Document]) -> Document:
    """Parse and validate a JSON document, raising FileNotFoundError or pydantic's ValidationError."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Document not found: {path}")
    return model.model_validate_json(path.read_text())


def write_document(document: BaseModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote {type(document).__name__} to {path}")
