"""Structure-preserving finite-element solver for the Cahn-Hilliard-Biot system."""
from .mesh import SimplicialMesh, build_unit_square_mesh, mesh_hierarchy, refine_uniform
from .material import MaterialParams, MobilitySpec, SourceSpec
from .scheme import SchemeConfig, State, StepAux, run, solve_monolithic, step

__all__ = [
    "SimplicialMesh", "build_unit_square_mesh", "mesh_hierarchy", "refine_uniform",
    "MaterialParams", "MobilitySpec", "SourceSpec",
    "SchemeConfig", "State", "StepAux", "run", "solve_monolithic", "step",
]
__version__ = "0.1.0"
