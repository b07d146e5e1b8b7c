"""Discrete free-boundary min-max for disk maps into a target pair ``M ⊂ N``.

Modules
-------
geometry
    Embedded target manifolds, nearest-point projections and target pairs.
mesh
    Triangulated unit disk / half-disk, P1 maps and disjoint ball families.
energy
    Dirichlet energy, area, conformality defect, Hopf differential, Hardy quotients.
harmonic
    Constrained harmonic replacement and the small-energy estimates around it.
sweepout
    Sweepouts, tightening, perturbation, reparametrisation and the min-max driver.
analysis
    Concentration detection, rescaling, neck profiles and bubble decompositions.
cli
    JSON-configured batch driver.
"""

from .analysis import BubbleDecomposition, decompose, detect_concentration, neck_profile, rescale
from .energy import area, conformality_defect, dirichlet_energy, hopf_differential
from .geometry import EmbeddedManifold, ManifoldPair, ellipsoid, flat_subspace, solid, sphere, unit_ball_pair
from .harmonic import SolverConfig, SolverError, replace, solve_constrained
from .mesh import BallFamily, DiskMap, DiskMesh, build_disk_mesh, build_half_disk_mesh, make_ball_family
from .sweepout import (MinmaxConfig, Sweepout, TighteningConfig, ellipsoid_sweepout, minmax_run, tighten,
                       unit_ball_sweepout)

__all__ = [
    "BallFamily", "BubbleDecomposition", "DiskMap", "DiskMesh", "EmbeddedManifold", "ManifoldPair",
    "MinmaxConfig", "SolverConfig", "SolverError", "Sweepout", "TighteningConfig", "area",
    "build_disk_mesh", "build_half_disk_mesh", "conformality_defect", "decompose", "detect_concentration",
    "dirichlet_energy", "ellipsoid", "ellipsoid_sweepout", "flat_subspace", "hopf_differential",
    "make_ball_family", "minmax_run", "neck_profile", "replace", "rescale", "solid", "solve_constrained",
    "sphere", "tighten", "unit_ball_pair", "unit_ball_sweepout",
]
__version__ = "0.1.0"
