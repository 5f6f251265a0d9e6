"""Virtual elements in space, discontinuous Galerkin in time, for u_tt + nu u_t - Laplace(u) = f."""

__version__ = "0.1.0"

from .dg import SlabBasis, SpaceTimeSolution, TimePartition, build_slab_system, march, temporal_matrices
from .linalg import KroneckerOperator, assemble, generalized_eigh, solve_dense
from .mesh import PolygonalMesh, generate_structured, generate_voronoi_lloyd, read_mesh, write_mesh
from .norms import EnergyBreakdown, RateFit, energy_norm, final_time_error, fit_rate, triple_norm
from .problems import WaveProblem, impulse, manufactured
from .solvers import (SpectralDecomposition, evaluate, solve_newmark, solve_vemdg,
                      spectral_semidiscrete)
from .vem import VemSpace

__all__ = [
    "EnergyBreakdown", "KroneckerOperator", "PolygonalMesh", "RateFit", "SlabBasis",
    "SpaceTimeSolution", "SpectralDecomposition", "TimePartition", "VemSpace", "WaveProblem",
    "assemble", "build_slab_system", "energy_norm", "evaluate", "final_time_error", "fit_rate",
    "generalized_eigh", "generate_structured", "generate_voronoi_lloyd", "impulse",
    "manufactured", "march", "read_mesh", "solve_dense", "solve_newmark", "solve_vemdg",
    "spectral_semidiscrete", "temporal_matrices", "triple_norm", "write_mesh",
]
