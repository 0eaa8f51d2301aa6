"""Finite-volume filtered-flow solver with POD-Galerkin reduced order models."""

__version__ = "0.1.0"

from .fields import (BoundaryCondition, CellField, dirichlet, neumann,
                     zero_gradient)
from .fom import (CaseSetup, FilterParams, FlowSolver, FluidProperties,
                  FOMState, SolverControls, TimeSetup)
from .mesh import (ChannelGeometry, Mesh, QualityReport,
                   generate_channel_cylinder_mesh, generate_channel_mesh,
                   mesh_quality)
from .meshio import load_mesh, save_mesh
from .pod import PODBasis, build_basis, correlation_matrix, cumulative_energy
from .rom_offline import Bases, ReducedOperators, assemble_reduced_operators
from .rom_online import ReducedState, run_rom
from .snapshots import SnapshotSet
