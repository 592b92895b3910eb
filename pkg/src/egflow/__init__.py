"""Pressure-robust enriched Galerkin flow solver on quadrilateral meshes.

The velocity is discretized with continuous bilinear elements enriched by one
discontinuous linear function per cell, the pressure with piecewise constants,
and the temperature with continuous bilinears.  A velocity reconstruction into
the lowest-order Arbogast-Correa H(div) space makes the momentum balance
pressure robust and the reconstructed velocity exactly divergence free.
Time stepping is backward Euler with Picard or Anderson-accelerated Picard
iterations per step.
"""

from .mesh import (
    Mesh,
    build_uniform_quad_mesh,
    build_trapezoid_mesh,
    build_pore_mesh,
    read_mesh,
    write_mesh,
)
from .fem import FemSpace, quadrature_rule
from .ac0 import AC0Basis, Reconstruction
from .assembly import AssemblyConfig, BoundaryData, Assembler
from .solvers import (PicardConfig, anderson_solve, backward_euler_step,
                      initial_state, simulate)
from .problems import (cavity_problem, channel_problem, convergence_case,
                       pore_problem)

__all__ = [
    "Mesh",
    "build_uniform_quad_mesh",
    "build_trapezoid_mesh",
    "build_pore_mesh",
    "read_mesh",
    "write_mesh",
    "FemSpace",
    "quadrature_rule",
    "AC0Basis",
    "Reconstruction",
    "AssemblyConfig",
    "BoundaryData",
    "Assembler",
    "PicardConfig",
    "anderson_solve",
    "backward_euler_step",
    "simulate",
    "initial_state",
    "cavity_problem",
    "convergence_case",
    "pore_problem",
    "channel_problem",
]
