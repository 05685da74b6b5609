"""Hybrid Monte Carlo / discrete-ordinates solver for time-dependent linear
transport on 2-D Cartesian grids.

The three drivers share one problem description: ``run_pure_mc`` flies
weighted particles with implicit capture and no scattering treatment,
``run_monolithic_sn`` does backward-Euler discrete-ordinates steps with a
bilinear discontinuous-Galerkin mesh, and ``run_hybrid`` splits each step
into uncollided Monte Carlo, a collided deterministic solve, and relabeling
of the scattered emission back into particles.
"""

from .dg import (
    BoundaryTraces,
    ConvergenceError,
    SnSweepSolver,
    TimesteppedSn,
    implicit_step,
    isotropic_load,
    scalar_flux_dg,
    source_iteration,
)
from .hybrid import RunResult, StepRecord, run_hybrid, run_monolithic_sn, run_pure_mc, solve
from .mc import (
    MCParams,
    ParticleBank,
    advance_and_tally,
    finalize_tally,
    read_bank,
    russian_roulette,
    sample_left_boundary_source,
    sample_volume_source,
    stream,
    write_bank,
)
from .mesh import MaterialField, Mesh, RaySegment, paint_cells, trace_ray
from .metrics import (
    build_report,
    complexity_hybrid,
    complexity_sn,
    project_to_coarse,
    read_report,
    relative_l2,
    resample_to_grid,
    transfer_to_grid,
    write_report,
)
from .problems import (
    GaussianPulse,
    LeftInflux,
    MaterialRect,
    Problem,
    RunDefaults,
    SourceRect,
    hohlraum_problem,
    lattice_problem,
    line_source_problem,
    read_problem,
    sample_initial_condition,
    time_steps,
    write_problem,
)
from .quadrature import QuadratureSet, angular_average, product_quadrature

__version__ = "0.1.0"

__all__ = [
    "BoundaryTraces",
    "ConvergenceError",
    "GaussianPulse",
    "LeftInflux",
    "MCParams",
    "MaterialField",
    "MaterialRect",
    "Mesh",
    "ParticleBank",
    "Problem",
    "QuadratureSet",
    "RaySegment",
    "RunDefaults",
    "RunResult",
    "SnSweepSolver",
    "SourceRect",
    "StepRecord",
    "TimesteppedSn",
    "advance_and_tally",
    "angular_average",
    "build_report",
    "complexity_hybrid",
    "complexity_sn",
    "finalize_tally",
    "hohlraum_problem",
    "implicit_step",
    "isotropic_load",
    "lattice_problem",
    "line_source_problem",
    "paint_cells",
    "product_quadrature",
    "project_to_coarse",
    "read_bank",
    "read_problem",
    "read_report",
    "relative_l2",
    "resample_to_grid",
    "run_hybrid",
    "run_monolithic_sn",
    "run_pure_mc",
    "russian_roulette",
    "sample_initial_condition",
    "sample_left_boundary_source",
    "sample_volume_source",
    "scalar_flux_dg",
    "solve",
    "source_iteration",
    "stream",
    "time_steps",
    "trace_ray",
    "transfer_to_grid",
    "write_bank",
    "write_problem",
    "write_report",
]
