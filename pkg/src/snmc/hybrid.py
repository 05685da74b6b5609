"""Time-stepping drivers: pure Monte Carlo, deterministic, and hybrid.

The hybrid scheme splits every step into three stages:

1. uncollided transport: the carried particle population plus fresh external
   source particles fly through total cross sections without scattering
   (implicit capture), producing the uncollided tally;
2. collided solve: a backward-Euler discrete-ordinates step from zero initial
   data, driven by the isotropic re-emission of the uncollided tally, with
   scattering handled by source iteration;
3. relabeling: the total scattering emission (uncollided + collided) is
   sampled back into particles which fly scattering-free over the same step;
   the survivors join the carried population for the next step.

The reported scalar flux for Monte Carlo and hybrid runs is the track-length
tally averaged over the final step; the deterministic driver reports the
end-of-run field.  Particle populations are kept as lists of bank pieces and
never concatenated, which keeps peak memory near the size of the live bank.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dg import BoundaryTraces, TimesteppedSn, isotropic_load, scalar_flux_dg
from .mc import (
    STREAM_BOUNDARY,
    STREAM_IC,
    STREAM_RELABEL,
    STREAM_RELABEL_ROULETTE,
    STREAM_ROULETTE,
    STREAM_VOLUME,
    MCParams,
    ParticleBank,
    advance_and_tally,
    finalize_tally,
    roulette_banks,
    sample_left_boundary_source,
    sample_volume_source,
    stream,
)
from .mesh import MaterialField, Mesh
from .problems import (
    Problem,
    build_materials,
    build_mesh,
    build_source_grid,
    gaussian_cell_averages,
    sample_initial_condition,
    time_steps,
)
from .quadrature import FOUR_PI, QuadratureSet, product_quadrature

logger = logging.getLogger(__name__)


@dataclass
class StepRecord:
    """Per-step accounting shared by all drivers (unused fields stay zero)."""

    index: int
    t_end: float
    dt: float
    n_prev: int  # carried particles entering the step
    n_source: int  # fresh external-source particles born this step
    moved_uncollided: int  # particles flown in the uncollided stage
    sn_iterations: int  # source iterations of the deterministic stage
    n_relabel: int  # particles born from the scattering emission
    moved_relabel: int
    n_killed: int  # roulette kills (both stages)
    bank_size: int  # carried particles leaving the step
    bank_weight: float
    clipped_weight: float  # emission weight lost to clipping negative densities


@dataclass
class RunResult:
    solver: str
    problem: str
    phi: np.ndarray
    mesh: Mesh
    t_final: float
    n_quad: int
    n_ordinates: int
    n_particles: int
    seed: int
    tolerance: float
    w_kill: float
    steps: list[StepRecord] = field(default_factory=list)
    mc_moved: int = 0  # live counter: every particle flight in any MC stage
    sn_visits: int = 0  # live counter: 4 * (cell, ordinate) visits in sweeps
    wall_time: float = 0.0
    bank_pieces: list[ParticleBank] = field(default_factory=list)

    @property
    def sum_sn_iterations(self) -> int:
        return sum(s.sn_iterations for s in self.steps)

    @property
    def complexity(self) -> int:
        """Work estimate: moved particles plus per-unknown sweep visits."""
        return self.mc_moved + self.sn_visits

    def final_bank(self) -> ParticleBank:
        """Concatenated carried population (copies; prefer bank_pieces for big runs)."""
        return ParticleBank.concatenated(self.bank_pieces)


@dataclass
class _Runtime:
    problem: Problem
    mesh: Mesh
    materials: MaterialField
    source_grid: np.ndarray
    dts: list[float]

    @property
    def volume_weight_rate(self) -> float:
        return float(self.source_grid.sum()) * self.mesh.cell_area

    @property
    def boundary_weight_rate(self) -> float:
        b = self.problem.boundary
        if b is None:
            return 0.0
        return b.value * self.mesh.extent * np.pi


def _materialize(problem: Problem) -> _Runtime:
    mesh = build_mesh(problem)
    return _Runtime(
        problem=problem,
        mesh=mesh,
        materials=build_materials(problem, mesh),
        source_grid=build_source_grid(problem, mesh),
        dts=time_steps(problem),
    )


def _fresh_pieces(
    rt: _Runtime, dt: float, n_p: int, seed: int, step: int
) -> tuple[list[ParticleBank], int]:
    """Sample this step's external sources; the budget splits by emitted weight."""
    w_vol = rt.volume_weight_rate
    w_bnd = rt.boundary_weight_rate
    n_vol = n_bnd = 0
    if w_vol > 0.0 and w_bnd > 0.0:
        n_vol = int(round(n_p * w_vol / (w_vol + w_bnd)))
        n_bnd = n_p - n_vol
    elif w_vol > 0.0:
        n_vol = n_p
    elif w_bnd > 0.0:
        n_bnd = n_p
    pieces = []
    if n_vol > 0:
        b = sample_volume_source(
            rt.mesh, rt.source_grid, dt, n_vol, stream(seed, STREAM_VOLUME, step)
        )
        if b.size:
            pieces.append(b)
    if n_bnd > 0:
        b = sample_left_boundary_source(
            rt.mesh, rt.problem.boundary.value, dt, n_bnd, stream(seed, STREAM_BOUNDARY, step)
        )
        if b.size:
            pieces.append(b)
    return pieces, sum(b.size for b in pieces)


def _uncollided_stage(
    pieces: list[ParticleBank],
    rt: _Runtime,
    dt: float,
    n_p: int,
    seed: int,
    step: int,
    w_kill: float,
    workers: int,
) -> tuple[list[ParticleBank], np.ndarray, int, int, int]:
    """Fly carried + fresh particles without scattering; returns survivors and tally."""
    fresh, n_src = _fresh_pieces(rt, dt, n_p, seed, step)
    for b in pieces:
        b.tau.fill(dt)  # carried particles get the full new step
    raw = np.zeros((rt.mesh.n_cells, rt.mesh.n_cells))
    advanced = []
    moved = 0
    for b in pieces + fresh:
        sb, mv = advance_and_tally(b, rt.mesh, rt.materials.sigma_t, dt, raw, workers)
        moved += mv
        if sb.size:
            advanced.append(sb)
    survivors, killed = roulette_banks(advanced, w_kill, stream(seed, STREAM_ROULETTE, step))
    survivors = [b for b in survivors if b.size]
    return survivors, raw, moved, n_src, killed


def _initial_pieces(problem: Problem, n_p: int, seed: int) -> list[ParticleBank]:
    if problem.initial is None:
        return []
    bank = sample_initial_condition(problem, n_p, stream(seed, STREAM_IC, 0))
    return [bank] if bank.size else []


def _resolve_mc_params(problem: Problem, params: MCParams | None) -> MCParams:
    if params is not None:
        return params
    r = problem.run
    return MCParams(n_particles=r.n_particles, w_kill=r.w_kill, seed=r.seed)


def run_pure_mc(
    problem: Problem, params: MCParams | None = None, workers: int = 1
) -> RunResult:
    """Scattering-free Monte Carlo: valid as a transport solution when sigma_s = 0.

    In scattering media this under-resolves the collided population by design;
    it is the uncollided stage of the hybrid run in isolation.
    """
    params = _resolve_mc_params(problem, params)
    rt = _materialize(problem)
    t0 = time.perf_counter()
    pieces = _initial_pieces(problem, params.n_particles, params.seed)
    result = RunResult(
        solver="mc",
        problem=problem.name,
        phi=np.zeros((rt.mesh.n_cells, rt.mesh.n_cells)),
        mesh=rt.mesh,
        t_final=problem.run.t_final,
        n_quad=0,
        n_ordinates=0,
        n_particles=params.n_particles,
        seed=params.seed,
        tolerance=0.0,
        w_kill=params.w_kill,
    )
    t_end = 0.0
    for k, dt in enumerate(rt.dts):
        step = k + 1
        t_end += dt
        n_prev = sum(b.size for b in pieces)
        pieces, raw, moved, n_src, killed = _uncollided_stage(
            pieces, rt, dt, params.n_particles, params.seed, step, params.w_kill, workers
        )
        result.phi = finalize_tally(raw, rt.mesh, dt)
        result.mc_moved += moved
        bank_size = sum(b.size for b in pieces)
        result.steps.append(
            StepRecord(
                index=step,
                t_end=t_end,
                dt=dt,
                n_prev=n_prev,
                n_source=n_src,
                moved_uncollided=moved,
                sn_iterations=0,
                n_relabel=0,
                moved_relabel=0,
                n_killed=killed,
                bank_size=bank_size,
                bank_weight=sum(b.total_weight for b in pieces),
                clipped_weight=0.0,
            )
        )
        logger.info(
            "mc step %d/%d t=%.6g moved=%d bank=%d", step, len(rt.dts), t_end, moved, bank_size
        )
    result.bank_pieces = pieces
    result.wall_time = time.perf_counter() - t0
    return result


def run_hybrid(
    problem: Problem,
    n_quad: int | None = None,
    params: MCParams | None = None,
    tol: float | None = None,
    workers: int = 1,
) -> RunResult:
    """Hybrid run: uncollided Monte Carlo, collided discrete ordinates, relabeling."""
    params = _resolve_mc_params(problem, params)
    n_quad = problem.run.n_quad if n_quad is None else n_quad
    tol = problem.run.tolerance if tol is None else tol
    quad = product_quadrature(n_quad)
    rt = _materialize(problem)
    t0 = time.perf_counter()
    has_scattering = bool(np.any(rt.materials.sigma_s > 0.0))
    stepper: TimesteppedSn | None = None
    visits_base = 0
    pieces = _initial_pieces(problem, params.n_particles, params.seed)
    result = RunResult(
        solver="hybrid",
        problem=problem.name,
        phi=np.zeros((rt.mesh.n_cells, rt.mesh.n_cells)),
        mesh=rt.mesh,
        t_final=problem.run.t_final,
        n_quad=n_quad,
        n_ordinates=quad.n_ordinates,
        n_particles=params.n_particles,
        seed=params.seed,
        tolerance=tol,
        w_kill=params.w_kill,
    )
    h = rt.mesh.h
    seed = params.seed
    t_end = 0.0
    for k, dt in enumerate(rt.dts):
        step = k + 1
        t_end += dt
        n_prev = sum(b.size for b in pieces)

        pieces, raw_u, moved_u, n_src, killed = _uncollided_stage(
            pieces, rt, dt, params.n_particles, params.seed, step, params.w_kill, workers
        )
        phi_u = finalize_tally(raw_u, rt.mesh, dt)

        n_iters = 0
        emission = rt.materials.sigma_s * phi_u  # angle-integrated scattering rate
        if has_scattering and np.any(emission > 0.0):
            if stepper is None or stepper.dt != dt:
                if stepper is not None:
                    visits_base += stepper.visits
                stepper = TimesteppedSn(rt.mesh, quad, rt.materials, dt)
            alpha, n_iters = stepper.step(
                None, isotropic_load(emission / FOUR_PI, h), None, tol=tol
            )
            phi_c, _ = scalar_flux_dg(alpha, quad)
            emission = rt.materials.sigma_s * (phi_u + phi_c)

        clipped = 0.0
        if np.any(emission < 0.0):
            clipped = -float(emission[emission < 0.0].sum()) * rt.mesh.cell_area * dt
            emission = np.maximum(emission, 0.0)

        relabel = sample_volume_source(
            rt.mesh, emission, dt, params.n_particles, stream(seed, STREAM_RELABEL, step)
        )
        n_rel = relabel.size
        moved_r = 0
        raw_r = np.zeros_like(raw_u)
        if n_rel:
            sb, moved_r = advance_and_tally(
                relabel, rt.mesh, rt.materials.sigma_t, dt, raw_r, workers
            )
            kept, killed_r = roulette_banks(
                [sb], params.w_kill, stream(seed, STREAM_RELABEL_ROULETTE, step)
            )
            killed += killed_r
            pieces.extend(b for b in kept if b.size)

        result.phi = phi_u + finalize_tally(raw_r, rt.mesh, dt)
        result.mc_moved += moved_u + moved_r
        bank_size = sum(b.size for b in pieces)
        result.steps.append(
            StepRecord(
                index=step,
                t_end=t_end,
                dt=dt,
                n_prev=n_prev,
                n_source=n_src,
                moved_uncollided=moved_u,
                sn_iterations=n_iters,
                n_relabel=n_rel,
                moved_relabel=moved_r,
                n_killed=killed,
                bank_size=bank_size,
                bank_weight=sum(b.total_weight for b in pieces),
                clipped_weight=clipped,
            )
        )
        logger.info(
            "hybrid step %d/%d t=%.6g moved=%d+%d sn_iters=%d bank=%d",
            step, len(rt.dts), t_end, moved_u, moved_r, n_iters, bank_size,
        )
    result.bank_pieces = pieces
    result.sn_visits = visits_base + (stepper.visits if stepper is not None else 0)
    result.wall_time = time.perf_counter() - t0
    return result


def run_monolithic_sn(
    problem: Problem, n_quad: int | None = None, tol: float | None = None
) -> RunResult:
    """Backward-Euler discrete-ordinates solve of the full transport problem."""
    n_quad = problem.run.n_quad if n_quad is None else n_quad
    tol = problem.run.tolerance if tol is None else tol
    quad = product_quadrature(n_quad)
    rt = _materialize(problem)
    t0 = time.perf_counter()
    mesh = rt.mesh
    n = mesh.n_cells

    iso = None
    if np.any(rt.source_grid > 0.0):
        iso = isotropic_load(rt.source_grid / FOUR_PI, mesh.h)
    boundary = None
    if rt.problem.boundary is not None:
        boundary = BoundaryTraces.constant_left_influx(
            quad.n_ordinates, n, rt.problem.boundary.value
        )
    alpha: np.ndarray | None = None
    if rt.problem.initial is not None:
        avg = gaussian_cell_averages(mesh, rt.problem.initial.variance, rt.problem.center)
        alpha = np.zeros((quad.n_ordinates, n, n, 4))
        alpha[:, :, :, 0] = avg / FOUR_PI

    result = RunResult(
        solver="sn",
        problem=problem.name,
        phi=np.zeros((n, n)),
        mesh=mesh,
        t_final=problem.run.t_final,
        n_quad=n_quad,
        n_ordinates=quad.n_ordinates,
        n_particles=0,
        seed=0,
        tolerance=tol,
        w_kill=0.0,
    )
    stepper: TimesteppedSn | None = None
    visits_base = 0
    t_end = 0.0
    for k, dt in enumerate(rt.dts):
        step = k + 1
        t_end += dt
        if stepper is None or stepper.dt != dt:
            if stepper is not None:
                visits_base += stepper.visits
            stepper = TimesteppedSn(mesh, quad, rt.materials, dt)
        alpha, n_iters = stepper.step(alpha, iso, boundary, tol=tol)
        result.steps.append(
            StepRecord(
                index=step,
                t_end=t_end,
                dt=dt,
                n_prev=0,
                n_source=0,
                moved_uncollided=0,
                sn_iterations=n_iters,
                n_relabel=0,
                moved_relabel=0,
                n_killed=0,
                bank_size=0,
                bank_weight=0.0,
                clipped_weight=0.0,
            )
        )
        logger.info("sn step %d/%d t=%.6g iters=%d", step, len(rt.dts), t_end, n_iters)
    result.phi, _ = scalar_flux_dg(alpha, quad)
    result.sn_visits = visits_base + stepper.visits
    result.wall_time = time.perf_counter() - t0
    return result


def solve(
    problem: Problem,
    solver: str,
    *,
    n_quad: int | None = None,
    n_particles: int | None = None,
    seed: int | None = None,
    tol: float | None = None,
    w_kill: float | None = None,
    workers: int = 1,
) -> RunResult:
    """Dispatch to one of the drivers with per-call overrides of the run defaults."""
    r = problem.run
    params = MCParams(
        n_particles=r.n_particles if n_particles is None else n_particles,
        w_kill=r.w_kill if w_kill is None else w_kill,
        seed=r.seed if seed is None else seed,
    )
    if solver == "mc":
        return run_pure_mc(problem, params, workers=workers)
    if solver == "hybrid":
        return run_hybrid(problem, n_quad, params, tol=tol, workers=workers)
    if solver == "sn":
        return run_monolithic_sn(problem, n_quad, tol=tol)
    raise ValueError(f"unknown solver {solver!r} (expected mc, sn, or hybrid)")
