"""Error norms, grid transfer, work counters, and the JSON run report."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .hybrid import RunResult
from .mesh import Mesh
from .problems import Problem, problem_to_dict


def relative_l2(phi: np.ndarray, phi_ref: np.ndarray, h: float | None = None) -> float:
    """Relative discrete L2 distance ||phi - phi_ref|| / ||phi_ref||.

    Both fields must live on the same grid; the cell size cancels and is
    accepted only for interface symmetry.  An identically zero reference has
    no relative scale and is rejected.
    """
    if phi.shape != phi_ref.shape:
        raise ValueError(f"field shapes differ: {phi.shape} vs {phi_ref.shape}")
    ref_norm = float(np.sqrt(np.sum(phi_ref * phi_ref)))
    if ref_norm == 0.0:
        raise ValueError("reference field is identically zero; relative error undefined")
    diff = phi - phi_ref
    return float(np.sqrt(np.sum(diff * diff))) / ref_norm


def _require_same_domain(a: Mesh, b: Mesh) -> None:
    tol = 1e-12 * max(a.extent, b.extent)
    if (
        abs(a.x_min - b.x_min) > tol
        or abs(a.y_min - b.y_min) > tol
        or abs(a.extent - b.extent) > tol
    ):
        raise ValueError("meshes cover different domains")


def project_to_coarse(phi_fine: np.ndarray, fine: Mesh, coarse: Mesh) -> np.ndarray:
    """Average fine cells into coarse cells; requires nested grids."""
    _require_same_domain(fine, coarse)
    if phi_fine.shape != (fine.n_cells, fine.n_cells):
        raise ValueError("field shape does not match the fine mesh")
    if fine.n_cells % coarse.n_cells != 0:
        raise ValueError(
            f"grids are not nested: {fine.n_cells} is not a multiple of {coarse.n_cells}"
        )
    r = fine.n_cells // coarse.n_cells
    nc = coarse.n_cells
    return phi_fine.reshape(nc, r, nc, r).mean(axis=(1, 3))


def _overlap_matrix(n_src: int, h_src: float, n_dst: int, h_dst: float) -> np.ndarray:
    """1-D interval-overlap lengths: out[i_dst, i_src], both grids starting at 0."""
    src_lo = h_src * np.arange(n_src)
    src_hi = src_lo + h_src
    dst_lo = h_dst * np.arange(n_dst)
    dst_hi = dst_lo + h_dst
    lo = np.maximum(dst_lo[:, None], src_lo[None, :])
    hi = np.minimum(dst_hi[:, None], src_hi[None, :])
    return np.maximum(hi - lo, 0.0)


def resample_to_grid(phi_src: np.ndarray, src: Mesh, dst: Mesh) -> np.ndarray:
    """Conservative overlap-weighted resampling between same-domain grids.

    Each destination cell takes the area-weighted average of the source cells
    it overlaps, so the domain integral of the field is preserved exactly for
    any grid pair (nested or not).
    """
    _require_same_domain(src, dst)
    if phi_src.shape != (src.n_cells, src.n_cells):
        raise ValueError("field shape does not match the source mesh")
    ox = _overlap_matrix(src.n_cells, src.h, dst.n_cells, dst.h)
    return ox @ phi_src @ ox.T / (dst.h * dst.h)


def transfer_to_grid(phi_src: np.ndarray, src: Mesh, dst: Mesh) -> np.ndarray:
    """Move a field onto another grid: identity, nested block-average, or overlap."""
    if src.n_cells == dst.n_cells:
        _require_same_domain(src, dst)
        return phi_src
    if src.n_cells % dst.n_cells == 0:
        return project_to_coarse(phi_src, src, dst)
    return resample_to_grid(phi_src, src, dst)


def complexity_sn(n_ordinates: int, n_cells: int, sum_iterations: int) -> int:
    """Deterministic work: 4 unknowns per cell per ordinate per source iteration."""
    for name, v in (("n_ordinates", n_ordinates), ("n_cells", n_cells),
                    ("sum_iterations", sum_iterations)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v}")
    return 4 * n_ordinates * n_cells * n_cells * sum_iterations


def complexity_hybrid(n_mc_moved: int, c_sn_collided: int) -> int:
    """Hybrid work: total moved Monte Carlo particles plus the collided-solve work."""
    if n_mc_moved < 0 or c_sn_collided < 0:
        raise ValueError("work counters must be non-negative")
    return n_mc_moved + c_sn_collided


# ---------------------------------------------------------------------------
# run report


SCHEMA_VERSION = 1

_FLUX_CONVENTION = (
    "mc/hybrid report the final-step time-averaged track tally; "
    "sn reports the end-of-run field"
)


def config_digest(problem: Problem, settings: dict) -> str:
    payload = {"problem": problem_to_dict(problem), "settings": settings}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_report(
    result: RunResult, problem: Problem, delta: float | None = None
) -> dict:
    """Assemble the JSON-serializable run record (fluxes live in the grid file)."""
    settings = {
        "solver": result.solver,
        "n_cells": result.mesh.n_cells,
        "n_quad": result.n_quad,
        "n_particles": result.n_particles,
        "seed": result.seed,
        "tolerance": result.tolerance,
        "w_kill": result.w_kill,
        "workers_note": "results are independent of worker count",
    }
    report = {
        "schema_version": SCHEMA_VERSION,
        "problem": result.problem,
        "solver": result.solver,
        "n_cells": result.mesh.n_cells,
        "h": result.mesh.h,
        "x_min": result.mesh.x_min,
        "y_min": result.mesh.y_min,
        "extent": result.mesh.extent,
        "t_final": result.t_final,
        "n_steps": len(result.steps),
        "n_quad": result.n_quad,
        "n_ordinates": result.n_ordinates,
        "n_particles": result.n_particles,
        "seed": result.seed,
        "tolerance": result.tolerance,
        "w_kill": result.w_kill,
        "mc_moved": result.mc_moved,
        "sn_visits": result.sn_visits,
        "sum_sn_iterations": result.sum_sn_iterations,
        "complexity": result.complexity,
        "wall_time_s": result.wall_time,
        "flux_convention": _FLUX_CONVENTION,
        "config_digest": config_digest(problem, settings),
        "steps": [asdict(s) for s in result.steps],
    }
    if delta is not None:
        report["delta_vs_reference"] = delta
    return report


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
