"""Command-line front end: run solvers on problem files, write grids/reports/studies.

Artifacts:

* ``flux.csv`` — the scalar-flux grid.  First line holds ``N_x,h,x_min,y_min``;
  then N_x rows of N_x values, each row a fixed y (bottom to top), x increasing
  left to right.  Values use 17 significant digits, so read(write(phi)) is
  bit-exact.
* ``report.json`` — run settings, counters, timings, and (with ``--ref``) the
  relative L2 distance to a reference grid resampled onto the run grid.
* ``study.csv`` — one row per study entry: label, settings, delta, complexity,
  status.  The study keeps going past individual failures and marks them.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - environment dependent
    import tomli as tomllib

from .hybrid import RunResult, solve
from .mesh import Mesh
from .metrics import build_report, relative_l2, transfer_to_grid, write_report
from .problems import Problem, read_problem

logger = logging.getLogger(__name__)

_FMT = "%.17g"


def write_grid(path, phi: np.ndarray, mesh: Mesh) -> None:
    n = mesh.n_cells
    if phi.shape != (n, n):
        raise ValueError("field shape does not match the mesh")
    lines = [",".join([str(n), _FMT % mesh.h, _FMT % mesh.x_min, _FMT % mesh.y_min])]
    for iy in range(n):
        lines.append(",".join(_FMT % v for v in phi[:, iy]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_grid(path) -> tuple[np.ndarray, Mesh]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split(",")
    if len(head) != 4:
        raise ValueError(f"malformed grid header in {path}")
    n = int(head[0])
    h, x_min, y_min = (float(v) for v in head[1:])
    if len(lines) != n + 1:
        raise ValueError(f"grid file {path} has {len(lines) - 1} rows, expected {n}")
    phi = np.empty((n, n))
    for iy, ln in enumerate(lines[1:]):
        row = np.array([float(v) for v in ln.split(",")])
        if row.size != n:
            raise ValueError(f"grid row {iy} has {row.size} values, expected {n}")
        phi[:, iy] = row
    return phi, Mesh(x_min, y_min, n * h, n)


def _delta_vs_reference(phi: np.ndarray, mesh: Mesh, ref_path) -> float:
    ref_phi, ref_mesh = read_grid(ref_path)
    return relative_l2(phi, transfer_to_grid(ref_phi, ref_mesh, mesh))


def _write_run_artifacts(
    out_dir: Path, result: RunResult, problem: Problem, ref_path=None
) -> float | None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_grid(out_dir / "flux.csv", result.phi, result.mesh)
    delta = None
    if ref_path is not None:
        delta = _delta_vs_reference(result.phi, result.mesh, ref_path)
    write_report(out_dir / "report.json", build_report(result, problem, delta))
    return delta


def cmd_run(args) -> int:
    try:
        problem = read_problem(args.problem)
        result = solve(
            problem,
            args.solver,
            n_quad=args.n,
            n_particles=args.np,
            seed=args.seed,
            tol=args.tol,
            w_kill=args.w_kill,
            workers=args.workers,
        )
        delta = _write_run_artifacts(Path(args.out), result, problem, args.ref)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    msg = (
        f"{result.solver} {result.problem}: n_cells={result.mesh.n_cells} "
        f"steps={len(result.steps)} complexity={result.complexity}"
    )
    if delta is not None:
        msg += f" delta={delta:.6g}"
    print(msg)
    return 0


def _entry_problem(entry: dict, default_path: str | None, base_dir: Path) -> Problem:
    path = entry.get("problem", default_path)
    if path is None:
        raise ValueError(f"study entry {entry.get('label', '?')!r} names no problem file")
    p = Path(path)
    if not p.is_absolute():
        p = base_dir / p
    problem = read_problem(p)
    if "n_cells" in entry:
        problem = dataclasses.replace(problem, n_cells=int(entry["n_cells"]))
    run_over = {
        k: entry[k]
        for k in ("cfl", "t_final", "tolerance", "w_kill")
        if k in entry
    }
    if run_over:
        problem = dataclasses.replace(
            problem, run=dataclasses.replace(problem.run, **run_over)
        )
    return problem


def _entry_solve(entry: dict, problem: Problem, workers: int) -> RunResult:
    return solve(
        problem,
        str(entry["solver"]),
        n_quad=int(entry["n_quad"]) if "n_quad" in entry else None,
        n_particles=int(entry["n_particles"]) if "n_particles" in entry else None,
        seed=int(entry["seed"]) if "seed" in entry else None,
        tol=float(entry["tolerance"]) if "tolerance" in entry else None,
        w_kill=float(entry["w_kill"]) if "w_kill" in entry else None,
        workers=workers,
    )


def cmd_study(args) -> int:
    study_path = Path(args.file)
    out = Path(args.out)
    try:
        with open(study_path, "rb") as f:
            cfg = tomllib.load(f)
        base_dir = study_path.parent
        default_problem = cfg.get("problem")
        ref_entry = cfg["reference"]
        runs = cfg.get("runs", [])

        ref_problem = _entry_problem(ref_entry, default_problem, base_dir)
        logger.info("study: running reference (%s)", ref_entry.get("solver"))
        ref_result = _entry_solve(ref_entry, ref_problem, args.workers)
        _write_run_artifacts(out / "reference", ref_result, ref_problem)
    except Exception as exc:
        print(f"error: study reference failed: {exc}", file=sys.stderr)
        return 1

    failures = 0
    rows = []
    for i, entry in enumerate(runs):
        label = str(entry.get("label", f"run{i}"))
        row = {
            "label": label,
            "solver": entry.get("solver", ""),
            "n_cells": "",
            "n_quad": entry.get("n_quad", ""),
            "n_particles": entry.get("n_particles", ""),
            "seed": entry.get("seed", ""),
            "delta": "",
            "complexity": "",
            "status": "error",
            "message": "",
        }
        try:
            problem = _entry_problem(entry, default_problem, base_dir)
            row["n_cells"] = problem.n_cells
            result = _entry_solve(entry, problem, args.workers)
            ref_on_run = transfer_to_grid(ref_result.phi, ref_result.mesh, result.mesh)
            delta = relative_l2(result.phi, ref_on_run)
            run_dir = out / label
            run_dir.mkdir(parents=True, exist_ok=True)
            write_grid(run_dir / "flux.csv", result.phi, result.mesh)
            write_report(run_dir / "report.json", build_report(result, problem, delta))
            row.update(
                n_quad=result.n_quad,
                n_particles=result.n_particles,
                seed=result.seed,
                delta=_FMT % delta,
                complexity=result.complexity,
                status="ok",
            )
            logger.info("study %s: delta=%.6g complexity=%d", label, delta, result.complexity)
        except Exception as exc:
            failures += 1
            row["message"] = str(exc)
            logger.warning("study %s failed: %s", label, exc)
        rows.append(row)

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "study.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()) if rows else [
            "label", "solver", "n_cells", "n_quad", "n_particles", "seed",
            "delta", "complexity", "status", "message",
        ])
        writer.writeheader()
        writer.writerows(rows)
    print(f"study: {len(rows) - failures}/{len(rows)} runs ok, table in {out / 'study.csv'}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snmc",
        description="Hybrid Monte Carlo / discrete-ordinates transport on 2-D grids",
    )
    parser.add_argument("--verbose", action="store_true", help="log per-step progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one solver on a problem file")
    run.add_argument("--problem", required=True, help="problem TOML file")
    run.add_argument("--solver", required=True, choices=("mc", "sn", "hybrid"))
    run.add_argument("--n", type=int, default=None, help="quadrature level N (N^2 ordinates)")
    run.add_argument("--np", type=int, default=None, help="particles per source application")
    run.add_argument("--seed", type=int, default=None, help="random seed")
    run.add_argument("--tol", type=float, default=None, help="source-iteration tolerance")
    run.add_argument("--w-kill", type=float, default=None, help="roulette threshold weight")
    run.add_argument("--ref", default=None, help="reference flux.csv for the error report")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--workers", type=int, default=1, help="threads for particle advance")
    run.set_defaults(func=cmd_run)

    study = sub.add_parser("study", help="run a reference plus a matrix of runs")
    study.add_argument("--file", required=True, help="study TOML file")
    study.add_argument("--out", required=True, help="output directory")
    study.add_argument("--workers", type=int, default=1)
    study.set_defaults(func=cmd_study)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
