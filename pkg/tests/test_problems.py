"""Problem definitions: constructors, time grids, samplers, TOML round trips."""

import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest

from snmc.mc import stream
from snmc.problems import (
    GaussianPulse,
    LeftInflux,
    MaterialRect,
    Problem,
    RunDefaults,
    SourceRect,
    build_materials,
    build_mesh,
    build_source_grid,
    gaussian_cell_averages,
    hohlraum_problem,
    lattice_problem,
    line_source_problem,
    problem_from_dict,
    problem_to_dict,
    read_problem,
    sample_initial_condition,
    time_steps,
    write_problem,
)

PROBLEM_DIR = Path(__file__).resolve().parent.parent / "problems"


def small_pulse_problem(extent=0.2, variance=0.03, n_cells=4, cfl=0.5) -> Problem:
    return Problem(
        name="tiny",
        x_min=-extent / 2,
        y_min=-extent / 2,
        extent=extent,
        n_cells=n_cells,
        materials=(MaterialRect(-extent / 2, -extent / 2, extent / 2, extent / 2, 1.0, 1.0),),
        initial=GaussianPulse(variance=variance),
        run=RunDefaults(t_final=1.0, cfl=cfl),
    )


class TestConstructors:
    def test_line_source_layout(self):
        p = line_source_problem()
        assert (p.x_min, p.y_min, p.extent, p.n_cells) == (-1.5, -1.5, 3.0, 51)
        assert p.center == (0.0, 0.0)
        assert p.initial == GaussianPulse(variance=0.03)
        assert p.boundary is None and not p.sources
        assert (p.run.t_final, p.run.cfl) == (1.0, 0.5)
        mats = build_materials(p, build_mesh(p))
        assert np.all(mats.sigma_t == 1.0) and np.all(mats.sigma_s == 1.0)

    def test_lattice_layout(self):
        p = lattice_problem(n_cells=7)
        mesh = build_mesh(p)
        mats = build_materials(p, mesh)
        absorber = (mats.sigma_t == 10.0) & (mats.sigma_s == 0.0)
        scatterer = (mats.sigma_t == 1.0) & (mats.sigma_s == 1.0)
        assert absorber.sum() == 11
        assert np.all(absorber | scatterer)
        # no absorber directly above the source cell: an open chimney
        assert scatterer[3, 4] and scatterer[3, 5] and scatterer[3, 6]
        src = build_source_grid(p, mesh)
        assert src[3, 3] == 1.0 and src.sum() == 1.0
        # layout is mirror-symmetric about the vertical centerline
        assert np.array_equal(mats.sigma_t, mats.sigma_t[::-1, :])

    def test_lattice_default_resolution_symmetry(self):
        p = lattice_problem()
        assert p.n_cells == 56 and p.run.t_final == 3.2
        mats = build_materials(p, build_mesh(p))
        assert np.array_equal(mats.sigma_t, mats.sigma_t[::-1, :])
        assert (mats.sigma_t == 10.0).sum() == 11 * 8 * 8

    def test_lattice_rejects_bad_resolution(self):
        with pytest.raises(ValueError):
            lattice_problem(n_cells=50)

    def test_lattice_knobs(self):
        p = lattice_problem(n_cells=7, absorber_sigma_t=7.5, source_rate=2.0)
        mats = build_materials(p, build_mesh(p))
        assert (mats.sigma_t == 7.5).sum() == 11
        assert build_source_grid(p, build_mesh(p))[3, 3] == 2.0

    def test_hohlraum_layout(self):
        p = hohlraum_problem(n_cells=26)  # h = 0.05, one-cell walls
        mesh = build_mesh(p)
        mats = build_materials(p, mesh)
        st = mats.sigma_t
        assert np.all(st[:, 0] == 100.0)  # bottom wall
        assert np.all(st[:, -1] == 100.0)  # top wall
        assert np.all(st[-1, :] == 100.0)  # right wall
        # left wall has a vacuum aperture for y in (0.25, 1.05)
        aperture = st[0, :] == 0.0
        ys = mesh.y_min + (np.arange(26) + 0.5) * mesh.h
        assert np.array_equal(aperture, (ys > 0.25) & (ys < 1.05))
        # central block
        assert st[12, 13] == 100.0 and mats.sigma_s[12, 13] == 95.0
        # open interior between aperture and block
        assert st[4, 13] == 0.0
        assert p.boundary == LeftInflux(1.0)
        assert (p.run.t_final, p.run.cfl) == (2.6, 52.0)

    def test_hohlraum_rejects_misaligned_walls(self):
        with pytest.raises(ValueError):
            hohlraum_problem(n_cells=50)


class TestTimeSteps:
    def test_line_source_grid(self):
        p = line_source_problem()
        dts = time_steps(p)
        dt = 0.5 * (3.0 / 51)
        assert len(dts) == 34
        assert all(d == dt for d in dts[:-1])
        assert dts[-1] == pytest.approx(dt, rel=1e-9)
        assert math.fsum(dts) == pytest.approx(1.0, abs=1e-15)

    def test_partial_final_step(self):
        p = small_pulse_problem(extent=1.0, n_cells=10, cfl=3.0)  # dt = 0.3
        dt = 3.0 * (1.0 / 10)
        dts = time_steps(p)
        assert len(dts) == 4
        assert dts[:3] == [dt, dt, dt]
        assert dts[-1] == pytest.approx(0.1, abs=1e-12)

    def test_single_step_when_dt_exceeds_t_final(self):
        p = dataclasses.replace(
            small_pulse_problem(extent=1.0, n_cells=10, cfl=3.0),
            run=RunDefaults(t_final=0.2, cfl=3.0),
        )
        assert time_steps(p) == [0.2]

    def test_clamp_suppresses_degenerate_extra_step(self):
        # 3*0.1 overshoots 0.3 by one ulp; a naive ceil would add a dust step
        t_final = 0.1 + 0.1 + 0.1
        p = dataclasses.replace(
            small_pulse_problem(extent=1.0, n_cells=10, cfl=1.0),
            run=RunDefaults(t_final=t_final, cfl=1.0),
        )
        dts = time_steps(p)
        assert len(dts) == 3
        assert math.fsum(dts) == pytest.approx(t_final, abs=1e-16)
        assert dts[-1] > 0.09

    def test_zero_cfl_rejected(self):
        p = dataclasses.replace(
            small_pulse_problem(), run=RunDefaults(t_final=1.0, cfl=0.0)
        )
        with pytest.raises(ValueError):
            time_steps(p)


class TestGaussianAverages:
    def test_total_mass(self):
        p = line_source_problem()
        mesh = build_mesh(p)
        g = gaussian_cell_averages(mesh, 0.03, p.center)
        assert g.sum() * mesh.cell_area == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self):
        mesh = build_mesh(line_source_problem())
        g = gaussian_cell_averages(mesh, 0.03, (0.0, 0.0))
        # far-tail cells (~1e-30) lose relative accuracy to erf saturation;
        # an absolute floor far below any physical value covers them
        floor = g.max() * 1e-13
        assert np.allclose(g, g[::-1, :], rtol=1e-9, atol=floor)
        assert np.allclose(g, g.T, rtol=1e-9, atol=floor)

    def test_one_cell_against_quadrature_oracle(self):
        mesh = build_mesh(line_source_problem())
        var = 0.03
        g = gaussian_cell_averages(mesh, var, (0.0, 0.0))
        ix, iy = 27, 24
        xs = np.linspace(mesh.x_min + ix * mesh.h, mesh.x_min + (ix + 1) * mesh.h, 20_001)
        ys = np.linspace(mesh.y_min + iy * mesh.h, mesh.y_min + (iy + 1) * mesh.h, 20_001)

        def pdf(v):
            return np.exp(-v * v / (2 * var)) / math.sqrt(2 * math.pi * var)

        mx = np.trapezoid(pdf(xs), xs)
        my = np.trapezoid(pdf(ys), ys)
        assert g[ix, iy] == pytest.approx(mx * my / mesh.cell_area, rel=1e-8)


class TestInitialConditionSampler:
    def test_requires_initial(self):
        with pytest.raises(ValueError):
            sample_initial_condition(lattice_problem(n_cells=7), 10, stream(0, 0, 0))

    def test_zero_particles(self):
        assert sample_initial_condition(line_source_problem(), 0, stream(0, 0, 0)).size == 0

    def test_unit_weight_zero_residual(self):
        bank = sample_initial_condition(line_source_problem(), 1000, stream(0, 0, 0))
        assert bank.size == 1000
        assert np.all(bank.weight == 1.0 / 1000)
        assert np.all(bank.tau == 0.0)
        norm = bank.om_x**2 + bank.om_y**2 + bank.omega_z**2
        assert np.max(np.abs(norm - 1.0)) < 1e-12

    def test_redraws_keep_positions_inside(self):
        # domain much narrower than the pulse: redraw path is exercised hard
        p = small_pulse_problem(extent=0.2, variance=0.03)
        bank = sample_initial_condition(p, 5000, stream(1, 0, 0))
        assert bank.size == 5000
        assert np.all((bank.x >= -0.1) & (bank.x <= 0.1))
        assert np.all((bank.y >= -0.1) & (bank.y <= 0.1))

    def test_position_statistics(self):
        n = 100_000
        bank = sample_initial_condition(line_source_problem(), n, stream(2, 0, 0))
        se = math.sqrt(0.03 / n)
        assert abs(bank.x.mean()) < 3 * se
        assert abs(bank.y.mean()) < 3 * se
        assert bank.x.var() == pytest.approx(0.03, rel=0.05)
        # folded z-cosine uniform on [0, 1]
        assert abs(bank.omega_z.mean() - 0.5) < 3 * (1 / math.sqrt(12 * n))

    def test_deterministic(self):
        a = sample_initial_condition(line_source_problem(), 500, stream(3, 0, 0))
        b = sample_initial_condition(line_source_problem(), 500, stream(3, 0, 0))
        assert np.array_equal(a.x, b.x) and np.array_equal(a.om_y, b.om_y)


class TestProblemFiles:
    @pytest.mark.parametrize(
        "make", [line_source_problem, lattice_problem, hohlraum_problem]
    )
    def test_roundtrip_equality(self, make, tmp_path):
        p = make()
        path = tmp_path / "p.toml"
        write_problem(path, p)
        assert read_problem(path) == p

    def test_dict_roundtrip(self):
        p = hohlraum_problem()
        assert problem_from_dict(problem_to_dict(p)) == p

    def test_run_defaults_filled(self):
        d = problem_to_dict(line_source_problem())
        for key in ("n_quad", "n_particles", "tolerance", "w_kill", "seed"):
            del d["run"][key]
        p = problem_from_dict(d)
        assert p.run == RunDefaults(t_final=1.0, cfl=0.5)

    def test_unknown_kinds_rejected(self):
        d = problem_to_dict(line_source_problem())
        d["initial"] = {"kind": "ring", "variance": 1.0}
        with pytest.raises(ValueError):
            problem_from_dict(d)
        d = problem_to_dict(hohlraum_problem())
        d["boundary"] = {"kind": "top_influx", "value": 1.0}
        with pytest.raises(ValueError):
            problem_from_dict(d)

    @pytest.mark.parametrize(
        "fname,make",
        [
            ("line_source.toml", line_source_problem),
            ("lattice.toml", lattice_problem),
            ("hohlraum.toml", hohlraum_problem),
        ],
    )
    def test_shipped_files_match_constructors(self, fname, make):
        assert read_problem(PROBLEM_DIR / fname) == make()

    def test_painting_order_later_wins(self):
        p = Problem(
            name="override",
            x_min=0.0,
            y_min=0.0,
            extent=1.0,
            n_cells=2,
            materials=(
                MaterialRect(0.0, 0.0, 1.0, 1.0, 1.0, 0.5),
                MaterialRect(0.5, 0.5, 1.0, 1.0, 9.0, 0.0),
            ),
            sources=(SourceRect(0.0, 0.0, 1.0, 1.0, 2.0), SourceRect(0.0, 0.0, 0.5, 0.5, 4.0)),
        )
        mesh = build_mesh(p)
        mats = build_materials(p, mesh)
        assert mats.sigma_t[1, 1] == 9.0 and mats.sigma_s[1, 1] == 0.0
        assert mats.sigma_t[0, 0] == 1.0
        src = build_source_grid(p, mesh)
        assert src[0, 0] == 4.0 and src[1, 0] == 2.0
