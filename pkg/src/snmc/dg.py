"""Discrete-ordinates transport on bilinear discontinuous Galerkin cells.

Per quadrature direction the steady-form equation

    Omega . grad u + lam_t u = lam_s * (angular mean of u) + s

is discretized with a tensor-Legendre Q1 basis per cell and upwind face
fluxes, and solved by source iteration over transport sweeps.  Backward-Euler
time stepping reduces to this form after shifting lam_t by 1/dt and folding
the previous field into the source.

All element integrals have closed forms (products of degree-0/1 Legendre
polynomials); no numerical quadrature is used in assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, MaterialField
from .quadrature import AXIS_TOL, FOUR_PI, QuadratureSet

# Basis functions are P_a((x-xc)/(h/2)) * P_b((y-yc)/(h/2)) with per-axis
# degrees (a, b) in this fixed order; coefficient 0 is the cell average.
BASIS_DEGREES = ((0, 0), (1, 0), (0, 1), (1, 1))
_DEG = np.array(BASIS_DEGREES)

# diag of the cell mass matrix, divided by h^2
MASS_DIAG = np.array([1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 9.0])


class ConvergenceError(RuntimeError):
    """Source iteration failed to reach tolerance within the iteration cap."""

    def __init__(self, err: float, iterations: int):
        super().__init__(
            f"source iteration did not converge: err={err:.3e} after {iterations} iterations"
        )
        self.err = err
        self.iterations = iterations


def mass_matrix(h: float) -> np.ndarray:
    return (h * h) * np.diag(MASS_DIAG)


def gradient_matrices(h: float) -> np.ndarray:
    """g[axis][l, k] = integral over the cell of phi_k * d(phi_l)/d(axis)."""
    gx = np.zeros((4, 4))
    gx[1, 0] = 2.0 * h
    gx[3, 2] = 2.0 * h / 3.0
    gy = np.zeros((4, 4))
    gy[2, 0] = 2.0 * h
    gy[3, 1] = 2.0 * h / 3.0
    return np.stack([gx, gy])


def _face_blocks(h: float, axis: int, positive: bool) -> tuple[np.ndarray, np.ndarray]:
    """Unit-coefficient face blocks for travel along +-axis.

    Returns (p, m): p couples the cell to itself through its outflow face,
    m couples the upstream neighbor's outflow trace to this cell's inflow
    face.  Both must be scaled by |Omega_axis|; m is added on the right-hand
    side.
    """
    out_t = 1.0 if positive else -1.0  # outflow face coordinate, this cell
    in_t = -out_t  # inflow face coordinate, this cell
    up_t = out_t  # upstream neighbor's trace is taken at its own outflow face
    trans = 1 - axis
    p = np.zeros((4, 4))
    m = np.zeros((4, 4))
    for l in range(4):
        for k in range(4):
            if _DEG[l, trans] != _DEG[k, trans]:
                continue
            edge = h / (2 * _DEG[k, trans] + 1)
            p[l, k] = (out_t ** _DEG[k, axis]) * (out_t ** _DEG[l, axis]) * edge
            m[l, k] = (up_t ** _DEG[k, axis]) * (in_t ** _DEG[l, axis]) * edge
    return p, m


@dataclass(frozen=True)
class CellMatrices:
    """Per-ordinate 4x4 blocks of the upwind DG cell equations.

    The cell solve is (a + p) alpha = s + r @ abar + mx @ alpha_upstream_x
    + my @ alpha_upstream_y, with boundary ghosts standing in for upstream
    coefficients on inflow domain faces.
    """

    a: np.ndarray  # lam_t * mass - Omega_x*Gx - Omega_y*Gy (volume terms)
    p: np.ndarray  # outflow face terms, |Omega.n|-weighted
    mx: np.ndarray  # inflow coupling through the x face, scaled by |Omega_x|
    my: np.ndarray  # inflow coupling through the y face, scaled by |Omega_y|
    r: np.ndarray  # lam_s * mass (applies to the angular-average coefficients)

    @property
    def left(self) -> np.ndarray:
        return self.a + self.p


def cell_matrices(
    h: float, omega: np.ndarray, lam_t: float, lam_s: float = 0.0
) -> CellMatrices:
    """Assemble the exact closed-form blocks for one ordinate and one cell."""
    om_x, om_y = float(omega[0]), float(omega[1])
    gx, gy = gradient_matrices(h)
    px, mx = _face_blocks(h, 0, om_x > 0.0)
    py, my = _face_blocks(h, 1, om_y > 0.0)
    a = lam_t * mass_matrix(h) - om_x * gx - om_y * gy
    p = abs(om_x) * px + abs(om_y) * py
    return CellMatrices(
        a=a, p=p, mx=abs(om_x) * mx, my=abs(om_y) * my, r=lam_s * mass_matrix(h)
    )


def build_sweep_order(mesh: Mesh, omega: np.ndarray) -> list[tuple[int, int]]:
    """Cell ordering for one ordinate's sweep: x fastest, marching with (sign Omega_x, sign Omega_y).

    Every upstream neighbor of a cell appears earlier (or lies outside).
    """
    if abs(omega[0]) < AXIS_TOL or abs(omega[1]) < AXIS_TOL:
        raise ValueError(f"axis-aligned ordinate {omega[:2]} cannot be swept")
    n = mesh.n_cells
    xs = range(n) if omega[0] > 0 else range(n - 1, -1, -1)
    ys = range(n) if omega[1] > 0 else range(n - 1, -1, -1)
    return [(ix, iy) for iy in ys for ix in xs]


@dataclass
class BoundaryTraces:
    """Ghost-cell DG coefficients prescribing inflow on each domain side.

    Arrays are (n_ordinates, n_cells, 4): ghost coefficients for the cell
    beyond each boundary face, read only on sides that are inflow for the
    ordinate being swept.  The index runs along the face (iy for left/right,
    ix for bottom/top).
    """

    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray

    @classmethod
    def vacuum(cls, n_ordinates: int, n_cells: int) -> "BoundaryTraces":
        z = np.zeros((n_ordinates, n_cells, 4))
        return cls(z, z.copy(), z.copy(), z.copy())

    @classmethod
    def constant_left_influx(
        cls, n_ordinates: int, n_cells: int, value: float
    ) -> "BoundaryTraces":
        """Isotropic-in-angle inflow of the given value on the left face."""
        bt = cls.vacuum(n_ordinates, n_cells)
        bt.left[:, :, 0] = value
        return bt


class SnSweepSolver:
    """Vectorized transport sweeps for a fixed (mesh, quadrature, lam_t field).

    Ordinates are grouped by travel quadrant and swept over anti-diagonal
    wavefronts (all cells on a wavefront have their upstream neighbors on
    earlier wavefronts, so the update order is equivalent to the lexicographic
    sweep order).  The 4x4 left-hand blocks are inverted once per
    (ordinate, distinct lam_t value) pair.

    `visits` counts cell visits x 4 coefficients across all sweeps performed.
    """

    def __init__(self, mesh: Mesh, quad: QuadratureSet, lam_t: np.ndarray):
        if quad.omega.shape[0] == 0:
            raise ValueError("empty quadrature")
        planar = np.abs(quad.omega[:, :2])
        if np.any(planar < AXIS_TOL):
            raise ValueError("quadrature contains an axis-aligned ordinate")
        lam_t = np.asarray(lam_t, dtype=np.float64)
        if lam_t.shape != (mesh.n_cells, mesh.n_cells):
            raise ValueError("lam_t grid shape does not match the mesh")
        self.mesh = mesh
        self.quad = quad
        self.visits = 0
        n = mesh.n_cells
        h = mesh.h
        n_ord = quad.n_ordinates

        uniq, cls = np.unique(lam_t, return_inverse=True)
        self._cls = cls.reshape(n, n).astype(np.int64)
        n_cls = uniq.size

        # per-ordinate blocks and per-(ordinate, lam_t class) inverses
        self._inv = np.empty((n_ord, n_cls, 4, 4))
        mx_all = np.empty((n_ord, 4, 4))
        my_all = np.empty((n_ord, 4, 4))
        for q in range(n_ord):
            cm0 = cell_matrices(h, quad.omega[q], 0.0)
            mx_all[q] = cm0.mx
            my_all[q] = cm0.my
            stream = cm0.left
            for c in range(n_cls):
                self._inv[q, c] = np.linalg.inv(stream + uniq[c] * mass_matrix(h))

        # quadrant grouping and wavefront schedules
        sx = np.where(quad.omega[:, 0] > 0, 1, -1)
        sy = np.where(quad.omega[:, 1] > 0, 1, -1)
        self._groups = []
        for gsx, gsy in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
            q_idx = np.nonzero((sx == gsx) & (sy == gsy))[0]
            if q_idx.size == 0:
                continue
            sched = []
            for d in range(2 * n - 1):
                ixp = np.arange(max(0, d - n + 1), min(d, n - 1) + 1)
                iyp = d - ixp
                ix = ixp if gsx > 0 else n - 1 - ixp
                iy = iyp if gsy > 0 else n - 1 - iyp
                ixu = np.clip(ix - gsx, 0, n - 1)
                iyu = np.clip(iy - gsy, 0, n - 1)
                bx = np.nonzero(ixp == 0)[0]  # lanes whose x upstream is the boundary
                by = np.nonzero(iyp == 0)[0]
                sched.append((ix, iy, ixu, iyu, bx, by))
            self._groups.append(
                {
                    "q": q_idx,
                    "sx": gsx,
                    "sy": gsy,
                    "mx": mx_all[q_idx],
                    "my": my_all[q_idx],
                    "sched": sched,
                }
            )

    def new_field(self) -> np.ndarray:
        n = self.mesh.n_cells
        return np.zeros((self.quad.n_ordinates, n, n, 4))

    def sweep(
        self,
        alpha: np.ndarray,
        iso_load: np.ndarray | None,
        aniso_load: np.ndarray | None,
        boundary: BoundaryTraces | None,
    ) -> None:
        """One full sweep of all ordinates, updating alpha in place.

        iso_load: (n, n, 4) load shared by all ordinates; aniso_load:
        (n_ordinates, n, n, 4) per-ordinate load.  Either may be None.
        """
        for grp in self._groups:
            qg = grp["q"]
            nq = qg.size
            qcol = qg[:, None]
            ghost_x = ghost_y = None
            if boundary is not None:
                ghost_x = boundary.left if grp["sx"] > 0 else boundary.right
                ghost_y = boundary.bottom if grp["sy"] > 0 else boundary.top
            for ix, iy, ixu, iyu, bx, by in grp["sched"]:
                m = ix.size
                rhs = np.zeros((nq, m, 4))
                if iso_load is not None:
                    rhs += iso_load[ix, iy]
                if aniso_load is not None:
                    rhs += aniso_load[qcol, ix[None, :], iy[None, :]]
                up = alpha[qcol, ixu[None, :], iy[None, :]]
                if bx.size:
                    if ghost_x is None:
                        up[:, bx] = 0.0
                    else:
                        up[:, bx] = ghost_x[qcol, iy[bx][None, :]]
                rhs += np.einsum("qab,qmb->qma", grp["mx"], up)
                up = alpha[qcol, ix[None, :], iyu[None, :]]
                if by.size:
                    if ghost_y is None:
                        up[:, by] = 0.0
                    else:
                        up[:, by] = ghost_y[qcol, ix[by][None, :]]
                rhs += np.einsum("qab,qmb->qma", grp["my"], up)
                inv = self._inv[qcol, self._cls[ix, iy][None, :]]
                alpha[qcol, ix[None, :], iy[None, :]] = np.einsum(
                    "qmab,qmb->qma", inv, rhs
                )
                self.visits += 4 * nq * m


def source_iteration(
    sweeper: SnSweepSolver,
    lam_s: np.ndarray,
    iso_load: np.ndarray | None = None,
    aniso_load: np.ndarray | None = None,
    boundary: BoundaryTraces | None = None,
    tol: float = 1e-4,
    initial: np.ndarray | None = None,
    max_iters: int = 10_000,
) -> tuple[np.ndarray, int]:
    """Sweep with lagged isotropic scattering until the sup-norm update <= tol.

    Returns (field, iteration count).  Raises ConvergenceError at the cap.
    """
    h = sweeper.mesh.h
    scat_scale = (h * h) * MASS_DIAG  # mass matrix applied to average coefficients
    alpha = sweeper.new_field() if initial is None else initial.copy()
    beta = np.empty_like(alpha)
    for it in range(1, max_iters + 1):
        np.copyto(beta, alpha)
        abar = np.tensordot(sweeper.quad.weight, alpha, axes=(0, 0)) / FOUR_PI
        scat = (lam_s[:, :, None] * scat_scale) * abar
        total_iso = scat if iso_load is None else iso_load + scat
        sweeper.sweep(alpha, total_iso, aniso_load, boundary)
        err = float(np.max(np.abs(alpha - beta)))
        if err <= tol:
            return alpha, it
    raise ConvergenceError(err, max_iters)


class TimesteppedSn:
    """Backward-Euler stepper with lam_t + 1/dt baked into precomputed blocks."""

    def __init__(
        self, mesh: Mesh, quad: QuadratureSet, materials: MaterialField, dt: float
    ):
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.mesh = mesh
        self.quad = quad
        self.dt = dt
        self.lam_s = materials.sigma_s
        self.sweeper = SnSweepSolver(mesh, quad, materials.sigma_t + 1.0 / dt)

    @property
    def visits(self) -> int:
        return self.sweeper.visits

    def step(
        self,
        alpha_n: np.ndarray | None,
        iso_load: np.ndarray | None = None,
        boundary: BoundaryTraces | None = None,
        tol: float = 1e-4,
        max_iters: int = 10_000,
    ) -> tuple[np.ndarray, int]:
        """Advance one step: the previous field enters the source as mass*alpha_n/dt."""
        aniso = None
        if alpha_n is not None:
            h = self.mesh.h
            aniso = alpha_n * ((h * h) * MASS_DIAG / self.dt)
        return source_iteration(
            self.sweeper,
            self.lam_s,
            iso_load=iso_load,
            aniso_load=aniso,
            boundary=boundary,
            tol=tol,
            initial=alpha_n,
            max_iters=max_iters,
        )


def implicit_step(
    alpha_n: np.ndarray | None,
    mesh: Mesh,
    materials: MaterialField,
    quad: QuadratureSet,
    iso_load: np.ndarray | None,
    boundary: BoundaryTraces | None,
    dt: float,
    tol: float = 1e-4,
    max_iters: int = 10_000,
) -> tuple[np.ndarray, int]:
    """One backward-Euler step (convenience wrapper building the stepper afresh)."""
    stepper = TimesteppedSn(mesh, quad, materials, dt)
    return stepper.step(alpha_n, iso_load, boundary, tol=tol, max_iters=max_iters)


def isotropic_load(value_grid: np.ndarray, h: float) -> np.ndarray:
    """DG load (n, n, 4) for a per-cell-constant isotropic source density."""
    n = value_grid.shape[0]
    load = np.zeros((n, n, 4))
    load[:, :, 0] = value_grid * (h * h)
    return load


def scalar_flux_dg(alpha: np.ndarray, quad: QuadratureSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell scalar flux (full-sphere angular integral) and mean coefficients.

    Returns (phi, abar): phi[i,j] = sum_q w_q alpha[q,i,j,0] and
    abar = (1/4pi) sum_q w_q alpha[q].
    """
    abar = np.tensordot(quad.weight, alpha, axes=(0, 0)) / FOUR_PI
    phi = FOUR_PI * abar[:, :, 0]
    return phi, abar
