"""Scattering-free Monte Carlo transport with implicit capture.

Particles carry a continuous weight that decays exponentially along the
flight path instead of sampling absorption events; per-cell track-length
tallies estimate the time-step-averaged scalar flux.  Russian roulette trims
vanishing weights.  All sampling draws come from counter-based generators
keyed by (seed, purpose, step) with a frozen draw order, so runs are
bit-reproducible for any worker count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

# RNG stream purposes
STREAM_IC = 0
STREAM_VOLUME = 1
STREAM_BOUNDARY = 2
STREAM_ROULETTE = 3
STREAM_RELABEL = 4
STREAM_RELABEL_ROULETTE = 5

_TIE = 1.0 + 1e-12  # corner-grazing tie guard, matches mesh.trace_ray
_CHUNK = 1 << 21  # particles per advance chunk (fixed: chunk partition must not depend on workers)

_FIELDS = ("x", "y", "om_x", "om_y", "weight", "tau")


def stream(seed: int, purpose: int, step: int) -> np.random.Generator:
    """Independent counter-based generator for one (seed, purpose, step) triple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, purpose, step))))


@dataclass(frozen=True)
class MCParams:
    """Per-step Monte Carlo controls."""

    n_particles: int
    w_kill: float = 1e-15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_particles < 0:
            raise ValueError("n_particles must be >= 0")
        if not self.w_kill > 0.0:
            raise ValueError("w_kill must be positive")


@dataclass
class ParticleBank:
    """Columnar particle storage: positions, planar direction, weight, residual time.

    Directions are unit 3-vectors with Omega_z >= 0 (z-symmetric transport);
    only (Omega_x, Omega_y) are stored and Omega_z is recomputed on demand.
    """

    x: np.ndarray
    y: np.ndarray
    om_x: np.ndarray
    om_y: np.ndarray
    weight: np.ndarray
    tau: np.ndarray

    def __post_init__(self) -> None:
        for name in _FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            setattr(self, name, arr)
        sizes = {getattr(self, name).size for name in _FIELDS}
        if len(sizes) != 1:
            raise ValueError("particle bank fields must have equal lengths")

    @classmethod
    def empty(cls) -> "ParticleBank":
        z = np.zeros(0)
        return cls(z, z.copy(), z.copy(), z.copy(), z.copy(), z.copy())

    @classmethod
    def concatenated(cls, banks: list["ParticleBank"]) -> "ParticleBank":
        banks = [b for b in banks if b.size]
        if not banks:
            return cls.empty()
        if len(banks) == 1:
            return banks[0]
        return cls(*(np.concatenate([getattr(b, f) for b in banks]) for f in _FIELDS))

    @property
    def size(self) -> int:
        return self.x.size

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @property
    def omega_z(self) -> np.ndarray:
        return np.sqrt(np.maximum(0.0, 1.0 - self.om_x**2 - self.om_y**2))

    def select(self, mask: np.ndarray) -> "ParticleBank":
        return ParticleBank(*(getattr(self, f)[mask] for f in _FIELDS))


def write_bank(path, bank: ParticleBank) -> None:
    """Debug/checkpoint dump, one particle per line: x y om_x om_y om_z weight tau."""
    cols = np.column_stack(
        [bank.x, bank.y, bank.om_x, bank.om_y, bank.omega_z, bank.weight, bank.tau]
    )
    np.savetxt(path, cols, fmt="%.17g", header="x y om_x om_y om_z weight tau")


def read_bank(path) -> ParticleBank:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty files are legal
        cols = np.loadtxt(path, ndmin=2)
    if cols.size == 0:
        return ParticleBank.empty()
    return ParticleBank(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], cols[:, 5], cols[:, 6])


# ---------------------------------------------------------------------------
# source sampling


def _isotropic_planar(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Planar components of isotropic unit directions (z-component folded to >= 0).

    Draw order: polar cosine, then azimuth.
    """
    mu = rng.uniform(-1.0, 1.0, n)  # Omega_z before folding; sign is irrelevant in-plane
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    s = np.sqrt(1.0 - mu * mu)
    return s * np.cos(phi), s * np.sin(phi)


def sample_volume_source(
    mesh: Mesh,
    rate_grid: np.ndarray,
    dt: float,
    n_request: int,
    rng: np.random.Generator,
    weight_convention: str = "conserve",
) -> ParticleBank:
    """Sample an isotropic volume source of per-cell angle-integrated rate density.

    Cell (i, j) emits total weight W_C = rate*h^2*dt and floor(W_C*n_request/W)
    particles; every particle carries the same global weight.  Positions are
    uniform in the cell, directions isotropic, birth residual times uniform in
    [0, dt).

    weight_convention picks that global weight: "conserve" (default) uses
    W / (total count) so the emitted weight sums to W exactly; "requested"
    uses W / n_request, which underestimates the emission by the weight the
    per-cell floors dropped and is offered only for comparison studies.

    Draw order per call: x offset, y offset, polar cosine, azimuth, residual.
    """
    if weight_convention not in ("conserve", "requested"):
        raise ValueError("weight_convention must be 'conserve' or 'requested'")
    if rate_grid.shape != (mesh.n_cells, mesh.n_cells):
        raise ValueError("rate grid shape does not match the mesh")
    w_cell = rate_grid.astype(np.float64).ravel() * (mesh.cell_area * dt)
    if np.any(w_cell < 0.0):
        raise ValueError("source rates must be non-negative")
    w_total = float(w_cell.sum())
    if w_total <= 0.0 or n_request <= 0:
        return ParticleBank.empty()
    counts = np.floor(w_cell * (n_request / w_total)).astype(np.int64)
    m = int(counts.sum())
    if m == 0:
        # every per-cell floor collapsed; nothing to emit this step
        return ParticleBank.empty()
    w = w_total / m if weight_convention == "conserve" else w_total / n_request
    cells = np.repeat(np.arange(counts.size), counts)
    ix = cells // mesh.n_cells
    iy = cells % mesh.n_cells
    h = mesh.h
    x = mesh.x_min + (ix + rng.random(m)) * h
    y = mesh.y_min + (iy + rng.random(m)) * h
    om_x, om_y = _isotropic_planar(m, rng)
    tau = dt * rng.random(m)
    return ParticleBank(x, y, om_x, om_y, np.full(m, w), tau)


def sample_left_boundary_source(
    mesh: Mesh,
    flux_value: float,
    dt: float,
    n_request: int,
    rng: np.random.Generator,
) -> ParticleBank:
    """Sample the isotropic-influx law on the x = x_min face.

    The inward cosine follows the flux-weighted law Omega_x = sqrt(xi)
    (CDF Omega_x^2); the remaining direction component is uniform in angle
    with Omega_z >= 0.  Total emitted weight is flux_value*face_length*pi*dt.

    Draw order per call: y position, inward cosine, transverse angle, residual.
    """
    if flux_value < 0.0:
        raise ValueError("influx value must be non-negative")
    if flux_value == 0.0 or n_request <= 0:
        return ParticleBank.empty()
    n = n_request
    w = flux_value * mesh.extent * np.pi * dt / n
    y = mesh.y_min + mesh.extent * rng.random(n)
    om_x = np.sqrt(rng.random(n))
    theta = np.pi * rng.random(n)  # angle of (Omega_y, Omega_z) in the upper half-plane
    om_y = np.sqrt(1.0 - om_x * om_x) * np.cos(theta)
    tau = dt * rng.random(n)
    x = np.full(n, mesh.x_min)
    return ParticleBank(x, y, om_x, om_y, np.full(n, w), tau)


# ---------------------------------------------------------------------------
# free flight with implicit capture


def _advance_chunk(x, y, ox, oy, w, tau, mesh: Mesh, lam_flat, tally_flat):
    """Move one chunk of particles through the grid, mutating arrays in place.

    Every particle flies tau along (om_x, om_y) (the ray parameter is time;
    the in-plane speed is |(om_x, om_y)| <= 1).  Per in-cell segment of
    length ell the tally gains w*(1 - exp(-lam*ell))/lam (w*ell when lam = 0)
    and the weight decays by exp(-lam*ell).  Returns the in-domain mask.
    """
    n = mesh.n_cells
    h = mesh.h
    size = x.shape[0]
    alive = np.ones(size, dtype=bool)
    ix, iy = mesh.cell_index_arrays(x, y)
    rem = tau.copy()
    step_x = np.where(ox > 0.0, 1, -1)
    step_y = np.where(oy > 0.0, 1, -1)
    act = np.nonzero(rem > 0.0)[0]
    while act.size:
        xs = x[act]
        ys = y[act]
        oxs = ox[act]
        oys = oy[act]
        ixs = ix[act]
        iys = iy[act]
        rs = rem[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = (mesh.x_min + (ixs + (oxs > 0.0)) * h - xs) / oxs
            ty = (mesh.y_min + (iys + (oys > 0.0)) * h - ys) / oys
        tx = np.where(oxs != 0.0, np.maximum(tx, 0.0), np.inf)
        ty = np.where(oys != 0.0, np.maximum(ty, 0.0), np.inf)
        t_face = np.minimum(tx, ty)
        done = rs <= t_face
        ell = np.where(done, rs, t_face)
        cell = ixs * n + iys
        lam = lam_flat[cell]
        lam_ell = lam * ell
        ws = w[act]
        decay = -np.expm1(-lam_ell)  # 1 - exp(-lam*ell), accurate for small arguments
        contrib = ws * np.where(lam > 0.0, decay / np.where(lam > 0.0, lam, 1.0), ell)
        tally_flat += np.bincount(cell, weights=contrib, minlength=tally_flat.size)
        x[act] = xs + ell * oxs
        y[act] = ys + ell * oys
        w[act] = ws * np.exp(-lam_ell)
        rem[act] = rs - ell
        cross = ~done
        cross_x = cross & (tx <= ty * _TIE)
        cross_y = cross & (ty <= tx * _TIE)
        ixs = ixs + np.where(cross_x, step_x[act], 0)
        iys = iys + np.where(cross_y, step_y[act], 0)
        ix[act] = ixs
        iy[act] = iys
        exited = (ixs < 0) | (ixs >= n) | (iys < 0) | (iys >= n)
        alive[act[exited]] = False
        act = act[cross & ~exited]
    return alive


def advance_and_tally(
    bank: ParticleBank,
    mesh: Mesh,
    lam_field: np.ndarray,
    dt: float,
    tally: np.ndarray,
    workers: int = 1,
) -> tuple[ParticleBank, int]:
    """Fly every particle for its residual time, accumulating raw track tallies.

    `tally` is the (n, n) raw accumulator, updated in place (divide by
    cell_area*dt at step end to get the time-step-averaged scalar flux).
    Particles leaving the domain are dropped; survivors come back with
    tau reset to dt.  Returns (survivor bank, moved count).  The input bank's
    arrays are consumed (mutated); use the returned bank afterwards.

    Results are bit-identical for any `workers`: the chunk partition is fixed
    and per-chunk tallies merge in chunk order.
    """
    moved = bank.size
    if moved == 0:
        return bank, 0
    if lam_field.shape != (mesh.n_cells, mesh.n_cells):
        raise ValueError("attenuation grid shape does not match the mesh")
    lam_flat = np.ascontiguousarray(lam_field, dtype=np.float64).ravel()
    bounds = list(range(0, moved, _CHUNK)) + [moved]
    n_chunks = len(bounds) - 1

    def run(c: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = bounds[c], bounds[c + 1]
        local = np.zeros(tally.size)
        ok = _advance_chunk(
            bank.x[lo:hi], bank.y[lo:hi], bank.om_x[lo:hi], bank.om_y[lo:hi],
            bank.weight[lo:hi], bank.tau[lo:hi], mesh, lam_flat, local,
        )
        return ok, local

    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_chunks)))
    else:
        results = [run(c) for c in range(n_chunks)]

    flat = tally.ravel()
    for ok, local in results:
        flat += local
    alive = np.concatenate([ok for ok, _ in results]) if n_chunks > 1 else results[0][0]
    if alive.all():
        bank.tau.fill(dt)
        return bank, moved
    out = bank.select(alive)
    out.tau.fill(dt)
    return out, moved


def finalize_tally(raw: np.ndarray, mesh: Mesh, dt: float) -> np.ndarray:
    """Raw track tally -> time-step-averaged, cell-averaged scalar flux."""
    return raw / (mesh.cell_area * dt)


# ---------------------------------------------------------------------------
# population control


def roulette_banks(
    banks: list[ParticleBank], w_kill: float, rng: np.random.Generator
) -> tuple[list[ParticleBank], int]:
    """Russian roulette across a sequence of banks with one shared stream.

    Particles with weight >= w_kill are untouched.  Each lighter particle
    survives with probability weight/w_kill and is reset to exactly w_kill.
    Draws happen in bank order, one uniform per light particle, so the result
    equals rouletting the concatenation.  Returns (new banks, kill count).
    """
    if not w_kill > 0.0:
        raise ValueError("w_kill must be positive")
    out = []
    killed = 0
    for bank in banks:
        low = bank.weight < w_kill
        n_low = int(np.count_nonzero(low))
        if n_low == 0:
            out.append(bank)
            continue
        r = rng.random(n_low)
        survive_low = r <= bank.weight[low] / w_kill
        weight = bank.weight.copy()
        wl = weight[low]
        wl[survive_low] = w_kill
        weight[low] = wl
        keep = ~low
        keep[np.nonzero(low)[0][survive_low]] = True
        killed += n_low - int(np.count_nonzero(survive_low))
        trimmed = ParticleBank(bank.x, bank.y, bank.om_x, bank.om_y, weight, bank.tau)
        out.append(trimmed if keep.all() else trimmed.select(keep))
    return out, killed


def russian_roulette(
    bank: ParticleBank, w_kill: float, rng: np.random.Generator
) -> tuple[ParticleBank, int]:
    """Roulette a single bank; see roulette_banks."""
    banks, killed = roulette_banks([bank], w_kill, rng)
    return banks[0], killed
