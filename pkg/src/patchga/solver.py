"""Leapfrog FDTD update on the Yee grid with UPML absorbing boundaries.

Update convention (documented, fixed): each full step advances the magnetic
half-step first (B then H from the current E), then the electric half-step
(D then E from the new H), injects the soft source into the updated E at
the timestamp of that E, re-zeroes tangential E on PEC faces, and
increments the step counter. Field state after n completed steps carries
E at t = n*dt. The alternate electric-first ordering is available via
``update_order="e_first"``; started from zero fields it produces the same
E sequence (the magnetic bookkeeping is merely relabeled by half a step),
which the test suite uses as a convention self-consistency check.

The UPML follows the anisotropic-medium formulation with auxiliary flux
fields: along each axis the stretching conductivity enters the flux update
on the first transverse axis, damps the flux-to-field recovery on the
second, and applies to the component's own axis through the flux
difference term. Conductivity profiles are stored normalized by EPS0, so
the same arrays serve the electric and magnetic families.

The update loops are compiled with numba (single-threaded, strict IEEE),
so identical inputs give bit-identical traces regardless of how many
worker processes run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from patchga.constants import MU0
from patchga.errors import DivergenceError, ValidationError
from patchga.mesh import Port, SimulationGrid

DIVERGENCE_CHECK_INTERVAL = 100


@dataclass(frozen=True)
class Injection:
    """Soft-source cell set: vertical E over [ix_lo, ix_hi) x {iy} x [kz_lo, kz_hi)."""

    ix_lo: int
    ix_hi: int
    iy: int
    kz_lo: int
    kz_hi: int


@dataclass(frozen=True)
class SourceSpec:
    """Gaussian-enveloped cosine drive and the run window."""

    e0: float = 22.0
    t0: float = 5.02e-9
    fc: float = 16.0e9
    fb: float = 2.0e9
    n_steps: int = 8000
    injection: Injection | None = None

    def __post_init__(self):
        for name in ("e0", "t0", "fc", "fb"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.n_steps < 0:
            raise ValidationError(f"n_steps must be >= 0, got {self.n_steps}")

    def with_injection(self, injection: Injection) -> "SourceSpec":
        return replace(self, injection=injection)


@dataclass(frozen=True)
class ProbeSpec:
    """Port-voltage probe: -dz * sum of Ez through the substrate at one (x, y)."""

    probe_id: str
    ix: int
    iy: int
    kz_lo: int
    kz_hi: int


@dataclass
class ProbeTrace:
    """Per-step scalar samples; sample n (0-based) is taken at t = (n+1)*dt."""

    probe_id: str
    samples: np.ndarray
    dt: float

    def __len__(self):
        return len(self.samples)

    def to_csv(self) -> str:
        lines = ["step,time_s,value"]
        for n, v in enumerate(self.samples, start=1):
            lines.append(f"{n},{n * self.dt:.17g},{v:.17g}")
        return "\n".join(lines) + "\n"


def source_value(t: float, spec: SourceSpec) -> float:
    """Gaussian-enveloped cosine: e0*exp(-(2*pi*fb*(t-t0))^2)*cos(2*pi*fc*(t-t0))."""
    u = t - spec.t0
    arg = 2.0 * math.pi * spec.fb * u
    return spec.e0 * math.exp(-(arg * arg)) * math.cos(2.0 * math.pi * spec.fc * u)


def injection_for_port(port: Port) -> Injection:
    """Soft source spanning the feed-strip cross-section at the source plane."""
    return Injection(
        ix_lo=port.feed_ix_lo, ix_hi=port.feed_ix_hi + 1,
        iy=port.source_iy, kz_lo=0, kz_hi=port.nz_sub,
    )


def probe_for_port(port: Port, probe_id: str = "port") -> ProbeSpec:
    """Voltage probe under the strip centerline at the port reference plane."""
    return ProbeSpec(
        probe_id=probe_id, ix=port.probe_ix, iy=port.probe_iy,
        kz_lo=0, kz_hi=port.nz_sub,
    )


def _component_inv_eps(eps, axis):
    """Reciprocal edge-averaged permittivity for the E component along ``axis``.

    Averages the four cells sharing the edge (the two transverse axes),
    clamped at the domain boundary; returned at the full staggered shape.
    """
    nx, ny, nz = eps.shape
    if axis == 0:
        out = np.empty((nx, ny + 1, nz + 1))
        pad = np.pad(eps, ((0, 0), (1, 1), (1, 1)), mode="edge")
        out[:] = 0.25 * (pad[:, :-1, :-1] + pad[:, 1:, :-1] + pad[:, :-1, 1:] + pad[:, 1:, 1:])
    elif axis == 1:
        out = np.empty((nx + 1, ny, nz + 1))
        pad = np.pad(eps, ((1, 1), (0, 0), (1, 1)), mode="edge")
        out[:] = 0.25 * (pad[:-1, :, :-1] + pad[1:, :, :-1] + pad[:-1, :, 1:] + pad[1:, :, 1:])
    else:
        out = np.empty((nx + 1, ny + 1, nz))
        pad = np.pad(eps, ((1, 1), (1, 1), (0, 0)), mode="edge")
        out[:] = 0.25 * (pad[:-1, :-1, :] + pad[1:, :-1, :] + pad[:-1, 1:, :] + pad[1:, 1:, :])
    return 1.0 / out


def _coef(sig, dt):
    """(1-a)/(1+a), 1/(1+a), 1+a, 1-a for a = sigma*dt/2."""
    a = 0.5 * dt * np.asarray(sig)
    return (1.0 - a) / (1.0 + a), 1.0 / (1.0 + a), 1.0 + a, 1.0 - a


class _Kernel:
    """Precomputed 1-D update coefficients and PEC index sets for one grid."""

    def __init__(self, grid: SimulationGrid):
        self.grid = grid
        dt = grid.dt
        sxn, sxh = grid.sigma_x_node, grid.sigma_x_half
        syn, syh = grid.sigma_y_node, grid.sigma_y_half
        szn, szh = grid.sigma_z_node, grid.sigma_z_half

        # Electric family; per component: flux c1/c2 on the first transverse
        # axis, recovery c3/c4 on the second, own-axis bp/bm on the flux.
        self.dx_c1, c2i, _, _ = _coef(syn, dt)
        self.dx_c2 = dt * c2i
        self.ex_c3, self.ex_c4, _, _ = _coef(szn, dt)
        _, _, self.ex_bp, self.ex_bm = _coef(sxh, dt)
        self.ex_ie = _component_inv_eps(grid.eps_grid, 0)

        self.dy_c1, c2i, _, _ = _coef(szn, dt)
        self.dy_c2 = dt * c2i
        self.ey_c3, self.ey_c4, _, _ = _coef(sxn, dt)
        _, _, self.ey_bp, self.ey_bm = _coef(syh, dt)
        self.ey_ie = _component_inv_eps(grid.eps_grid, 1)

        self.dz_c1, c2i, _, _ = _coef(sxn, dt)
        self.dz_c2 = dt * c2i
        self.ez_c3, self.ez_c4, _, _ = _coef(syn, dt)
        _, _, self.ez_bp, self.ez_bm = _coef(szh, dt)
        self.ez_ie = _component_inv_eps(grid.eps_grid, 2)

        # Magnetic family on the dual staggering; recovery absorbs 1/MU0.
        self.bx_c1, c2i, _, _ = _coef(syh, dt)
        self.bx_c2 = dt * c2i
        self.hx_c3, c4, _, _ = _coef(szh, dt)
        self.hx_c4 = c4 / MU0
        _, _, self.hx_bp, self.hx_bm = _coef(sxn, dt)

        self.by_c1, c2i, _, _ = _coef(szh, dt)
        self.by_c2 = dt * c2i
        self.hy_c3, c4, _, _ = _coef(sxh, dt)
        self.hy_c4 = c4 / MU0
        _, _, self.hy_bp, self.hy_bm = _coef(syn, dt)

        self.bz_c1, c2i, _, _ = _coef(sxh, dt)
        self.bz_c2 = dt * c2i
        self.hz_c3, c4, _, _ = _coef(syh, dt)
        self.hz_c4 = c4 / MU0
        _, _, self.hz_bp, self.hz_bm = _coef(szn, dt)

        self.idx = 1.0 / grid.dx
        self.idy = 1.0 / grid.dy
        self.idz = 1.0 / grid.dz

        # PEC faces -> tangential-E node indices per sheet plane
        nx, ny = grid.nx, grid.ny
        self.pec = []
        for k, mask in grid.metal_sheets:
            ex_mask = np.zeros((nx, ny + 1), dtype=bool)
            ex_mask[:, :-1] |= mask
            ex_mask[:, 1:] |= mask
            ey_mask = np.zeros((nx + 1, ny), dtype=bool)
            ey_mask[:-1, :] |= mask
            ey_mask[1:, :] |= mask
            self.pec.append((k, np.nonzero(ex_mask), np.nonzero(ey_mask)))


@njit(cache=True)
def _magnetic_phase_jit(ex, ey, ez, hx, hy, hz, fbx, fby, fbz,
                        bx_c1, bx_c2, hx_c3, hx_c4, hx_bp, hx_bm,
                        by_c1, by_c2, hy_c3, hy_c4, hy_bp, hy_bm,
                        bz_c1, bz_c2, hz_c3, hz_c4, hz_bp, hz_bm,
                        idx, idy, idz):
    nxp, ny, nz = hx.shape          # (nx+1, ny, nz)
    for i in range(nxp):
        for j in range(ny):
            for k in range(nz):
                curl = (ey[i, j, k + 1] - ey[i, j, k]) * idz - (ez[i, j + 1, k] - ez[i, j, k]) * idy
                b0 = fbx[i, j, k]
                b1 = bx_c1[j] * b0 + bx_c2[j] * curl
                fbx[i, j, k] = b1
                hx[i, j, k] = hx_c3[k] * hx[i, j, k] + hx_c4[k] * (hx_bp[i] * b1 - hx_bm[i] * b0)
    nx, nyp, nz = hy.shape          # (nx, ny+1, nz)
    for i in range(nx):
        for j in range(nyp):
            for k in range(nz):
                curl = (ez[i + 1, j, k] - ez[i, j, k]) * idx - (ex[i, j, k + 1] - ex[i, j, k]) * idz
                b0 = fby[i, j, k]
                b1 = by_c1[k] * b0 + by_c2[k] * curl
                fby[i, j, k] = b1
                hy[i, j, k] = hy_c3[i] * hy[i, j, k] + hy_c4[i] * (hy_bp[j] * b1 - hy_bm[j] * b0)
    nx, ny, nzp = hz.shape          # (nx, ny, nz+1)
    for i in range(nx):
        for j in range(ny):
            for k in range(nzp):
                curl = (ex[i, j + 1, k] - ex[i, j, k]) * idy - (ey[i + 1, j, k] - ey[i, j, k]) * idx
                b0 = fbz[i, j, k]
                b1 = bz_c1[i] * b0 + bz_c2[i] * curl
                fbz[i, j, k] = b1
                hz[i, j, k] = hz_c3[j] * hz[i, j, k] + hz_c4[j] * (hz_bp[k] * b1 - hz_bm[k] * b0)


@njit(cache=True)
def _electric_phase_jit(ex, ey, ez, hx, hy, hz, fdx, fdy, fdz,
                        dx_c1, dx_c2, ex_c3, ex_c4, ex_bp, ex_bm, ex_ie,
                        dy_c1, dy_c2, ey_c3, ey_c4, ey_bp, ey_bm, ey_ie,
                        dz_c1, dz_c2, ez_c3, ez_c4, ez_bp, ez_bm, ez_ie,
                        idx, idy, idz):
    # Interior updates only: tangential E on the outer boundary stays zero (PEC walls).
    nx, nyp, nzp = ex.shape         # (nx, ny+1, nz+1)
    for i in range(nx):
        for j in range(1, nyp - 1):
            for k in range(1, nzp - 1):
                curl = (hz[i, j, k] - hz[i, j - 1, k]) * idy - (hy[i, j, k] - hy[i, j, k - 1]) * idz
                d0 = fdx[i, j, k]
                d1 = dx_c1[j] * d0 + dx_c2[j] * curl
                fdx[i, j, k] = d1
                ex[i, j, k] = ex_c3[k] * ex[i, j, k] + ex_c4[k] * ex_ie[i, j, k] * (
                    ex_bp[i] * d1 - ex_bm[i] * d0)
    nxp, ny, nzp = ey.shape         # (nx+1, ny, nz+1)
    for i in range(1, nxp - 1):
        for j in range(ny):
            for k in range(1, nzp - 1):
                curl = (hx[i, j, k] - hx[i, j, k - 1]) * idz - (hz[i, j, k] - hz[i - 1, j, k]) * idx
                d0 = fdy[i, j, k]
                d1 = dy_c1[k] * d0 + dy_c2[k] * curl
                fdy[i, j, k] = d1
                ey[i, j, k] = ey_c3[i] * ey[i, j, k] + ey_c4[i] * ey_ie[i, j, k] * (
                    ey_bp[j] * d1 - ey_bm[j] * d0)
    nxp, nyp, nz = ez.shape         # (nx+1, ny+1, nz)
    for i in range(1, nxp - 1):
        for j in range(1, nyp - 1):
            for k in range(nz):
                curl = (hy[i, j, k] - hy[i - 1, j, k]) * idx - (hx[i, j, k] - hx[i, j - 1, k]) * idy
                d0 = fdz[i, j, k]
                d1 = dz_c1[i] * d0 + dz_c2[i] * curl
                fdz[i, j, k] = d1
                ez[i, j, k] = ez_c3[j] * ez[i, j, k] + ez_c4[j] * ez_ie[i, j, k] * (
                    ez_bp[k] * d1 - ez_bm[k] * d0)


@dataclass
class FieldState:
    """Six staggered field arrays plus the UPML auxiliary flux arrays."""

    grid: SimulationGrid
    istep: int
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    hz: np.ndarray
    fdx: np.ndarray
    fdy: np.ndarray
    fdz: np.ndarray
    fbx: np.ndarray
    fby: np.ndarray
    fbz: np.ndarray
    kernel: _Kernel

    @classmethod
    def zeros(cls, grid: SimulationGrid) -> "FieldState":
        nx, ny, nz = grid.nx, grid.ny, grid.nz
        z = np.zeros
        return cls(
            grid=grid, istep=0,
            ex=z((nx, ny + 1, nz + 1)), ey=z((nx + 1, ny, nz + 1)), ez=z((nx + 1, ny + 1, nz)),
            hx=z((nx + 1, ny, nz)), hy=z((nx, ny + 1, nz)), hz=z((nx, ny, nz + 1)),
            fdx=z((nx, ny + 1, nz + 1)), fdy=z((nx + 1, ny, nz + 1)), fdz=z((nx + 1, ny + 1, nz)),
            fbx=z((nx + 1, ny, nz)), fby=z((nx, ny + 1, nz)), fbz=z((nx, ny, nz + 1)),
            kernel=_Kernel(grid),
        )

    @property
    def time(self) -> float:
        return self.istep * self.grid.dt


def _magnetic_phase(s: FieldState):
    k = s.kernel
    _magnetic_phase_jit(
        s.ex, s.ey, s.ez, s.hx, s.hy, s.hz, s.fbx, s.fby, s.fbz,
        k.bx_c1, k.bx_c2, k.hx_c3, k.hx_c4, k.hx_bp, k.hx_bm,
        k.by_c1, k.by_c2, k.hy_c3, k.hy_c4, k.hy_bp, k.hy_bm,
        k.bz_c1, k.bz_c2, k.hz_c3, k.hz_c4, k.hz_bp, k.hz_bm,
        k.idx, k.idy, k.idz,
    )


def _electric_phase(s: FieldState):
    k = s.kernel
    _electric_phase_jit(
        s.ex, s.ey, s.ez, s.hx, s.hy, s.hz, s.fdx, s.fdy, s.fdz,
        k.dx_c1, k.dx_c2, k.ex_c3, k.ex_c4, k.ex_bp, k.ex_bm, k.ex_ie,
        k.dy_c1, k.dy_c2, k.ey_c3, k.ey_c4, k.ey_bp, k.ey_bm, k.ey_ie,
        k.dz_c1, k.dz_c2, k.ez_c3, k.ez_c4, k.ez_bp, k.ez_bm, k.ez_ie,
        k.idx, k.idy, k.idz,
    )


def _inject_and_clamp(s: FieldState, spec: SourceSpec, t: float):
    if spec.injection is not None:
        inj = spec.injection
        s.ez[inj.ix_lo:inj.ix_hi, inj.iy, inj.kz_lo:inj.kz_hi] += source_value(t, spec)
    for k, ex_idx, ey_idx in s.kernel.pec:
        s.ex[ex_idx[0], ex_idx[1], k] = 0.0
        s.ey[ey_idx[0], ey_idx[1], k] = 0.0


def step(state: FieldState, grid: SimulationGrid, spec: SourceSpec,
         update_order: str = "h_first") -> FieldState:
    """Advance one full leapfrog step in place; returns the same state."""
    if state.grid is not grid:
        raise ValidationError("field state was built for a different grid")
    t_next = (state.istep + 1) * grid.dt
    if update_order == "h_first":
        _magnetic_phase(state)
        _electric_phase(state)
        _inject_and_clamp(state, spec, t_next)
    elif update_order == "e_first":
        _electric_phase(state)
        _inject_and_clamp(state, spec, t_next)
        _magnetic_phase(state)
    else:
        raise ValidationError(f"unknown update_order {update_order!r}")
    state.istep += 1
    return state


def _check_finite(state: FieldState):
    for arr in (state.ex, state.ey, state.ez, state.hx, state.hy, state.hz):
        if not np.isfinite(arr).all():
            raise DivergenceError(state.istep)


def _sample_probe(state: FieldState, p: ProbeSpec) -> float:
    return -state.grid.dz * float(np.sum(state.ez[p.ix, p.iy, p.kz_lo:p.kz_hi]))


def run(grid: SimulationGrid, spec: SourceSpec, probes: list[ProbeSpec],
        update_order: str = "h_first") -> list[ProbeTrace]:
    """Run ``spec.n_steps`` steps from zero fields, recording probe voltages."""
    for p in probes:
        if not (0 <= p.ix <= grid.nx and 0 <= p.iy <= grid.ny
                and 0 <= p.kz_lo < p.kz_hi <= grid.nz):
            raise ValidationError(f"probe {p.probe_id!r} references out-of-bounds cells")
    state = FieldState.zeros(grid)
    records = [np.empty(spec.n_steps) for _ in probes]
    for n in range(spec.n_steps):
        step(state, grid, spec, update_order=update_order)
        if state.istep % DIVERGENCE_CHECK_INTERVAL == 0:
            _check_finite(state)
        for rec, p in zip(records, probes):
            rec[n] = _sample_probe(state, p)
    if spec.n_steps:
        _check_finite(state)
    return [ProbeTrace(probe_id=p.probe_id, samples=rec, dt=grid.dt)
            for p, rec in zip(probes, records)]
