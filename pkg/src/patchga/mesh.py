"""Yee grid construction: materials, metal layout, and UPML profiles.

Axis convention: x spans the patch width (pixel columns), y spans the patch
length (pixel rows) with the feed line running along +y from the y=0 wall,
z is vertical. The ground plane is the z=0 node plane (bottom face of the
domain, no absorber below it); patch and feed metal live on the node plane
at the top of the substrate. Metal is modeled as infinitely thin PEC
sheets: tangential E is forced to zero on the flagged cell faces.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from patchga.constants import C0, EPS0
from patchga.errors import ValidationError

PIXEL_GRID = 17
N_PIXELS = PIXEL_GRID * PIXEL_GRID

UPML_GRADING_ORDER = 3
UPML_SIGMA_SCALE = 0.8


@dataclass(frozen=True)
class SeedDimensions:
    """Physical dimensions of the inset-fed patch (meters, except eps_r)."""

    w: float          # patch width (x extent)
    l: float          # patch length (y extent, feed direction)
    w1: float         # feed line width
    g: float          # inset gap on each side of the feed line
    y0: float         # inset depth into the patch
    eps_r: float      # substrate relative permittivity
    h: float          # substrate height

    def __post_init__(self):
        for name in ("w", "l", "w1", "g", "y0", "h"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.eps_r < 1:
            raise ValidationError(f"eps_r must be >= 1, got {self.eps_r}")
        if self.y0 >= self.l:
            raise ValidationError(f"inset depth y0={self.y0} must be < patch length l={self.l}")
        if self.w1 + 2 * self.g >= self.w:
            raise ValidationError(
                f"feed plus gaps w1+2g={self.w1 + 2 * self.g} must be < patch width w={self.w}"
            )


@dataclass(frozen=True)
class MeshConfig:
    """Discretization settings for the antenna domain.

    ``dz=None`` resolves to h/3 at build time (three cells through the
    substrate, metal sheets on node planes). Margins are measured in cells
    between the structure and the UPML interface; the source and probe
    planes sit ``source_offset_cells`` / ``probe_offset_cells`` interior of
    the source-side UPML interface.
    """

    cells_per_pixel_x: int = 2
    cells_per_pixel_y: int = 2
    dz: float | None = None
    air_margin_cells: int = 10
    feed_margin_cells: int = 20
    upml_cells: int = 8
    courant: float = 0.99
    source_offset_cells: int = 2
    probe_offset_cells: int = 10

    def __post_init__(self):
        if self.cells_per_pixel_x < 1 or self.cells_per_pixel_y < 1:
            raise ValidationError("cells_per_pixel must be >= 1")
        if self.upml_cells < 4:
            raise ValidationError(f"upml_cells must be >= 4, got {self.upml_cells}")
        if self.air_margin_cells < 1 or self.feed_margin_cells < 1:
            raise ValidationError("margin cells must be >= 1")
        if not 0 < self.courant <= 1:
            raise ValidationError(f"courant must be in (0, 1], got {self.courant}")
        if self.dz is not None and self.dz <= 0:
            raise ValidationError(f"dz must be > 0, got {self.dz}")
        if not 0 < self.source_offset_cells < self.probe_offset_cells:
            raise ValidationError("need 0 < source_offset_cells < probe_offset_cells")
        if self.probe_offset_cells >= self.feed_margin_cells:
            raise ValidationError(
                f"probe_offset_cells={self.probe_offset_cells} must be < "
                f"feed_margin_cells={self.feed_margin_cells}"
            )


@dataclass(frozen=True)
class PixelMap:
    """17x17 boolean metal map; True = copper sub-patch present."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=bool)
        if arr.shape != (PIXEL_GRID, PIXEL_GRID):
            raise ValidationError(f"pixel map must be {PIXEL_GRID}x{PIXEL_GRID}, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    @classmethod
    def ones(cls) -> "PixelMap":
        return cls(np.ones((PIXEL_GRID, PIXEL_GRID), dtype=bool))

    @classmethod
    def zeros(cls) -> "PixelMap":
        return cls(np.zeros((PIXEL_GRID, PIXEL_GRID), dtype=bool))

    @classmethod
    def from_bits(cls, flat) -> "PixelMap":
        """Row-major 289-bit vector -> map; gene k sits at (k // 17, k % 17)."""
        flat = np.asarray(flat, dtype=bool).ravel()
        if flat.size != N_PIXELS:
            raise ValidationError(f"chromosome must have {N_PIXELS} bits, got {flat.size}")
        return cls(flat.reshape(PIXEL_GRID, PIXEL_GRID))

    def to_bits(self) -> np.ndarray:
        return self.bits.ravel().copy()

    def to_text(self) -> str:
        """17 lines of '0'/'1'; line 0 = pixel row 0 (patch edge nearest the feed)."""
        return "\n".join("".join("1" if b else "0" for b in row) for row in self.bits) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PixelMap":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != PIXEL_GRID:
            raise ValidationError(f"pixel grid file must have {PIXEL_GRID} lines, got {len(lines)}")
        bits = np.zeros((PIXEL_GRID, PIXEL_GRID), dtype=bool)
        for r, ln in enumerate(lines):
            if len(ln) != PIXEL_GRID:
                raise ValidationError(f"line {r + 1} must have {PIXEL_GRID} characters, got {len(ln)}")
            for c, ch in enumerate(ln):
                if ch == "1":
                    bits[r, c] = True
                elif ch != "0":
                    raise ValidationError(f"invalid character {ch!r} at line {r + 1}, column {c + 1}")
        return cls(bits)


@dataclass(frozen=True)
class Port:
    """Feed-line instrumentation: source plane, probe plane, strip span."""

    feed_ix_lo: int       # strip cell span in x, half-open
    feed_ix_hi: int
    source_iy: int        # y node index of the soft-source plane
    probe_iy: int         # y node index of the port-voltage reference plane
    probe_ix: int         # x node index of the strip centerline
    nz_sub: int           # substrate thickness in cells


@dataclass(frozen=True)
class SimulationGrid:
    """Immutable discretized domain: materials, PEC sheets, UPML profiles.

    ``eps_grid`` is cell-centered absolute permittivity, shape (nx, ny, nz).
    ``metal_sheets`` holds (k, mask) pairs: mask[i, j] flags the horizontal
    cell face at node plane k as PEC. Sigma arrays are the per-axis UPML
    conductivity profiles normalized by EPS0 (units 1/s), sampled at integer
    node positions (n+1 values) and half-cell positions (n values).
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    dt: float
    eps_grid: np.ndarray = field(repr=False, default=None)
    metal_sheets: tuple = field(repr=False, default=())
    sigma_x_node: np.ndarray = field(repr=False, default=None)
    sigma_x_half: np.ndarray = field(repr=False, default=None)
    sigma_y_node: np.ndarray = field(repr=False, default=None)
    sigma_y_half: np.ndarray = field(repr=False, default=None)
    sigma_z_node: np.ndarray = field(repr=False, default=None)
    sigma_z_half: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        for name in ("eps_grid", "sigma_x_node", "sigma_x_half", "sigma_y_node",
                     "sigma_y_half", "sigma_z_node", "sigma_z_half"):
            getattr(self, name).flags.writeable = False
        for _, mask in self.metal_sheets:
            mask.flags.writeable = False

    @property
    def cell_count(self) -> int:
        return self.nx * self.ny * self.nz


def cfl_timestep(dx: float, dy: float, dz: float, courant: float) -> float:
    """Largest stable time step scaled by the Courant factor."""
    for name, val in (("dx", dx), ("dy", dy), ("dz", dz)):
        if val <= 0:
            raise ValidationError(f"{name} must be > 0, got {val}")
    if not 0 < courant <= 1:
        raise ValidationError(f"courant must be in (0, 1], got {courant}")
    return courant / (C0 * math.sqrt(1.0 / dx**2 + 1.0 / dy**2 + 1.0 / dz**2))


def pixel_to_cells(row: int, col: int, cfg: MeshConfig) -> tuple[int, int, int, int]:
    """Half-open cell rectangle (x_lo, x_hi, y_lo, y_hi) of one sub-patch.

    Coordinates are relative to the patch-region origin; columns map to x,
    rows to y. The 289 rectangles tile the patch region exactly.
    """
    if not 0 <= row < PIXEL_GRID:
        raise ValidationError(f"pixel row must be in [0, {PIXEL_GRID}), got {row}")
    if not 0 <= col < PIXEL_GRID:
        raise ValidationError(f"pixel col must be in [0, {PIXEL_GRID}), got {col}")
    cx, cy = cfg.cells_per_pixel_x, cfg.cells_per_pixel_y
    return (col * cx, (col + 1) * cx, row * cy, (row + 1) * cy)


def _upml_sigma_profiles(n: int, delta: float, upml_cells: int, low: bool, high: bool):
    """Polynomial-graded sigma/EPS0 profiles along one axis.

    sigma_max follows the standard optimal-reflection formula for the
    grading order, scaled by UPML_SIGMA_SCALE; kappa is 1 everywhere.
    """
    m = UPML_GRADING_ORDER
    sigma_max = UPML_SIGMA_SCALE * (m + 1) / (150.0 * math.pi * delta) / EPS0
    d = float(upml_cells)

    def profile(positions):
        depth = np.zeros_like(positions)
        if low:
            depth = np.maximum(depth, d - positions)
        if high:
            depth = np.maximum(depth, positions - (n - d))
        depth = np.clip(depth, 0.0, d)
        return sigma_max * (depth / d) ** m

    node = profile(np.arange(n + 1, dtype=float))
    half = profile(np.arange(n, dtype=float) + 0.5)
    return node, half


def _resolve_dz(dims: SeedDimensions, cfg: MeshConfig) -> tuple[float, int]:
    dz = cfg.dz if cfg.dz is not None else dims.h / 3.0
    nz_sub = round(dims.h / dz)
    if nz_sub < 1 or abs(nz_sub * dz - dims.h) > 1e-9 * dims.h:
        raise ValidationError(
            f"substrate height h={dims.h} is not an integer multiple of dz={dz}"
        )
    return dz, nz_sub


def layout_cell_sizes(dims: SeedDimensions, cfg: MeshConfig) -> tuple[float, float, float]:
    """(dx, dy, dz) implied by the pixel resolution and substrate height."""
    dx = dims.w / (PIXEL_GRID * cfg.cells_per_pixel_x)
    dy = dims.l / (PIXEL_GRID * cfg.cells_per_pixel_y)
    dz, _ = _resolve_dz(dims, cfg)
    return dx, dy, dz


def build_layout(dims: SeedDimensions, pixels: PixelMap, cfg: MeshConfig,
                 feed_through: bool = False) -> tuple[SimulationGrid, Port]:
    """Discretize the antenna: substrate slab, ground plane, feed, pixels.

    The feed strip runs from the y=0 wall (through the source-side UPML)
    up to the inset tip inside the pixel region; the inset gaps are cleared
    from whatever pixel metal is present, so the all-ones map reproduces
    the seed antenna including its notch. With ``feed_through`` the strip
    instead continues straight to the far wall (matched line, used for the
    incident-field reference run) and pixel metal is ignored.

    Ground plane and substrate span the whole footprint, through the
    lateral UPML, so the line sees a uniform environment into the absorber.
    """
    dx, dy = dims.w / (PIXEL_GRID * cfg.cells_per_pixel_x), dims.l / (PIXEL_GRID * cfg.cells_per_pixel_y)
    dz, nz_sub = _resolve_dz(dims, cfg)

    px_cells = PIXEL_GRID * cfg.cells_per_pixel_x
    py_cells = PIXEL_GRID * cfg.cells_per_pixel_y
    u, am, fm = cfg.upml_cells, cfg.air_margin_cells, cfg.feed_margin_cells

    nx = 2 * (u + am) + px_cells
    ny = u + fm + py_cells + am + u
    nz = nz_sub + cfg.air_margin_cells + u
    x0 = u + am
    y0 = u + fm
    k_metal = nz_sub

    w1_cells = round(dims.w1 / dx)
    if w1_cells < 2:
        raise ValidationError(
            f"feed width w1={dims.w1} maps to {w1_cells} cells at dx={dx:.4g}; need >= 2"
        )
    g_cells = max(1, round(dims.g / dx))
    ins_cells = round(dims.y0 / dy)
    if ins_cells < 1:
        raise ValidationError(f"inset depth y0={dims.y0} maps to zero cells at dy={dy:.4g}")
    if ins_cells > py_cells:
        raise ValidationError(f"inset depth y0={dims.y0} exceeds the patch length")

    fx0 = x0 + (px_cells - w1_cells) // 2
    fx1 = fx0 + w1_cells
    if fx0 - g_cells < x0 or fx1 + g_cells > x0 + px_cells:
        raise ValidationError("feed strip plus inset gaps do not fit inside the patch width")

    top = np.zeros((nx, ny), dtype=bool)
    if not feed_through:
        # pixel metal, 2x2 (or configured) cells per sub-patch
        blown = np.kron(pixels.bits, np.ones((cfg.cells_per_pixel_y, cfg.cells_per_pixel_x), dtype=bool))
        top[x0:x0 + px_cells, y0:y0 + py_cells] = blown.T
        # inset notch: gaps beside the feed strip override pixel metal
        top[fx0 - g_cells:fx0, y0:y0 + ins_cells] = False
        top[fx1:fx1 + g_cells, y0:y0 + ins_cells] = False
        top[fx0:fx1, 0:y0 + ins_cells] = True
    else:
        top[fx0:fx1, :] = True

    ground = np.ones((nx, ny), dtype=bool)

    eps = np.full((nx, ny, nz), EPS0)
    eps[:, :, :nz_sub] = EPS0 * dims.eps_r

    sx_node, sx_half = _upml_sigma_profiles(nx, dx, u, low=True, high=True)
    sy_node, sy_half = _upml_sigma_profiles(ny, dy, u, low=True, high=True)
    sz_node, sz_half = _upml_sigma_profiles(nz, dz, u, low=False, high=True)

    grid = SimulationGrid(
        nx=nx, ny=ny, nz=nz, dx=dx, dy=dy, dz=dz,
        dt=cfl_timestep(dx, dy, dz, cfg.courant),
        eps_grid=eps,
        metal_sheets=((0, ground), (k_metal, top)),
        sigma_x_node=sx_node, sigma_x_half=sx_half,
        sigma_y_node=sy_node, sigma_y_half=sy_half,
        sigma_z_node=sz_node, sigma_z_half=sz_half,
    )
    port = Port(
        feed_ix_lo=fx0, feed_ix_hi=fx1,
        source_iy=u + cfg.source_offset_cells,
        probe_iy=u + cfg.probe_offset_cells,
        probe_ix=fx0 + w1_cells // 2,
        nz_sub=nz_sub,
    )
    return grid, port


def build_vacuum_grid(nx: int, ny: int, nz: int, cell: float,
                      upml_cells: int = 8, courant: float = 0.99) -> SimulationGrid:
    """Homogeneous vacuum box with UPML on all six faces (solver test rig)."""
    if upml_cells < 4:
        raise ValidationError(f"upml_cells must be >= 4, got {upml_cells}")
    if min(nx, ny, nz) <= 2 * upml_cells:
        raise ValidationError("domain too small for the requested UPML thickness")
    sx_node, sx_half = _upml_sigma_profiles(nx, cell, upml_cells, low=True, high=True)
    sy_node, sy_half = _upml_sigma_profiles(ny, cell, upml_cells, low=True, high=True)
    sz_node, sz_half = _upml_sigma_profiles(nz, cell, upml_cells, low=True, high=True)
    return SimulationGrid(
        nx=nx, ny=ny, nz=nz, dx=cell, dy=cell, dz=cell,
        dt=cfl_timestep(cell, cell, cell, courant),
        eps_grid=np.full((nx, ny, nz), EPS0),
        metal_sheets=(),
        sigma_x_node=sx_node, sigma_x_half=sx_half,
        sigma_y_node=sy_node, sigma_y_half=sy_half,
        sigma_z_node=sz_node, sigma_z_half=sz_half,
    )


def dump_pec_faces(grid: SimulationGrid) -> str:
    """Plain-text voxel listing, one line per PEC cell face: 'x y z orientation'."""
    out = io.StringIO()
    for k, mask in grid.metal_sheets:
        xs, ys = np.nonzero(mask)
        for i, j in zip(xs, ys):
            out.write(f"{i} {j} {k} z\n")
    return out.getvalue()
