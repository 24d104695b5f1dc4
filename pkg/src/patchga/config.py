"""Run configuration: presets, flat key=value config files, overrides.

The file format is flat ``key = value`` lines with ``#`` comments. Every
key has a default (the reference values or a documented engineering
choice), so an empty file is a valid configuration. Unknown keys are
rejected by name. ``format_config(parse_config(...))`` is canonical:
parsing its own output reproduces the same configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

from patchga.errors import ValidationError
from patchga.evolve import FitnessConfig, GAConfig
from patchga.mesh import MeshConfig, SeedDimensions
from patchga.seeddesign import paper_seed
from patchga.solver import SourceSpec


@dataclass(frozen=True)
class RunConfig:
    """Aggregate of every knob the pipeline consumes."""

    dims: SeedDimensions
    mesh: MeshConfig
    source: SourceSpec
    fitness: FitnessConfig
    ga: GAConfig
    f_start_hz: float = 12.0e9
    f_stop_hz: float = 20.0e9
    f_points: int = 401
    bandwidth_mode: str = "minband"
    workers: int = 1
    outdir: str = "runs/out"

    def __post_init__(self):
        if self.f_points < 2:
            raise ValidationError(f"spectrum.points must be >= 2, got {self.f_points}")
        if not 0 < self.f_start_hz < self.f_stop_hz:
            raise ValidationError("need 0 < spectrum.f_start_hz < spectrum.f_stop_hz")
        if self.bandwidth_mode not in ("minband", "union"):
            raise ValidationError(
                f"spectrum.bandwidth_mode must be 'minband' or 'union', got {self.bandwidth_mode!r}"
            )
        if self.workers < 1:
            raise ValidationError(f"run.workers must be >= 1, got {self.workers}")

    def freqs(self):
        import numpy as np
        return np.linspace(self.f_start_hz, self.f_stop_hz, self.f_points)


def preset(name: str) -> RunConfig:
    """Built-in configurations: "paper" (full resolution) and "smoke" (coarse).

    The paper preset keeps the published source constants (t0 = 5.02 ns)
    and therefore runs 16000 steps: with the CFL-derived time step the
    pulse center falls near step 9500, so an 8000-step window would end
    before the excitation fires.
    """
    if name == "paper":
        return RunConfig(
            dims=paper_seed(),
            mesh=MeshConfig(),
            source=SourceSpec(n_steps=16000),
            fitness=FitnessConfig(),
            ga=GAConfig(population=30, generations=30, seed=1),
            f_points=401,
        )
    if name == "smoke":
        return RunConfig(
            dims=paper_seed(),
            mesh=MeshConfig(cells_per_pixel_x=1, cells_per_pixel_y=1,
                            air_margin_cells=6, feed_margin_cells=14, upml_cells=6),
            source=SourceSpec(t0=0.4e-9, n_steps=3000),
            fitness=FitnessConfig(),
            ga=GAConfig(population=8, generations=10, seed=42),
            f_points=201,
        )
    raise ValidationError(f"unknown preset {name!r} (expected 'paper' or 'smoke')")


def _float(s: str) -> float:
    try:
        return float(s)
    except ValueError as err:
        raise ValidationError(f"expected a number, got {s!r}") from err


def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError as err:
        raise ValidationError(f"expected an integer, got {s!r}") from err


def _dz(s: str):
    return None if s == "auto" else _float(s)


def _choice(*options):
    def cast(s: str) -> str:
        if s not in options:
            raise ValidationError(f"expected one of {options}, got {s!r}")
        return s
    return cast


# key -> (caster, getter, formatted default comment)
_KEYS = {
    "patch.w_m": (_float, lambda c: c.dims.w),
    "patch.l_m": (_float, lambda c: c.dims.l),
    "patch.w1_m": (_float, lambda c: c.dims.w1),
    "patch.g_m": (_float, lambda c: c.dims.g),
    "patch.y0_m": (_float, lambda c: c.dims.y0),
    "patch.eps_r": (_float, lambda c: c.dims.eps_r),
    "patch.h_m": (_float, lambda c: c.dims.h),
    "mesh.cells_per_pixel_x": (_int, lambda c: c.mesh.cells_per_pixel_x),
    "mesh.cells_per_pixel_y": (_int, lambda c: c.mesh.cells_per_pixel_y),
    "mesh.dz_m": (_dz, lambda c: "auto" if c.mesh.dz is None else c.mesh.dz),
    "mesh.air_margin_cells": (_int, lambda c: c.mesh.air_margin_cells),
    "mesh.feed_margin_cells": (_int, lambda c: c.mesh.feed_margin_cells),
    "mesh.upml_cells": (_int, lambda c: c.mesh.upml_cells),
    "mesh.courant": (_float, lambda c: c.mesh.courant),
    "mesh.source_offset_cells": (_int, lambda c: c.mesh.source_offset_cells),
    "mesh.probe_offset_cells": (_int, lambda c: c.mesh.probe_offset_cells),
    "source.e0_v_per_m": (_float, lambda c: c.source.e0),
    "source.t0_s": (_float, lambda c: c.source.t0),
    "source.fc_hz": (_float, lambda c: c.source.fc),
    "source.fb_hz": (_float, lambda c: c.source.fb),
    "source.n_steps": (_int, lambda c: c.source.n_steps),
    "fitness.alpha": (_float, lambda c: c.fitness.alpha),
    "fitness.bw_target_hz": (_float, lambda c: c.fitness.bw_target_hz),
    "fitness.rl_target_db": (_float, lambda c: c.fitness.rl_target_db),
    "fitness.bw_threshold_db": (_float, lambda c: c.fitness.bw_threshold_db),
    "ga.population": (_int, lambda c: c.ga.population),
    "ga.generations": (_int, lambda c: c.ga.generations),
    "ga.swap_prob": (_float, lambda c: c.ga.swap_prob),
    "ga.mutation_prob": (_float, lambda c: c.ga.mutation_prob),
    "ga.seed": (_int, lambda c: c.ga.seed),
    "ga.crossover": (_choice("uniform", "shuffle"), lambda c: c.ga.crossover_method),
    "spectrum.f_start_hz": (_float, lambda c: c.f_start_hz),
    "spectrum.f_stop_hz": (_float, lambda c: c.f_stop_hz),
    "spectrum.points": (_int, lambda c: c.f_points),
    "spectrum.bandwidth_mode": (_choice("minband", "union"), lambda c: c.bandwidth_mode),
    "run.workers": (_int, lambda c: c.workers),
    "run.outdir": (str, lambda c: c.outdir),
}

# Keys that do not constrain checkpoint compatibility: worker count and
# output location cannot change numerical outcomes, and the generation
# budget is only a stopping rule (resuming with a larger budget is the
# whole point of --resume).
_FINGERPRINT_EXEMPT = ("run.workers", "run.outdir", "ga.generations")


def parse_kv_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _KEYS:
            raise ValidationError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _KEYS[key][0](val)
    return values


def apply_values(cfg: RunConfig, values: dict) -> RunConfig:
    """Return a new RunConfig with the given key values applied."""
    cur = {key: getter(cfg) for key, (_, getter) in _KEYS.items()}
    for key, val in values.items():
        if key not in _KEYS:
            raise ValidationError(f"unknown config key {key!r}")
        cur[key] = val
    dims = SeedDimensions(
        w=cur["patch.w_m"], l=cur["patch.l_m"], w1=cur["patch.w1_m"],
        g=cur["patch.g_m"], y0=cur["patch.y0_m"],
        eps_r=cur["patch.eps_r"], h=cur["patch.h_m"],
    )
    mesh = MeshConfig(
        cells_per_pixel_x=cur["mesh.cells_per_pixel_x"],
        cells_per_pixel_y=cur["mesh.cells_per_pixel_y"],
        dz=None if cur["mesh.dz_m"] in (None, "auto") else float(cur["mesh.dz_m"]),
        air_margin_cells=cur["mesh.air_margin_cells"],
        feed_margin_cells=cur["mesh.feed_margin_cells"],
        upml_cells=cur["mesh.upml_cells"],
        courant=cur["mesh.courant"],
        source_offset_cells=cur["mesh.source_offset_cells"],
        probe_offset_cells=cur["mesh.probe_offset_cells"],
    )
    source = SourceSpec(
        e0=cur["source.e0_v_per_m"], t0=cur["source.t0_s"],
        fc=cur["source.fc_hz"], fb=cur["source.fb_hz"],
        n_steps=cur["source.n_steps"],
    )
    fit = FitnessConfig(
        alpha=cur["fitness.alpha"], bw_target_hz=cur["fitness.bw_target_hz"],
        rl_target_db=cur["fitness.rl_target_db"],
        bw_threshold_db=cur["fitness.bw_threshold_db"],
    )
    ga = GAConfig(
        population=cur["ga.population"], generations=cur["ga.generations"],
        swap_prob=cur["ga.swap_prob"], mutation_prob=cur["ga.mutation_prob"],
        seed=cur["ga.seed"], crossover_method=cur["ga.crossover"],
    )
    return RunConfig(
        dims=dims, mesh=mesh, source=source, fitness=fit, ga=ga,
        f_start_hz=cur["spectrum.f_start_hz"], f_stop_hz=cur["spectrum.f_stop_hz"],
        f_points=cur["spectrum.points"], bandwidth_mode=cur["spectrum.bandwidth_mode"],
        workers=cur["run.workers"], outdir=cur["run.outdir"],
    )


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    base = base if base is not None else preset("paper")
    return apply_values(base, parse_kv_text(Path(path).read_text()))


def format_config(cfg: RunConfig) -> str:
    """Canonical dump of the fully resolved configuration."""
    width = max(len(k) for k in _KEYS)
    lines = ["# patchga resolved configuration"]
    for key, (_, getter) in _KEYS.items():
        val = getter(cfg)
        if isinstance(val, float):
            val = repr(val)
        lines.append(f"{key:<{width}} = {val}")
    return "\n".join(lines) + "\n"


def config_fingerprint(cfg: RunConfig) -> str:
    """Hash of every outcome-affecting key (worker count and outdir excluded)."""
    rows = []
    for key, (_, getter) in _KEYS.items():
        if key in _FINGERPRINT_EXEMPT:
            continue
        val = getter(cfg)
        rows.append(f"{key}={val!r}")
    return hashlib.sha256("\n".join(rows).encode()).hexdigest()


def set_override(values: dict, assignment: str):
    """Parse one ``key=value`` override (for --set flags) into ``values``."""
    if "=" not in assignment:
        raise ValidationError(f"override must look like key=value, got {assignment!r}")
    key, _, val = assignment.partition("=")
    key, val = key.strip(), val.strip()
    if key not in _KEYS:
        raise ValidationError(f"unknown config key {key!r}")
    values[key] = _KEYS[key][0](val)
