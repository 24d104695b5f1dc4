"""End-to-end runs: single evaluations, GA optimization, reporting.

Run directory layout (all files written atomically):

    config.resolved.txt   fully resolved configuration (provenance)
    cache/incident_*.json cached incident-run trace
    generations.csv       per-generation log: generation,best_fit,mean_fit,best_bw_hz,best_rl_db
    best_gen0000.txt ...  best-so-far pixel grid per generation (17x17 of '0'/'1')
    checkpoint.json       rolling GA checkpoint; resuming continues bit-exactly
    s11.csv               written by `simulate`
    report.csv, summary.txt, best_s11.csv, seed_s11.csv   written by `report`
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from patchga import evolve, spectra
from patchga.config import RunConfig, config_fingerprint, format_config, load_config
from patchga.errors import ValidationError
from patchga.mesh import PixelMap, build_layout
from patchga.solver import injection_for_port, probe_for_port, run
from patchga.spectra import write_atomic

log = logging.getLogger(__name__)

GEN_LOG_HEADER = "generation,best_fit,mean_fit,best_bw_hz,best_rl_db"


def ensure_incident(cfg: RunConfig, cache_dir: str | Path) -> spectra.IncidentCache:
    return spectra.load_or_record(cfg.dims, cfg.mesh, cfg.source, cache_dir)


def simulate_pixelmap(cfg: RunConfig, pm: PixelMap, cache: spectra.IncidentCache):
    """One antenna evaluation; returns (spectrum, record, f_min_hz)."""
    grid, port = build_layout(cfg.dims, pm, cfg.mesh)
    total = run(grid, cfg.source.with_injection(injection_for_port(port)),
                [probe_for_port(port)])[0]
    incident = cache.trace()
    freqs = cfg.freqs()
    refl = spectra.reflected_trace(total, incident)
    spectrum = spectra.s11(spectra.dft(refl, freqs), spectra.dft(incident, freqs), freqs)
    rl_min, f_min = spectra.min_return_loss(spectrum, cfg.source.fc)
    bw = spectra.bandwidth(spectrum, cfg.fitness.bw_threshold_db, cfg.source.fc,
                           mode=cfg.bandwidth_mode)
    rec = evolve.FitnessRecord(bw_hz=bw, rl_min_db=rl_min,
                               fit=evolve.fitness(bw, rl_min, cfg.fitness))
    return spectrum, rec, f_min


def make_evaluator(cfg: RunConfig, cache: spectra.IncidentCache):
    """Picklable per-chromosome evaluator for worker pools."""
    return partial(
        evolve.evaluate,
        dims=cfg.dims, cfg=cfg.mesh, spec=cfg.source, cache=cache,
        fcfg=cfg.fitness, freqs=cfg.freqs(), bandwidth_mode=cfg.bandwidth_mode,
    )


def _gen_row(state: evolve.GAState) -> str:
    mean_fit = float(np.mean([r.fit for r in state.records]))
    return (f"{state.generation},{state.best_record.fit:.17g},{mean_fit:.17g},"
            f"{state.best_record.bw_hz:.17g},{state.best_record.rl_min_db:.17g}")


def _write_generation_artifacts(outdir: Path, state: evolve.GAState, fingerprint: str,
                                log_lines: list):
    log_lines.append(_gen_row(state))
    write_atomic(outdir / "generations.csv", "\n".join([GEN_LOG_HEADER] + log_lines) + "\n")
    grid_txt = PixelMap.from_bits(state.best_bits).to_text()
    write_atomic(outdir / f"best_gen{state.generation:04d}.txt", grid_txt)
    write_atomic(outdir / "checkpoint.json", evolve.state_to_json(state, fingerprint))


def run_optimize(cfg: RunConfig, outdir: str | Path,
                 resume: str | Path | None = None) -> evolve.GAState:
    """Full (or resumed) GA run writing logs, grids, and checkpoints."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_atomic(outdir / "config.resolved.txt", format_config(cfg))
    fingerprint = config_fingerprint(cfg)

    cache = ensure_incident(cfg, outdir / "cache")
    evaluator = make_evaluator(cfg, cache)

    pool = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    map_fn = pool.map if pool is not None else map
    try:
        if resume is not None:
            state = evolve.state_from_json(Path(resume).read_text(), fingerprint)
            log_path = outdir / "generations.csv"
            log_lines = []
            if log_path.exists():
                # keep rows up to the checkpointed generation; later rows are stale
                for row in read_generation_log(log_path):
                    if row["generation"] <= state.generation:
                        log_lines.append(_row_text(row))
            log.info("resumed at generation %d (best fit %.4f)",
                     state.generation, state.best_record.fit)
        else:
            log_lines = []
            state = evolve.init_state(cfg.ga, evaluator, map_fn)
            _write_generation_artifacts(outdir, state, fingerprint, log_lines)
            log.info("generation 0: best fit %.4f", state.best_record.fit)
        while state.generation < cfg.ga.generations:
            state = evolve.evolve_step(state, evaluator, cfg.ga, map_fn)
            _write_generation_artifacts(outdir, state, fingerprint, log_lines)
            log.info("generation %d: best fit %.4f (bw %.3g Hz, rl %.2f dB)",
                     state.generation, state.best_record.fit,
                     state.best_record.bw_hz, state.best_record.rl_min_db)
    finally:
        if pool is not None:
            pool.shutdown()
    return state


def _row_text(row: dict) -> str:
    return (f"{row['generation']},{row['best_fit']:.17g},{row['mean_fit']:.17g},"
            f"{row['best_bw_hz']:.17g},{row['best_rl_db']:.17g}")


def read_generation_log(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"missing generation log {path}")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GEN_LOG_HEADER.split(","):
            raise ValidationError(f"corrupt generation log header in {path}")
        rows = []
        for row in reader:
            try:
                rows.append({
                    "generation": int(row["generation"]),
                    "best_fit": float(row["best_fit"]),
                    "mean_fit": float(row["mean_fit"]),
                    "best_bw_hz": float(row["best_bw_hz"]),
                    "best_rl_db": float(row["best_rl_db"]),
                })
            except (TypeError, KeyError) as err:
                raise ValidationError(f"corrupt generation log row in {path}: {row}") from err
    if not rows:
        raise ValidationError(f"generation log {path} has no rows")
    return rows


def run_report(run_dir: str | Path) -> str:
    """Aggregate a finished run; re-simulates the best and seed S11 curves.

    Returns the summary text (also written to summary.txt in the run dir).
    """
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.resolved.txt")
    rows = read_generation_log(run_dir / "generations.csv")

    ckpt_path = run_dir / "checkpoint.json"
    if not ckpt_path.exists():
        raise FileNotFoundError(f"missing checkpoint {ckpt_path}")
    state = evolve.state_from_json(ckpt_path.read_text(), config_fingerprint(cfg))

    cache = ensure_incident(cfg, run_dir / "cache")
    best_spec, best_rec, best_fmin = simulate_pixelmap(
        cfg, PixelMap.from_bits(state.best_bits), cache)
    seed_spec, seed_rec, seed_fmin = simulate_pixelmap(cfg, PixelMap.ones(), cache)
    write_atomic(run_dir / "best_s11.csv", best_spec.to_csv())
    write_atomic(run_dir / "seed_s11.csv", seed_spec.to_csv())

    out = [GEN_LOG_HEADER]
    for r in rows:
        out.append(f"{r['generation']},{r['best_fit']:.17g},{r['mean_fit']:.17g},"
                   f"{r['best_bw_hz']:.17g},{r['best_rl_db']:.17g}")
    write_atomic(run_dir / "report.csv", "\n".join(out) + "\n")

    max_best = max(r["best_fit"] for r in rows)
    lines = [
        f"run directory      : {run_dir}",
        f"generations logged : {len(rows)} (0..{rows[-1]['generation']})",
        f"max_best_fit       : {max_best:.17g}",
        "",
        f"{'gen':>4}  {'best_fit':>10}  {'mean_fit':>10}  {'best_bw_hz':>12}  {'best_rl_db':>10}",
    ]
    for r in rows:
        lines.append(f"{r['generation']:>4}  {r['best_fit']:>10.4f}  {r['mean_fit']:>10.4f}"
                     f"  {r['best_bw_hz']:>12.4g}  {r['best_rl_db']:>10.2f}")
    lines += [
        "",
        "final best individual:",
        f"  fit={best_rec.fit:.6g} bw_hz={best_rec.bw_hz:.6g} "
        f"rl_min_db={best_rec.rl_min_db:.4f} f_min_hz={best_fmin:.6g}",
        "seed (all-ones) reference:",
        f"  fit={seed_rec.fit:.6g} bw_hz={seed_rec.bw_hz:.6g} "
        f"rl_min_db={seed_rec.rl_min_db:.4f} f_min_hz={seed_fmin:.6g}",
        "",
        PixelMap.from_bits(state.best_bits).to_text().rstrip(),
    ]
    summary = "\n".join(lines) + "\n"
    write_atomic(run_dir / "summary.txt", summary)
    return summary
