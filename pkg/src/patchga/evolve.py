"""Genetic algorithm over 289-bit pixel chromosomes.

Chromosomes are boolean vectors of length 289; gene k maps to pixel
(row k // 17, col k % 17) with row 0 at the patch edge nearest the feed.
The generational loop is elitist (size 1): the best individual passes
unchanged, the rest of the population is bred by roulette-wheel selection,
per-gene uniform exchange crossover, and independent bit-flip mutation.
Selection is with replacement, so a parent may pair with itself.

All randomness flows through one numpy Generator owned by the GA state;
evaluations are pure functions of their arguments and may run in parallel
without touching the random stream, so outcomes are independent of the
worker count and fixed seeds reproduce entire runs bit-exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from patchga.errors import DivergenceError, ValidationError
from patchga.mesh import MeshConfig, N_PIXELS, PixelMap, SeedDimensions, build_layout
from patchga.solver import SourceSpec, injection_for_port, probe_for_port, run
from patchga.spectra import (IncidentCache, bandwidth, dft, incident_fingerprint,
                             min_return_loss, reflected_trace, s11)

log = logging.getLogger(__name__)

CHROMOSOME_LENGTH = N_PIXELS


@dataclass(frozen=True)
class FitnessConfig:
    """Weighting and targets for the combined bandwidth/return-loss fitness."""

    alpha: float = 0.5
    bw_target_hz: float = 2.0e9
    rl_target_db: float = -25.0
    bw_threshold_db: float = -10.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.bw_target_hz <= 0:
            raise ValidationError(f"bw_target_hz must be > 0, got {self.bw_target_hz}")
        if self.rl_target_db >= 0:
            raise ValidationError(f"rl_target_db must be < 0, got {self.rl_target_db}")


@dataclass(frozen=True)
class FitnessRecord:
    bw_hz: float
    rl_min_db: float
    fit: float


@dataclass(frozen=True)
class GAConfig:
    """Operator probabilities and loop settings."""

    population: int = 30
    generations: int = 30
    swap_prob: float = 0.5
    mutation_prob: float = 0.001
    seed: int = 1
    crossover_method: str = "uniform"    # or "shuffle"

    def __post_init__(self):
        if self.population < 2:
            raise ValidationError(f"population must be >= 2, got {self.population}")
        if self.generations < 0:
            raise ValidationError(f"generations must be >= 0, got {self.generations}")
        for name in ("swap_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.crossover_method not in ("uniform", "shuffle"):
            raise ValidationError(f"crossover_method must be 'uniform' or 'shuffle'")


@dataclass
class GAState:
    """Population, fitness records, RNG stream, and best-so-far individual."""

    generation: int
    population: list
    records: list
    rng: np.random.Generator
    best_bits: np.ndarray
    best_record: FitnessRecord


def random_chromosome(rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=CHROMOSOME_LENGTH).astype(bool)


def chromosome_to_pixelmap(bits) -> PixelMap:
    return PixelMap.from_bits(bits)


def pixelmap_to_chromosome(pm: PixelMap) -> np.ndarray:
    return pm.to_bits()


def fitness(bw: float, rl_min: float, cfg: FitnessConfig) -> float:
    """alpha-weighted sum of clamped bandwidth and return-loss ratios, in [0, 1]."""
    fit_bw = min(max(bw / cfg.bw_target_hz, 0.0), 1.0)
    fit_pr = min(max(rl_min / cfg.rl_target_db, 0.0), 1.0)
    return cfg.alpha * fit_bw + (1.0 - cfg.alpha) * fit_pr


def roulette_select(fitnesses, rng: np.random.Generator) -> int:
    """Fitness-proportionate index draw; uniform fallback when all are zero."""
    f = np.asarray(fitnesses, dtype=float)
    if f.size == 0:
        raise ValidationError("cannot select from an empty population")
    if np.any(f < 0):
        raise ValidationError("roulette selection requires non-negative fitnesses")
    total = f.sum()
    if total == 0.0:
        return int(rng.integers(f.size))
    r = rng.random() * total
    return int(min(np.searchsorted(np.cumsum(f), r, side="right"), f.size - 1))


def crossover(p1, p2, swap_prob: float, rng: np.random.Generator,
              method: str = "uniform") -> tuple[np.ndarray, np.ndarray]:
    """Exchange genes between two parents; children conserve the parental
    multiset at every position.

    "uniform" swaps each gene independently with probability ``swap_prob``.
    "shuffle" permutes gene positions, applies single-point crossover, and
    unshuffles; at swap_prob 0.5 both are distributionally equivalent, the
    uniform form is the default because it is simpler to seed and reason
    about (swap_prob is ignored by the shuffle form).
    """
    p1 = np.asarray(p1, dtype=bool)
    p2 = np.asarray(p2, dtype=bool)
    if p1.shape != p2.shape:
        raise ValidationError("parents must have equal length")
    n = p1.size
    if method == "uniform":
        swap = rng.random(n) < swap_prob
        return np.where(swap, p2, p1), np.where(swap, p1, p2)
    if method == "shuffle":
        perm = rng.permutation(n)
        point = int(rng.integers(1, n))
        s1, s2 = p1[perm], p2[perm]
        ch1 = np.concatenate([s1[:point], s2[point:]])
        ch2 = np.concatenate([s2[:point], s1[point:]])
        c1 = np.empty(n, dtype=bool)
        c2 = np.empty(n, dtype=bool)
        c1[perm] = ch1
        c2[perm] = ch2
        return c1, c2
    raise ValidationError(f"unknown crossover method {method!r}")


def mutate(c, p: float, rng: np.random.Generator) -> np.ndarray:
    """Independent per-bit flips with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"mutation probability must be in [0, 1], got {p}")
    c = np.asarray(c, dtype=bool)
    return c ^ (rng.random(c.size) < p)


def evaluate(chromosome, dims: SeedDimensions, cfg: MeshConfig, spec: SourceSpec,
             cache: IncidentCache, fcfg: FitnessConfig, freqs,
             bandwidth_mode: str = "minband") -> FitnessRecord:
    """Full FDTD evaluation of one individual against the cached incident run.

    Pure function of its arguments. A diverging simulation is logged and
    scored zero so the surrounding GA keeps running.
    """
    fp = incident_fingerprint(dims, cfg, spec)
    if fp != cache.fingerprint:
        raise ValidationError(
            "incident cache fingerprint does not match the current configuration"
        )
    pm = chromosome_to_pixelmap(chromosome)
    grid, port = build_layout(dims, pm, cfg)
    try:
        total = run(grid, spec.with_injection(injection_for_port(port)),
                    [probe_for_port(port)])[0]
    except DivergenceError as err:
        log.warning("individual scored 0: %s", err)
        return FitnessRecord(bw_hz=0.0, rl_min_db=0.0, fit=0.0)
    incident = cache.trace()
    refl = reflected_trace(total, incident)
    spectrum = s11(dft(refl, freqs), dft(incident, freqs), freqs)
    rl_min, _ = min_return_loss(spectrum, spec.fc)
    bw = bandwidth(spectrum, fcfg.bw_threshold_db, spec.fc, mode=bandwidth_mode)
    return FitnessRecord(bw_hz=bw, rl_min_db=rl_min, fit=fitness(bw, rl_min, fcfg))


def init_state(ga: GAConfig, evaluator, map_fn=map) -> GAState:
    """Random generation-0 population, fully evaluated."""
    rng = np.random.default_rng(ga.seed)
    population = [random_chromosome(rng) for _ in range(ga.population)]
    records = list(map_fn(evaluator, population))
    best = int(np.argmax([r.fit for r in records]))
    return GAState(
        generation=0, population=population, records=records, rng=rng,
        best_bits=population[best].copy(), best_record=records[best],
    )


def evolve_step(state: GAState, evaluator, ga: GAConfig, map_fn=map) -> GAState:
    """One elitist generation: keep the best, breed the rest, evaluate, advance.

    The elite individual carries its record (evaluation is deterministic);
    every bred child is evaluated. ``map_fn`` may distribute evaluations;
    results are merged by position so the outcome does not depend on it.
    """
    fits = np.array([r.fit for r in state.records])
    rng = state.rng
    elite_idx = int(np.argmax(fits))
    children = [state.population[elite_idx].copy()]
    while len(children) < ga.population:
        i = roulette_select(fits, rng)
        j = roulette_select(fits, rng)
        c1, c2 = crossover(state.population[i], state.population[j],
                           ga.swap_prob, rng, ga.crossover_method)
        c1 = mutate(c1, ga.mutation_prob, rng)
        c2 = mutate(c2, ga.mutation_prob, rng)
        children.append(c1)
        if len(children) < ga.population:
            children.append(c2)
    new_records = [state.records[elite_idx]]
    new_records.extend(map_fn(evaluator, children[1:]))
    best_bits, best_record = state.best_bits, state.best_record
    gen_best = int(np.argmax([r.fit for r in new_records]))
    if new_records[gen_best].fit > best_record.fit:
        best_bits = children[gen_best].copy()
        best_record = new_records[gen_best]
    return GAState(
        generation=state.generation + 1, population=children, records=new_records,
        rng=rng, best_bits=best_bits, best_record=best_record,
    )


# --- checkpoint (de)serialization -------------------------------------------

CHECKPOINT_FORMAT_VERSION = 1


def bits_to_string(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits, dtype=bool))


def string_to_bits(s: str) -> np.ndarray:
    if len(s) != CHROMOSOME_LENGTH or set(s) - {"0", "1"}:
        raise ValidationError(f"chromosome string must be {CHROMOSOME_LENGTH} of '0'/'1'")
    return np.frombuffer(s.encode(), dtype=np.uint8) == ord("1")


def state_to_json(state: GAState, config_fingerprint: str) -> str:
    """Checkpoint: generation, RNG stream position, population, records, best.

    Deliberately contains no timestamps, so identical states serialize to
    identical bytes and checkpoint-resume equals an uninterrupted run.
    """
    data = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config_fingerprint": config_fingerprint,
        "generation": state.generation,
        "rng_state": state.rng.bit_generator.state,
        "population": [bits_to_string(c) for c in state.population],
        "records": [[r.bw_hz, r.rl_min_db, r.fit] for r in state.records],
        "best": {
            "bits": bits_to_string(state.best_bits),
            "record": [state.best_record.bw_hz, state.best_record.rl_min_db,
                       state.best_record.fit],
        },
    }
    return json.dumps(data, indent=1, sort_keys=True)


def state_from_json(text: str, config_fingerprint: str) -> GAState:
    data = json.loads(text)
    if data.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValidationError("unsupported checkpoint format_version")
    if data["config_fingerprint"] != config_fingerprint:
        raise ValidationError(
            "checkpoint fingerprint does not match the current configuration; "
            "refusing to resume"
        )
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng_state"]
    records = [FitnessRecord(*map(float, r)) for r in data["records"]]
    return GAState(
        generation=int(data["generation"]),
        population=[string_to_bits(s) for s in data["population"]],
        records=records,
        rng=rng,
        best_bits=string_to_bits(data["best"]["bits"]),
        best_record=FitnessRecord(*map(float, data["best"]["record"])),
    )
