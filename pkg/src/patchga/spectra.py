"""Port time series -> S11 spectrum, bandwidth, and minimum return loss.

S11 is obtained by the two-run subtraction method: a reference run on the
matched line (feed strip continued straight through the pixel region into
the far absorber) records the incident voltage; the antenna run records
the total; their difference is the reflected wave. The incident trace is
cached on disk keyed by a fingerprint of every parameter that affects the
reference run, so a whole optimization pays for it once.

Cache file format (versioned, JSON): ``format_version``, ``fingerprint``,
``dt``, ``n_steps``, ``samples`` (exact repr floats, round-trip lossless),
``created_utc``. See README for the layout.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from patchga.errors import ValidationError
from patchga.mesh import MeshConfig, PixelMap, SeedDimensions, build_layout
from patchga.solver import ProbeTrace, SourceSpec, injection_for_port, probe_for_port, run

CACHE_FORMAT_VERSION = 1
DB_FLOOR = -120.0
NOISE_FLOOR_REL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Complex S11 samples over a strictly increasing frequency list.

    ``valid`` flags frequencies where the incident spectrum was above the
    noise floor; invalid entries are excluded from bandwidth and minimum
    computations.
    """

    freqs: np.ndarray
    s11: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.size == 0:
            raise ValidationError("spectrum must contain at least one frequency")
        if np.any(np.diff(f) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "s11", np.asarray(self.s11, dtype=complex))
        object.__setattr__(self, "valid", np.asarray(self.valid, dtype=bool))
        if not (len(self.s11) == len(f) == len(self.valid)):
            raise ValidationError("frequency, S11, and validity arrays must have equal length")

    @property
    def db(self) -> np.ndarray:
        """Magnitude in dB, floored at DB_FLOOR for vanishing S11."""
        mag = np.abs(self.s11)
        with np.errstate(divide="ignore"):
            out = 20.0 * np.log10(mag)
        return np.maximum(out, DB_FLOOR)

    def to_csv(self) -> str:
        lines = ["freq_hz,s11_re,s11_im,s11_db"]
        db = self.db
        for f, s, d in zip(self.freqs, self.s11, db):
            lines.append(f"{f:.17g},{s.real:.17g},{s.imag:.17g},{d:.17g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class IncidentCache:
    """Reference-run port trace plus the fingerprint it was recorded under."""

    fingerprint: str
    dt: float
    samples: np.ndarray
    created_utc: str

    def trace(self) -> ProbeTrace:
        return ProbeTrace(probe_id="incident", samples=self.samples, dt=self.dt)


def incident_fingerprint(dims: SeedDimensions, cfg: MeshConfig, spec: SourceSpec) -> str:
    """Hash of every parameter that affects the matched-line reference run.

    The inset gap and depth are deliberately excluded: with no patch metal
    and a full-length strip they cannot influence the incident trace.
    """
    payload = {
        "dims": {"w": dims.w, "l": dims.l, "w1": dims.w1, "eps_r": dims.eps_r, "h": dims.h},
        "mesh": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "source": {"e0": spec.e0, "t0": spec.t0, "fc": spec.fc, "fb": spec.fb,
                   "n_steps": spec.n_steps},
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def record_incident(dims: SeedDimensions, cfg: MeshConfig, spec: SourceSpec) -> IncidentCache:
    """Run the matched-line reference and capture the incident port trace."""
    grid, port = build_layout(dims, PixelMap.zeros(), cfg, feed_through=True)
    full_spec = spec.with_injection(injection_for_port(port))
    trace = run(grid, full_spec, [probe_for_port(port, "incident")])[0]
    return IncidentCache(
        fingerprint=incident_fingerprint(dims, cfg, spec),
        dt=trace.dt,
        samples=trace.samples,
        created_utc=datetime.now(timezone.utc).isoformat(),
    )


def save_cache(cache: IncidentCache, path: str | Path):
    data = {
        "format_version": CACHE_FORMAT_VERSION,
        "fingerprint": cache.fingerprint,
        "dt": cache.dt,
        "n_steps": len(cache.samples),
        "samples": [float(v) for v in cache.samples],
        "created_utc": cache.created_utc,
    }
    write_atomic(Path(path), json.dumps(data))


def load_cache(path: str | Path) -> IncidentCache:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format_version") != CACHE_FORMAT_VERSION:
        raise ValidationError(f"unsupported cache format_version in {path}")
    samples = np.asarray(data["samples"], dtype=float)
    if len(samples) != data["n_steps"]:
        raise ValidationError(f"cache {path} is corrupt: sample count mismatch")
    return IncidentCache(
        fingerprint=data["fingerprint"], dt=float(data["dt"]),
        samples=samples, created_utc=data.get("created_utc", ""),
    )


def load_or_record(dims: SeedDimensions, cfg: MeshConfig, spec: SourceSpec,
                   cache_dir: str | Path) -> IncidentCache:
    """Reuse the on-disk incident trace when the fingerprint matches, else record."""
    fp = incident_fingerprint(dims, cfg, spec)
    path = Path(cache_dir) / f"incident_{fp[:16]}.json"
    if path.exists():
        cache = load_cache(path)
        if cache.fingerprint == fp:
            return cache
    cache = record_incident(dims, cfg, spec)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    save_cache(cache, path)
    return cache


def write_atomic(path: Path, text: str):
    """Write via temp file + rename so interrupted runs never truncate artifacts."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def reflected_trace(total: ProbeTrace, incident: ProbeTrace) -> ProbeTrace:
    """Pointwise total - incident."""
    if len(total.samples) != len(incident.samples):
        raise ValidationError(
            f"trace length mismatch: total has {len(total.samples)}, "
            f"incident has {len(incident.samples)}"
        )
    if total.dt != incident.dt:
        raise ValidationError(f"trace dt mismatch: {total.dt} vs {incident.dt}")
    return ProbeTrace(probe_id="reflected", samples=total.samples - incident.samples,
                      dt=total.dt)


def dft(trace: ProbeTrace, freqs) -> np.ndarray:
    """Discrete-time Fourier transform at arbitrary frequencies.

    X(f) = sum_n x[n] exp(-i 2 pi f n dt) dt; no FFT-grid constraint, so
    the frequency list is independent of the number of time steps.
    """
    x = np.asarray(trace.samples, dtype=float)
    if x.size == 0:
        raise ValidationError("cannot transform an empty trace")
    freqs = np.asarray(freqs, dtype=float)
    nyquist = 0.5 / trace.dt
    if np.any(freqs <= 0) or np.any(freqs >= nyquist):
        raise ValidationError(
            f"frequencies must lie strictly inside (0, {nyquist:.6g} Hz)"
        )
    n = np.arange(x.size) * trace.dt
    out = np.empty(freqs.size, dtype=complex)
    chunk = 64
    for i in range(0, freqs.size, chunk):
        f = freqs[i:i + chunk]
        out[i:i + chunk] = np.exp(-2j * np.pi * np.outer(f, n)) @ x
    return out * trace.dt


def s11(reflected_spec, incident_spec, freqs,
        noise_floor_rel: float = NOISE_FLOOR_REL) -> Spectrum:
    """Frequency-wise reflected/incident ratio with a noise-floor guard.

    Frequencies where the incident magnitude falls below ``noise_floor_rel``
    times its peak are flagged invalid (the Morlet envelope carries no
    energy there and the division is meaningless).
    """
    refl = np.asarray(reflected_spec, dtype=complex)
    inc = np.asarray(incident_spec, dtype=complex)
    if refl.shape != inc.shape:
        raise ValidationError("reflected and incident spectra must have equal length")
    floor = noise_floor_rel * np.abs(inc).max() if inc.size else 0.0
    valid = np.abs(inc) >= floor
    ratio = np.zeros_like(refl)
    np.divide(refl, inc, out=ratio, where=valid)
    return Spectrum(freqs=freqs, s11=ratio, valid=valid)


def min_return_loss(spec: Spectrum, fc: float) -> tuple[float, float]:
    """(minimum dB magnitude, frequency of the minimum); ties go nearest fc."""
    db = spec.db
    if not spec.valid.any():
        raise ValidationError("spectrum has no valid frequencies")
    vdb = np.where(spec.valid, db, np.inf)
    best = vdb.min()
    candidates = np.nonzero(vdb == best)[0]
    pick = candidates[np.argmin(np.abs(spec.freqs[candidates] - fc))]
    return float(db[pick]), float(spec.freqs[pick])


def _band_edges(freqs, db, i_lo, i_hi, threshold_db):
    """Linear-interpolated crossing frequencies around the run [i_lo, i_hi].

    A run touching the spectrum edge, or bounded by an invalid (inf) sample,
    is truncated at the run's own sample.
    """
    if i_lo == 0 or np.isinf(db[i_lo - 1]):
        f_lo = freqs[i_lo]
    else:
        f0, f1, d0, d1 = freqs[i_lo - 1], freqs[i_lo], db[i_lo - 1], db[i_lo]
        f_lo = f0 + (threshold_db - d0) * (f1 - f0) / (d1 - d0) if d1 != d0 else f1
    if i_hi == len(freqs) - 1 or np.isinf(db[i_hi + 1]):
        f_hi = freqs[i_hi]
    else:
        f0, f1, d0, d1 = freqs[i_hi], freqs[i_hi + 1], db[i_hi], db[i_hi + 1]
        f_hi = f0 + (threshold_db - d0) * (f1 - f0) / (d1 - d0) if d1 != d0 else f0
    return f_lo, f_hi


def bandwidth(spec: Spectrum, threshold_db: float = -10.0, fc: float = 16.0e9,
              mode: str = "minband") -> float:
    """Width (Hz) of the sub-threshold band containing the global minimum.

    Band edges are located by linear interpolation between samples; a band
    touching the spectrum edge is truncated there. ``mode="union"`` sums
    every sub-threshold band instead of just the one holding the minimum.
    Returns 0 when the global minimum sits above the threshold. Invalid
    frequencies act as band barriers.
    """
    if not spec.freqs.min() <= fc <= spec.freqs.max():
        raise ValidationError(f"fc={fc} lies outside the spectrum span")
    if mode not in ("minband", "union"):
        raise ValidationError(f"unknown bandwidth mode {mode!r}")
    db = np.where(spec.valid, spec.db, np.inf)
    rl_min, f_min = min_return_loss(spec, fc)
    if rl_min > threshold_db:
        return 0.0
    inside = db <= threshold_db

    def run_width(idx):
        i_lo = idx
        while i_lo > 0 and inside[i_lo - 1]:
            i_lo -= 1
        i_hi = idx
        while i_hi < len(inside) - 1 and inside[i_hi + 1]:
            i_hi += 1
        return _band_edges(spec.freqs, db, i_lo, i_hi, threshold_db)

    if mode == "minband":
        i_min = int(np.argmin(np.abs(spec.freqs - f_min)))
        f_lo, f_hi = run_width(i_min)
        return float(f_hi - f_lo)

    total = 0.0
    i = 0
    while i < len(inside):
        if inside[i]:
            f_lo, f_hi = run_width(i)
            total += f_hi - f_lo
            while i < len(inside) and inside[i]:
                i += 1
        else:
            i += 1
    return float(total)
