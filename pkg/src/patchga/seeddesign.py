"""Closed-form inset-fed rectangular patch design.

Transmission-line width/length formulas with the standard fringing
correction, single-slot conductance for the edge resistance (mutual slot
conductance omitted), inset depth from the cos^2 resistance taper, and the
usual two-branch microstrip width synthesis for the feed line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from patchga.constants import C0
from patchga.errors import ValidationError
from patchga.mesh import SeedDimensions

MM = 1e-3


@dataclass(frozen=True)
class DesignResult:
    """Seed dimensions plus the intermediates of the closed-form design."""

    dims: SeedDimensions
    eps_eff: float
    delta_l: float
    g1: float          # single radiating-slot conductance (S)
    rin0: float        # edge input resistance 1/(2*G1) (ohm)


def paper_seed() -> SeedDimensions:
    """The fixed Ku-band seed geometry the optimization starts from."""
    return SeedDimensions(
        w=11.70 * MM, l=8.87 * MM, w1=1.40 * MM,
        g=0.70 * MM, y0=1.33 * MM, eps_r=2.2, h=0.76 * MM,
    )


def _adaptive_simpson(f, a, b, rel_tol=1e-8, max_depth=40):
    """Adaptive Simpson quadrature with interval-halving error control."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, scale, depth):
        xm = 0.5 * (x0 + x2)
        xl, xr = 0.5 * (x0 + xm), 0.5 * (xm + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * rel_tol * scale:
            return left + right + (left + right - whole) / 15.0
        return (recurse(x0, xm, f0, fl, f1, left, scale, depth + 1)
                + recurse(xm, x2, f1, fr, f2, right, scale, depth + 1))

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    scale = abs(whole) if whole != 0 else 1.0
    return recurse(a, b, fa, fm, fb, whole, scale, 0)


def slot_conductance(w: float, fc: float) -> float:
    """Radiation conductance of a single patch edge slot of width ``w``."""
    k0 = 2.0 * math.pi * fc / C0
    x = k0 * w / 2.0

    def integrand(theta):
        c = math.cos(theta)
        if abs(c) < 1e-12:
            core = x                      # sin(x*c)/c -> x as c -> 0
        else:
            core = math.sin(x * c) / c
        return core * core * math.sin(theta) ** 3

    i1 = _adaptive_simpson(integrand, 0.0, math.pi)
    return i1 / (120.0 * math.pi**2)


def microstrip_width(z0: float, eps_r: float, h: float) -> float:
    """Synthesize the microstrip width for a target characteristic impedance."""
    a = z0 / 60.0 * math.sqrt((eps_r + 1.0) / 2.0) + (eps_r - 1.0) / (eps_r + 1.0) * (
        0.23 + 0.11 / eps_r
    )
    w_over_h = 8.0 * math.exp(a) / (math.exp(2.0 * a) - 2.0)
    if w_over_h >= 2.0:
        b = 377.0 * math.pi / (2.0 * z0 * math.sqrt(eps_r))
        w_over_h = (2.0 / math.pi) * (
            b - 1.0 - math.log(2.0 * b - 1.0)
            + (eps_r - 1.0) / (2.0 * eps_r) * (math.log(b - 1.0) + 0.39 - 0.61 / eps_r)
        )
    return w_over_h * h


def design_patch(fc: float, eps_r: float, h: float, z0: float = 50.0) -> DesignResult:
    """Compute inset-fed patch dimensions for resonance at ``fc``.

    Raises ValidationError when the edge resistance falls below ``z0``
    (no inset depth can then realize the match; pick the inset manually).
    """
    if fc <= 0:
        raise ValidationError(f"fc must be > 0, got {fc}")
    if eps_r < 1:
        raise ValidationError(f"eps_r must be >= 1, got {eps_r}")
    if h <= 0:
        raise ValidationError(f"h must be > 0, got {h}")
    if z0 <= 0:
        raise ValidationError(f"z0 must be > 0, got {z0}")

    w = (C0 / (2.0 * fc)) * math.sqrt(2.0 / (eps_r + 1.0))
    eps_eff = (eps_r + 1.0) / 2.0 + (eps_r - 1.0) / 2.0 / math.sqrt(1.0 + 12.0 * h / w)
    delta_l = (
        0.412 * h
        * (eps_eff + 0.3) * (w / h + 0.264)
        / ((eps_eff - 0.258) * (w / h + 0.8))
    )
    l = C0 / (2.0 * fc * math.sqrt(eps_eff)) - 2.0 * delta_l
    if l <= 0:
        raise ValidationError(f"h={h} is too thick relative to the wavelength: patch length <= 0")

    g1 = slot_conductance(w, fc)
    rin0 = 1.0 / (2.0 * g1)
    if rin0 < z0:
        raise ValidationError(
            f"edge resistance rin0={rin0:.1f} ohm is below z0={z0} ohm; "
            "the inset formula has no solution, choose the inset manually"
        )
    y0 = (l / math.pi) * math.acos(math.sqrt(z0 / rin0))
    w1 = microstrip_width(z0, eps_r, h)
    g = w1 / 2.0

    dims = SeedDimensions(w=w, l=l, w1=w1, g=g, y0=y0, eps_r=eps_r, h=h)
    return DesignResult(dims=dims, eps_eff=eps_eff, delta_l=delta_l, g1=g1, rin0=rin0)
