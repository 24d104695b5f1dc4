"""Pixelated microstrip patch antenna optimizer.

Design a rectangular inset-fed patch from closed-form models, simulate it
with a 3D FDTD solver (UPML-truncated), extract S11 by incident-field
subtraction, and evolve a 17x17 pixel metal map with a genetic algorithm
to improve bandwidth and return loss around a target frequency.
"""

from patchga.errors import DivergenceError, ValidationError

__version__ = "0.1.0"

__all__ = ["DivergenceError", "ValidationError", "__version__"]
