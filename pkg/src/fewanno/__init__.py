"""Desk-scale numerical kernels for few-annotation learning.

Modules: numerics (linear-algebra substrate), spectral (condition-number and
singular-value-entropy regularizers), geometry (box algebra), matching
(Hungarian solver and composite costs), losses (prototype / contrastive /
set-prediction objectives with analytic gradients), meta (episodic trainers
and analytic simulators), teachstudent (EMA teacher-student loops over
synthetic scenes), cli (experiment runner), rng (splittable seeded streams).
"""
from . import cli, errors, geometry, losses, matching, meta, numerics, rng, spectral, teachstudent

__all__ = [
    "cli",
    "errors",
    "geometry",
    "losses",
    "matching",
    "meta",
    "numerics",
    "rng",
    "spectral",
    "teachstudent",
]

__version__ = "0.1.0"
