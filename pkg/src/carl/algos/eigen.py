"""Eigen transforms between conditional values and their decoupled forms.

``(V0, V1) -> (Ga, Gb)`` with ``Ga = V0 - V1`` and ``Gb = d0 V0 + (1 - d0) V1``.
The same map takes ``(Q0, Q1)`` to ``(La, Lb)``, and :func:`recover_q` is its
inverse.  All functions broadcast over numpy arrays.
"""
from __future__ import annotations

import numpy as np


def eigen_immediate(v0, v1, d0):
    """Difference and ``d0``-weighted mean of the two conditional values."""
    check_d0(d0)
    return v0 - v1, d0 * v0 + (1.0 - d0) * v1


def recover_q(lambda_a, lambda_b, d0):
    """Invert the eigen transform: ``q0 = (1-d0) La + Lb``, ``q1 = -d0 La + Lb``."""
    return (1.0 - d0) * lambda_a + lambda_b, -d0 * lambda_a + lambda_b


def check_d0(d0) -> None:
    d0 = np.asarray(d0, dtype=float)
    if np.any(~np.isfinite(d0)) or np.any(d0 < 0.0) or np.any(d0 > 1.0):
        raise ValueError("d0 must lie in [0, 1]")
