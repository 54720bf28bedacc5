"""Small argument checks shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


def check_finite(value, name):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def check_nonnegative(value, name):
    check_finite(value, name)
    if np.any(np.asarray(value, dtype=float) < 0):
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return value


def check_positive(value, name):
    check_finite(value, name)
    if np.any(np.asarray(value, dtype=float) <= 0):
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return value


def check_fraction(value, name):
    check_finite(value, name)
    if not 0.0 <= float(value) <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_grid(grid, name="grid", min_points=2):
    """Return ``grid`` as a 1-D float array that is strictly increasing."""
    arr = np.asarray(grid, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {arr.size}")
    check_finite(arr, name)
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


def check_state(psi, atol=1e-6):
    """Validate a (batch of) normalized 2-component state vectors."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1:] != (2,):
        raise ValueError(f"state must have trailing dimension 2, got shape {psi.shape}")
    norm = np.linalg.norm(psi, axis=-1)
    if np.any(np.abs(norm - 1.0) > atol):
        worst = float(np.max(np.abs(norm - 1.0)))
        raise ValueError(f"state is not normalized (norm deviation {worst:.3e})")
    return psi


def check_density(rho, atol=1e-9):
    """Validate a (batch of) 2x2 density matrices."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (2, 2):
        raise ValueError(f"density matrix must be 2x2, got shape {rho.shape}")
    if np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))), initial=0.0) > atol:
        raise ValueError("density matrix is not Hermitian")
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    if np.any(np.abs(tr - 1.0) > atol):
        raise ValueError("density matrix trace differs from 1")
    if np.any(np.linalg.eigvalsh(rho) < -atol):
        raise ValueError("density matrix has a negative eigenvalue")
    return rho
