"""Bring two dressed SiV spins onto a common cavity frequency.

Each SiV has bare splitting ``epsilon * B`` and dressed Rabi ``eta_drive * A``
for field ``B`` (kG) and dressing amplitude ``A``. Its lower dressed
resonance is

    w~ = w_A + D/2 - sqrt((D/2)**2 + Omega**2),   D = epsilon*B - w_A,

and ``solve_pair`` finds ``(B, A)`` putting both at ``omega_C``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.optimize import brentq

from ._validation import check_finite, check_nonnegative, check_positive

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SivInstance:
    epsilon: float      # Hz / kG
    eta_drive: float    # Hz per unit amplitude

    def __post_init__(self):
        check_positive(self.epsilon, "epsilon")
        check_positive(self.eta_drive, "eta_drive")


@dataclass(frozen=True)
class CavitySpec:
    omega_A: float
    omega_C: float

    def __post_init__(self):
        check_positive(self.omega_A, "omega_A")
        check_positive(self.omega_C, "omega_C")
        if self.omega_A == self.omega_C:
            raise ValueError("omega_A and omega_C must differ")


@dataclass(frozen=True)
class TuningSolution:
    B: float
    A: float
    residuals: Tuple[float, float]
    converged: bool
    iterations: int = 0
    roots: Tuple[Tuple[float, float], ...] = ()
    message: str = ""

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.residuals)

    def records(self):
        out = [("B", self.B, "kG"), ("A", self.A, "a.u."),
               ("residual_1", self.residuals[0], "Hz"),
               ("residual_2", self.residuals[1], "Hz"),
               ("converged", int(self.converged), "flag"),
               ("iterations", self.iterations, "count")]
        for k, (b, a) in enumerate(self.roots):
            out += [(f"root_{k}_B", b, "kG"), (f"root_{k}_A", a, "a.u.")]
        return out


def dressed_resonance(omega_i, omega_A, Omega_i, branch="lower"):
    """Dressed resonance of a spin at ``omega_i`` driven at ``omega_A`` (Hz)."""
    check_nonnegative(Omega_i, "Omega_i")
    if branch not in ("lower", "upper"):
        raise ValueError(f"branch must be 'lower' or 'upper', got {branch!r}")
    half = 0.5 * (np.asarray(omega_i, dtype=float) - omega_A)
    root = np.hypot(half, Omega_i)
    out = omega_A + half - root if branch == "lower" else omega_A + half + root
    return out if np.ndim(out) else float(out)


def _residuals(x, sivs, cavity):
    B, A = x
    return np.array([
        dressed_resonance(s.epsilon * B, cavity.omega_A, s.eta_drive * A) - cavity.omega_C
        for s in sivs
    ])


def _jacobian(x, sivs, cavity):
    B, A = x
    J = np.empty((2, 2))
    for i, s in enumerate(sivs):
        half = 0.5 * (s.epsilon * B - cavity.omega_A)
        om = s.eta_drive * A
        root = math.hypot(half, om)
        if root == 0:
            J[i] = (0.5 * s.epsilon, 0.0)
            continue
        J[i, 0] = s.epsilon * (0.5 - 0.5 * half / root)
        J[i, 1] = -s.eta_drive * om / root
    return J


def _amplitude_for(siv, B, cavity):
    """Amplitude putting ``siv`` on the cavity at field ``B``, or nan."""
    c = cavity.omega_C - cavity.omega_A
    delta = siv.epsilon * B - cavity.omega_A
    om2 = c * c - c * delta
    if c >= 0 or om2 < 0:
        return math.nan
    return math.sqrt(om2) / siv.eta_drive


def _bracket_roots(sivs, cavity, n_grid=4000):
    """All sign changes of the reduced one-dimensional residual in ``B``."""
    s1, s2 = sivs
    c = cavity.omega_C - cavity.omega_A
    if c >= 0:
        return []
    b_lo = cavity.omega_C / s1.epsilon
    b_hi = 4.0 * max(cavity.omega_A / s.epsilon for s in sivs)

    def g(B):
        A = _amplitude_for(s1, B, cavity)
        if not math.isfinite(A):
            return math.nan
        return dressed_resonance(s2.epsilon * B, cavity.omega_A, s2.eta_drive * A) - cavity.omega_C

    grid = np.linspace(b_lo, b_hi, n_grid)
    vals = np.array([g(b) for b in grid])
    roots = []
    for k in range(n_grid - 1):
        a, b = vals[k], vals[k + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0:
            B = grid[k]
        elif a * b < 0:
            B = brentq(g, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            continue
        A = _amplitude_for(s1, B, cavity)
        if B > 0 and A > 0:
            roots.append((float(B), float(A)))
    return roots


def _newton(x0, sivs, cavity, tol, max_iter=100):
    x = np.array(x0, dtype=float)
    f = _residuals(x, sivs, cavity)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(f)) < tol * 1e-6:
            return x, f, it - 1
        J = _jacobian(x, sivs, cavity)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            return x, f, it
        lam = 1.0
        norm = np.linalg.norm(f)
        while lam > 1e-10:
            trial = x + lam * step
            if trial[0] > 0 and trial[1] > 0:
                ft = _residuals(trial, sivs, cavity)
                if np.linalg.norm(ft) < norm:
                    break
            lam *= 0.5
        else:
            return x, f, it
        x, f = trial, ft
    return x, f, max_iter


def _proportional(s1, s2, rtol=1e-12):
    return abs(s1.epsilon * s2.eta_drive - s2.epsilon * s1.eta_drive) <= rtol * s1.epsilon * s2.eta_drive


def solve_pair(siv1: SivInstance, siv2: SivInstance, cavity: CavitySpec,
               tol=1e3) -> TuningSolution:
    """Solve for ``(B, A)`` bringing both lower dressed resonances to ``omega_C``.

    Identical instances get the zero-detuning closed form. Proportional but
    distinct instances are rejected. Otherwise a damped Newton iteration
    starts from the averaged zero-detuning guess; if it leaves the physical
    quadrant or stalls, the bracketed root nearest that guess is used.
    Every bracketed root is reported in ``roots``.
    """
    check_positive(tol, "tol")
    sivs = (siv1, siv2)
    wA, wC = cavity.omega_A, cavity.omega_C

    if siv1 == siv2:
        B, A = wA / siv1.epsilon, (wA - wC) / siv1.eta_drive
        if A <= 0:
            res = tuple(float(r) for r in _residuals((B, 0.0), sivs, cavity))
            return TuningSolution(B, 0.0, res, False, message="omega_C above omega_A: lower branch cannot reach it")
        res = tuple(float(r) for r in _residuals((B, A), sivs, cavity))
        return TuningSolution(B, A, res, max(map(abs, res)) < tol, roots=((B, A),),
                              message="identical instances; zero-detuning solution")
    if _proportional(siv1, siv2):
        raise ValueError("instances are proportional (epsilon ratio equals eta ratio); the pair is degenerate")

    guess = (float(np.mean([wA / s.epsilon for s in sivs])),
             max(float(np.mean([(wA - wC) / s.eta_drive for s in sivs])), 1e-12))
    roots = tuple(sorted(_bracket_roots(sivs, cavity)))
    x, f, iters = _newton(guess, sivs, cavity, tol)
    ok = x[0] > 0 and x[1] > 0 and np.max(np.abs(f)) < tol
    message = "damped Newton from zero-detuning guess"
    if not ok and roots:
        scale = np.array(guess)
        best = min(roots, key=lambda r: float(np.sum(((np.array(r) - scale) / scale) ** 2)))
        x, f, more = _newton(best, sivs, cavity, tol)
        iters += more
        ok = x[0] > 0 and x[1] > 0 and np.max(np.abs(f)) < tol
        message = "Newton stalled; polished nearest bracketed root"
    if not ok:
        if not roots:
            message = "no root in the physical quadrant"
        log.warning("tuning solver did not converge: %s", message)
    return TuningSolution(float(x[0]), float(x[1]), (float(f[0]), float(f[1])), bool(ok),
                          iterations=iters, roots=roots, message=message)
