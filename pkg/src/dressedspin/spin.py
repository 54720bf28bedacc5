"""Driven two-level spin: Hamiltonians, frames, resonances and analytic rates.

Conventions
-----------
Frequencies handed in by callers are linear (Hz). Hamiltonians come back in
angular units (rad/s), so ``exp(-1j * H * t)`` is the propagator.

The bare basis is ordered ``(|0>, |1>)`` with ``|1>`` the upper Zeeman level,
so ``SIGMA_Z = |1><1| - |0><0| = diag(-1, 1)`` and the free Hamiltonian
``(omega/2) SIGMA_Z`` puts ``|1>`` at ``+omega/2``. ``SIGMA_Y`` is chosen so the
Pauli algebra closes, ``[SIGMA_X, SIGMA_Y] = 2i SIGMA_Z``.

Dressed amplitudes are ``c_+ = (c_0 + e^{i w t} c_1)/sqrt(2)`` and
``c_- = (-c_0 + e^{i w t} c_1)/sqrt(2)``. The ``DRESSED_*`` operators are the
ordinary Pauli matrices written in the ``(c_+, c_-)`` basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv

from ._validation import check_nonnegative, check_positive, check_state

TWO_PI = 2.0 * np.pi
SQRT_HALF = np.sqrt(0.5)

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)

DRESSED_X = np.array([[0, 1], [1, 0]], dtype=complex)
DRESSED_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
DRESSED_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# Columns are |+> and |-> expressed in the bare basis at t = 0.
DRESSED_BASIS = SQRT_HALF * np.array([[1, -1], [1, 1]], dtype=complex)

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
# |+> and |-> in the bare basis at t = 0 (the dressed-basis vectors are just
# (1, 0) and (0, 1)).
BARE_PLUS = DRESSED_BASIS[:, 0].copy()
BARE_MINUS = DRESSED_BASIS[:, 1].copy()


class PerturbativeValidityWarning(UserWarning):
    """An analytic estimate was evaluated outside its small-parameter regime."""


@dataclass(frozen=True, eq=False)
class DriveField:
    """One acoustic drive tone.

    ``omega_x`` and ``lambda_z`` are the transverse and longitudinal Rabi
    amplitudes in Hz, so the tone adds ``[omega_x SIGMA_X + lambda_z SIGMA_Z]
    cos(2 pi frequency t + phase)`` (times 2 pi) to the Hamiltonian. Amplitudes
    and frequency may be arrays, which broadcast as a batch axis.
    """

    omega_x: float | np.ndarray
    frequency: float | np.ndarray
    lambda_z: float | np.ndarray = 0.0
    phase: float = 0.0
    window: Optional[tuple[float, float]] = None
    role: str = "probing"

    def __post_init__(self):
        check_nonnegative(self.omega_x, "omega_x")
        check_nonnegative(self.lambda_z, "lambda_z")
        check_positive(self.frequency, "frequency")
        if self.role not in ("dressing", "probing"):
            raise ValueError(f"role must be 'dressing' or 'probing', got {self.role!r}")
        if self.window is not None:
            start, stop = self.window
            if not stop > start:
                raise ValueError(f"drive window stop must exceed start, got {self.window}")

    def active(self, t):
        """Boolean mask of times at which the drive is on."""
        t = np.asarray(t, dtype=float)
        if self.window is None:
            return np.ones(t.shape, dtype=bool)
        start, stop = self.window
        return (t >= start) & (t < stop)

    def with_(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return DriveField(**values)

    @property
    def max_frequency(self):
        return float(np.max(self.frequency))


@dataclass(frozen=True)
class OrbitalBranch:
    """Upper orbital branch, reduced to an off-resonant perturbation."""

    splitting: float = 50e9
    orbital_rabi: float = 3e9
    gamma: float = 30e6

    def __post_init__(self):
        check_positive(self.splitting, "splitting")
        check_nonnegative(self.orbital_rabi, "orbital_rabi")
        check_positive(self.gamma, "gamma")


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Bare splitting ``omega`` (Hz) plus any number of drive tones."""

    omega: float
    drives: tuple = field(default_factory=tuple)
    orbital: Optional[OrbitalBranch] = None

    def __post_init__(self):
        check_positive(self.omega, "omega")
        object.__setattr__(self, "drives", tuple(self.drives))
        for d in self.drives:
            if not isinstance(d, DriveField):
                raise TypeError("drives must be DriveField instances")
        if sum(d.role == "dressing" for d in self.drives) > 1:
            raise ValueError("at most one drive may be the dressing field")

    @property
    def dressing(self) -> Optional[DriveField]:
        for d in self.drives:
            if d.role == "dressing":
                return d
        return None

    @property
    def probes(self) -> tuple:
        return tuple(d for d in self.drives if d.role == "probing")

    @property
    def is_dressed(self):
        return self.dressing is not None

    @property
    def max_frequency(self):
        return max([float(self.omega)] + [d.max_frequency for d in self.drives])

    def with_drives(self, drives: Sequence[DriveField]) -> "SpinSystem":
        return SpinSystem(self.omega, tuple(drives), self.orbital)

    def resonances(self) -> "ResonanceSet":
        d = self.dressing
        return resonance_set(self.omega, 0.0 if d is None else float(d.omega_x))


@dataclass(frozen=True)
class ResonanceSet:
    """The three probe frequencies that rotate the dressed states."""

    omega: float
    omega_D: float

    @property
    def low(self):
        return self.omega_D

    @property
    def lower_sideband(self):
        return self.omega - self.omega_D

    @property
    def upper_sideband(self):
        return self.omega + self.omega_D

    @property
    def frequencies(self) -> tuple:
        return (self.low, self.lower_sideband, self.upper_sideband)

    def detunings(self, omega_p):
        """Return ``(Delta_+, Delta_-) = (omega + omega_p, omega - omega_p)``."""
        return self.omega + omega_p, self.omega - omega_p


def _drive_terms(drive: DriveField, t):
    """Coefficients multiplying SIGMA_X and SIGMA_Z for one tone (angular)."""
    t = np.asarray(t, dtype=float)
    freq = np.asarray(drive.frequency, dtype=float)
    shape = np.broadcast_shapes(t.shape, freq.shape, np.shape(drive.omega_x), np.shape(drive.lambda_z))
    c = np.cos(TWO_PI * freq * t + drive.phase) * drive.active(t)
    cx = np.broadcast_to(TWO_PI * np.asarray(drive.omega_x) * c, shape)
    cz = np.broadcast_to(TWO_PI * np.asarray(drive.lambda_z) * c, shape)
    return cx, cz


def pauli_sum(cx, cy, cz, c0=0.0):
    """Assemble ``c0 I + cx X + cy Y + cz Z`` in the bare basis, batched."""
    cx, cy, cz, c0 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (cx, cy, cz, c0)))
    H = np.empty(cx.shape + (2, 2), dtype=complex)
    H[..., 0, 0] = c0 - cz
    H[..., 1, 1] = c0 + cz
    H[..., 0, 1] = cx + 1j * cy
    H[..., 1, 0] = cx - 1j * cy
    return H


def lab_hamiltonian(system: SpinSystem, t, eta=0.0):
    """Lab-frame Hamiltonian in rad/s, shape ``broadcast(t, batch) + (2, 2)``.

    ``eta`` (Hz) adds the dephasing term ``eta SIGMA_Z``; it may be an array
    broadcasting against ``t``.
    """
    t = np.asarray(t, dtype=float)
    cz = np.pi * system.omega + TWO_PI * np.asarray(eta, dtype=float) + np.zeros(t.shape)
    cx = np.zeros(t.shape)
    for drive in system.drives:
        dx, dz = _drive_terms(drive, t)
        cx = cx + dx
        cz = cz + dz
    return pauli_sum(cx, 0.0, cz)


def rwa_hamiltonian(omega_D, omega_P, t, *, drive_frequency=None, phase=0.0):
    """Dressed-frame RWA Hamiltonian in rad/s, dressed basis ``(c_+, c_-)``.

    Returns ``(omega_D/2) sz + (omega_P/2) sin(2 pi f t + phase) sy`` with
    ``f = omega - omega_p`` defaulting to ``omega_D`` (probe on the lower
    sideband). Shape follows ``t``.
    """
    check_nonnegative(omega_D, "omega_D")
    check_nonnegative(omega_P, "omega_P")
    t = np.asarray(t, dtype=float)
    f = omega_D if drive_frequency is None else drive_frequency
    s = np.sin(TWO_PI * f * t + phase)
    H = np.zeros(t.shape + (2, 2), dtype=complex)
    H += np.pi * omega_D * DRESSED_Z
    H += (np.pi * omega_P * s)[..., None, None] * DRESSED_Y
    return H


def _frame_phase(omega, t):
    return np.exp(1j * TWO_PI * np.asarray(omega, dtype=float) * np.asarray(t, dtype=float))


def to_dressed(state, omega, t=0.0):
    """Map bare amplitudes ``(c_0, c_1)`` to dressed ``(c_+, c_-)``."""
    psi = check_state(state)
    e = _frame_phase(omega, t)
    c0, c1 = psi[..., 0], e * psi[..., 1]
    return np.stack([(c0 + c1) * SQRT_HALF, (c1 - c0) * SQRT_HALF], axis=-1)


def from_dressed(state, omega, t=0.0):
    """Inverse of :func:`to_dressed`."""
    psi = check_state(state)
    cp, cm = psi[..., 0], psi[..., 1]
    e = _frame_phase(omega, t)
    return np.stack([(cp - cm) * SQRT_HALF, np.conj(e) * (cp + cm) * SQRT_HALF], axis=-1)


def dressing_unitary(omega, t=0.0):
    """Matrix ``W`` with ``psi_dressed = W @ psi_bare`` at time ``t``."""
    e = _frame_phase(omega, t)
    W = np.empty(np.shape(e) + (2, 2), dtype=complex)
    W[..., 0, 0] = SQRT_HALF
    W[..., 0, 1] = SQRT_HALF * e
    W[..., 1, 0] = -SQRT_HALF
    W[..., 1, 1] = SQRT_HALF * e
    return W


def resonance_set(omega, omega_D) -> ResonanceSet:
    """Probe frequencies ``{omega_D, omega - omega_D, omega + omega_D}``."""
    check_positive(omega, "omega")
    check_nonnegative(omega_D, "omega_D")
    if omega_D >= omega:
        raise ValueError(
            f"dressing Rabi frequency {omega_D:g} Hz must be below the bare splitting {omega:g} Hz"
        )
    return ResonanceSet(float(omega), float(omega_D))


def sideband_rabi(omega_P, omega_D):
    """Dressed Rabi rate (Hz) of a transverse probe on the ``w +- omega_D`` sideband.

    Beyond ``omega_P / 2``, the probe also modulates the dressed splitting
    through its ``cos(omega_D t)`` longitudinal part. The modulation index is
    ``b = omega_P / omega_D``, and it rescales the resonant coupling by
    ``J0(b) - J2(b)``.
    """
    check_nonnegative(omega_P, "omega_P")
    check_positive(omega_D, "omega_D")
    b = omega_P / omega_D
    return 0.5 * omega_P * (jv(0, b) - jv(2, b))


def sideband_amplitude(rabi, omega_D):
    """Inverse of :func:`sideband_rabi` on its monotonic branch."""
    check_nonnegative(rabi, "rabi")
    check_positive(omega_D, "omega_D")
    if rabi == 0:
        return 0.0
    # (J0 - J2)(b) * b / 2 peaks near b = 1.43; stay below it.
    hi = 1.4 * omega_D
    if rabi > sideband_rabi(hi, omega_D):
        raise ValueError(f"sideband Rabi rate {rabi:g} Hz is out of reach for omega_D = {omega_D:g} Hz")
    return brentq(lambda x: sideband_rabi(x, omega_D) - rabi, 0.0, hi, xtol=1e-9 * rabi, rtol=1e-14)


def orbital_decoherence_rate(branch: OrbitalBranch) -> float:
    """Effective decay ``gamma * (Omega_orb / Delta_orb)**2`` in Hz."""
    ratio = branch.orbital_rabi / branch.splitting
    if ratio > 0.3:
        warnings.warn(
            f"orbital drive ratio {ratio:.2f} exceeds 0.3; the perturbative rate is unreliable",
            PerturbativeValidityWarning,
            stacklevel=2,
        )
    return branch.gamma * ratio**2


def noise_suppression_amplitude(eta, omega_D, omega_n) -> float:
    """Residual dressed noise amplitude ``eta**2 / |omega_D - omega_n|``."""
    check_nonnegative(eta, "eta")
    gap = abs(omega_D - omega_n)
    if gap == 0:
        raise ValueError("noise frequency equals the dressing Rabi frequency; the estimate diverges")
    return eta**2 / gap
