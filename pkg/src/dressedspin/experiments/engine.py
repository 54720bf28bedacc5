"""Batched density-matrix evolution of a pulse sequence.

Two frames are supported. ``"lab"`` integrates the full lab Hamiltonian.
``"rotating"`` works in the frame rotating at the bare splitting, with
amplitudes ``(c_0, e^{i w t} c_1)``. There the transverse parts of all tones are
kept in rotating-wave form and the slow longitudinal tones (frequency below
``w/2``) are kept exactly. Longitudinal tones near ``w`` are dropped because
they only add Floquet sidebands. The rotating frame keeps the
``cos((w - w_p) t)`` longitudinal probe term that the textbook dressed-frame
RWA discards.

A batch axis ``B`` runs over shots and, for frequency sweeps, sweep points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from ..propagator.integrators import (
    dissipator_superop,
    expm_hermitian,
    hamiltonian_superop,
    lindblad_superop,
    magnus_propagator,
)
from ..spin import DRESSED_BASIS, TWO_PI, DriveField, SpinSystem, pauli_sum
from .sequences import DrivePulse, FreeEvolution, LaserInit, PulseSequence, Readout

_MAX_BATCH_ELEMENTS = 1 << 19


def dressed_operator(op):
    """Express a dressed-basis operator in the rotating-frame bare basis."""
    return DRESSED_BASIS @ np.asarray(op, dtype=complex) @ DRESSED_BASIS.conj().T


def _rotating_to_lab(omega, t):
    """Diagonal of ``R`` with ``rho_rot = R rho_lab R^+``."""
    return np.array([1.0, np.exp(1j * TWO_PI * omega * t)])


class FrameHamiltonian:
    """``h(t)`` returning ``(len(t), B, 2, 2)`` for a set of active tones."""

    vectorized = True

    def __init__(self, system: SpinSystem, frame, drives, eta, batch):
        self.omega = float(system.omega)
        self.frame = frame
        self.drives = list(drives)
        self.eta = np.broadcast_to(np.asarray(eta, dtype=float), (batch,))
        self.batch = batch
        self._terms = [self._classify(d) for d in self.drives]

    def _classify(self, d: DriveField):
        f = np.broadcast_to(np.asarray(d.frequency, dtype=float), (self.batch,))
        ox = np.broadcast_to(np.asarray(d.omega_x, dtype=float), (self.batch,))
        lz = np.broadcast_to(np.asarray(d.lambda_z, dtype=float), (self.batch,))
        if self.frame == "rotating":
            keep_z = (f < 0.5 * self.omega) & (lz > 0)
            lz = np.where(keep_z, lz, 0.0)
        return f, ox, lz, float(d.phase)

    @property
    def max_frequency(self):
        fs = [abs(self.omega), float(np.max(np.abs(self.eta)))] if self.frame == "lab" else [float(np.max(np.abs(self.eta)))]
        for f, ox, lz, _ in self._terms:
            fs.append(float(np.max(ox)))
            fs.append(float(np.max(lz)))
            if self.frame == "lab":
                fs.append(float(np.max(f)))
            else:
                fs.append(float(np.max(np.where(ox > 0, np.abs(self.omega - f), 0.0))))
                fs.append(float(np.max(np.where(lz > 0, f, 0.0))))
        return max(fs)

    @property
    def is_constant(self):
        if self.frame == "lab":
            return not self._terms
        for f, ox, lz, _ in self._terms:
            if np.any(lz > 0) or np.any((ox > 0) & (f != self.omega)):
                return False
        return True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[:, None]
        cz = TWO_PI * self.eta[None, :] + np.zeros_like(t)
        cx = np.zeros_like(cz)
        cy = np.zeros_like(cz)
        if self.frame == "lab":
            cz = cz + np.pi * self.omega
        for f, ox, lz, ph in self._terms:
            if self.frame == "lab":
                c = np.cos(TWO_PI * f * t + ph)
                cx = cx + TWO_PI * ox * c
                cz = cz + TWO_PI * lz * c
            else:
                psi = TWO_PI * (self.omega - f) * t - ph
                cx = cx + np.pi * ox * np.cos(psi)
                cy = cy - np.pi * ox * np.sin(psi)
                if np.any(lz > 0):
                    cz = cz + TWO_PI * lz * np.cos(TWO_PI * f * t + ph)
        return pauli_sum(cx, cy, cz)


@dataclass(frozen=True, eq=False)
class NoiseBatch:
    """Piecewise-constant ``eta`` per batch row: ``values[:, k]`` from ``times[k]``."""

    times: np.ndarray
    values: np.ndarray

    @classmethod
    def zeros(cls, batch):
        return cls(np.zeros(1), np.zeros((batch, 1)))

    def breakpoints(self, a, b):
        inner = self.times[(self.times > a) & (self.times < b)]
        return np.concatenate([[a], inner, [b]])

    def at(self, t):
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return self.values[:, max(k, 0)]


def _apply_unitary(rho, U):
    return U @ rho @ np.conj(np.swapaxes(U, -1, -2))


def _apply_superop(rho, S):
    vec = np.einsum("...ij,...j->...i", S, rho.reshape(rho.shape[:-2] + (4,)))
    return vec.reshape(rho.shape)


class SequenceEngine:
    """Runs a :class:`PulseSequence` for a batch of noise realizations."""

    def __init__(self, system: SpinSystem, *, frame="rotating", channels=(), max_step=None,
                 init_fidelity=0.9):
        if frame not in ("rotating", "lab"):
            raise ValueError(f"unknown frame {frame!r}")
        self.system = system
        self.frame = frame
        self.channels = tuple(channels)
        self.max_step = max_step
        self.init_fidelity = float(init_fidelity)
        self._D = dissipator_superop(self.channels) if self.channels else None

    # -- states -----------------------------------------------------------
    def initial_state(self, target, t, batch):
        F = self.init_fidelity
        if target in ("minus", "plus"):
            main = DRESSED_BASIS[:, 1] if target == "minus" else DRESSED_BASIS[:, 0]
            other = DRESSED_BASIS[:, 0] if target == "minus" else DRESSED_BASIS[:, 1]
        else:
            main = np.eye(2)[int(target)]
            other = np.eye(2)[1 - int(target)]
        rho = F * np.outer(main, main.conj()) + (1 - F) * np.outer(other, other.conj())
        if self.frame == "lab":
            r = _rotating_to_lab(self.system.omega, t)
            rho = np.conj(r)[:, None] * rho * r[None, :]
        return np.broadcast_to(rho, (batch, 2, 2)).astype(complex)

    def population(self, rho, t, basis):
        """``P(|+>)`` for the dressed basis, ``P(|1>)`` for the bare basis."""
        if self.frame == "lab":
            r = _rotating_to_lab(self.system.omega, t)
            rho = r[:, None] * rho * np.conj(r)[None, :]
        if basis == "dressed":
            p = 0.5 * np.real(rho[..., 0, 0] + rho[..., 1, 1]) + np.real(rho[..., 0, 1])
        else:
            p = np.real(rho[..., 1, 1])
        return np.clip(p, 0.0, 1.0)

    # -- evolution --------------------------------------------------------
    def _step(self, h: FrameHamiltonian):
        f = h.max_frequency
        dt = np.inf if f == 0 else 1.0 / (20.0 * f)
        if self.max_step is not None:
            dt = min(dt, self.max_step)
        return dt

    def evolve(self, rho, a, b, drives, noise: NoiseBatch):
        """Evolve ``rho`` (``(B, 2, 2)``) from ``a`` to ``b`` under ``drives``."""
        if b <= a:
            return rho
        batch = rho.shape[0]
        tones = list(drives)
        dressing = self.system.dressing
        if dressing is not None:
            tones.insert(0, dressing)
        bounds = noise.breakpoints(a, b)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            h = FrameHamiltonian(self.system, self.frame, tones, noise.at(lo), batch)
            if h.is_constant:
                H = h(np.array([lo]))[0]
                if self._D is None:
                    rho = _apply_unitary(rho, expm_hermitian(H, hi - lo))
                else:
                    rho = _apply_superop(rho, expm((hamiltonian_superop(H) + self._D) * (hi - lo)))
                continue
            dt = self._step(h)
            if not np.isfinite(dt):
                dt = hi - lo
            if self._D is None:
                rho = _apply_unitary(rho, magnus_propagator(h, lo, hi, dt))
            else:
                rho = _apply_superop(rho, lindblad_superop(h, self.channels, lo, hi, dt))
        return rho

    def prepare(self, sequence: PulseSequence, stop_index, noise: Optional[NoiseBatch] = None, batch=1):
        """State after events ``[0, stop_index)``; pair with ``run(start=...)``."""
        noise = noise or NoiseBatch.zeros(batch)
        rho = None
        for start, stop, ev in sequence.timeline()[:stop_index]:
            rho = self._apply_event(rho, start, stop, ev, noise, batch)
        return rho

    def _apply_event(self, rho, start, stop, ev, noise, batch):
        if isinstance(ev, LaserInit):
            return self.initial_state(ev.target, stop, batch)
        if isinstance(ev, DrivePulse):
            return self.evolve(rho, start, stop, [ev.drive], noise)
        if isinstance(ev, FreeEvolution):
            return self.evolve(rho, start, stop, [], noise)
        raise TypeError(f"cannot apply {ev!r}")

    def run(self, sequence: PulseSequence, basis, noise: Optional[NoiseBatch] = None, batch=1,
            record=None, start=None):
        """Populations at readout, shape ``(B,)``.

        ``record`` lists offsets into the single drive pulse at which to read
        out instead; the result then has shape ``(B, len(record))``. ``start``
        is an ``(index, rho)`` pair from :meth:`prepare` to resume from.
        """
        noise = noise or NoiseBatch.zeros(batch)
        first, rho = (0, None) if start is None else start
        for start_t, stop, ev in sequence.timeline()[first:]:
            if isinstance(ev, Readout):
                return self.population(rho, start_t, basis)
            if isinstance(ev, DrivePulse) and record is not None:
                out = []
                t = start_t
                for offset in record:
                    rho = self.evolve(rho, t, start_t + offset, [ev.drive], noise)
                    t = start_t + offset
                    out.append(self.population(rho, t, basis))
                return np.stack(out, axis=-1)
            rho = self._apply_event(rho, start_t, stop, ev, noise, batch)
        raise AssertionError("sequence validation guarantees a final Readout")
