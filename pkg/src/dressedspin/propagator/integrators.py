"""Pure-state and density-matrix propagation for 2x2 Hamiltonians.

Hamiltonians are callables ``h(t)`` in rad/s. Vectorized callables take a 1-D
array of times and return ``(len(t), *batch, 2, 2)``; plain scalar callables are
wrapped automatically. An optional ``max_frequency`` attribute (Hz) sets the
default step.

The fixed-step method is a fourth-order commutator-free Magnus scheme built
from closed-form 2x2 exponentials, so it is exactly unitary. Step propagators
are combined with a pairwise product, which keeps long lab-frame runs fast.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .._validation import check_density, check_nonnegative, check_state

log = logging.getLogger(__name__)

_SQ3 = np.sqrt(3.0)
_C1, _C2 = 0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6
_A1, _A2 = 0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6
_BLOCK = 4096
NORM_TOL = 1e-9


class PropagationError(RuntimeError):
    """Integration failed; ``time`` holds the instant where it gave up."""

    def __init__(self, message, time=None, shot=None):
        super().__init__(message)
        self.time = time
        self.shot = shot


@dataclass(frozen=True)
class EvolutionConfig:
    """Integrator settings.

    ``method`` is ``"fixed-step"`` (commutator-free Magnus) or ``"adaptive"``
    (DOP853 with error control). ``max_step`` defaults to ``1/(20 f_max)``.
    """

    method: str = "adaptive"
    max_step: Optional[float] = None
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("fixed-step", "adaptive"):
            raise ValueError(f"method must be 'fixed-step' or 'adaptive', got {self.method!r}")
        if not 0 < self.tolerance <= 1e-3:
            raise ValueError(f"tolerance must lie in (0, 1e-3], got {self.tolerance}")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def step_for(self, f_max):
        """Step size honoring ``max_step <= 1/(20 f_max)``."""
        limit = np.inf if not f_max else 1.0 / (20.0 * f_max)
        if self.max_step is None:
            return limit
        if self.max_step > limit * (1 + 1e-12):
            raise ValueError(
                f"max_step {self.max_step:.3e} s exceeds 1/(20 f_max) = {limit:.3e} s"
            )
        return self.max_step


@dataclass(frozen=True)
class LindbladChannel:
    """Jump operator ``operator`` (dimensionless) applied at ``rate`` (Hz).

    The dissipator is ``rate * (L rho L^+ - {L^+ L, rho}/2)``, so dephasing
    with ``L = sigma_z`` damps coherences as ``exp(-2 rate t)``.
    """

    operator: np.ndarray
    rate: float

    def __post_init__(self):
        op = np.asarray(self.operator, dtype=complex)
        if op.shape != (2, 2):
            raise ValueError("channel operator must be 2x2")
        check_nonnegative(self.rate, "rate")
        object.__setattr__(self, "operator", op)


def expm_hermitian(H, dt):
    """``exp(-1j * H * dt)`` for a batch of Hermitian 2x2 matrices."""
    H = np.asarray(H)
    h0 = 0.5 * (H[..., 0, 0] + H[..., 1, 1]).real
    hz = 0.5 * (H[..., 0, 0] - H[..., 1, 1]).real
    off = H[..., 0, 1]
    n = np.sqrt(hz * hz + (off.real**2 + off.imag**2))
    theta = n * dt
    c = np.cos(theta)
    safe = np.where(n > 0, n, 1.0)
    s = np.where(n > 0, np.sin(theta) / safe, dt)
    ph = np.exp(-1j * h0 * dt)
    U = np.empty(H.shape, dtype=complex)
    U[..., 0, 0] = (c - 1j * s * hz) * ph
    U[..., 1, 1] = (c + 1j * s * hz) * ph
    U[..., 0, 1] = -1j * s * off * ph
    U[..., 1, 0] = -1j * s * H[..., 1, 0] * ph
    return U


def ordered_product(U):
    """Return ``U[n-1] @ ... @ U[0]`` via a pairwise reduction over axis 0."""
    U = np.asarray(U)
    while U.shape[0] > 1:
        if U.shape[0] % 2:
            eye = np.broadcast_to(np.eye(U.shape[-1], dtype=U.dtype), (1,) + U.shape[1:])
            U = np.concatenate([U, eye], axis=0)
        U = U[1::2] @ U[0::2]
    return U[0]


def vectorize_hamiltonian(h):
    """Wrap ``h`` so it accepts 1-D time arrays and returns a stacked batch."""
    if getattr(h, "vectorized", False):
        return h
    probe = np.array([0.0, 1e-12, 2e-12])
    try:
        out = np.asarray(h(probe))
        if out.shape[:1] == (3,) and out.shape[-2:] == (2, 2):
            return h
    except Exception:  # noqa: BLE001 - scalar-only callables raise on arrays
        pass

    def stacked(t):
        return np.stack([np.asarray(h(float(x)), dtype=complex) for x in np.atleast_1d(t)])

    stacked.max_frequency = getattr(h, "max_frequency", None)
    return stacked


def _magnus_steps(h, t_start, dt):
    """Fourth-order commutator-free step propagators starting at ``t_start``."""
    H1 = h(t_start + _C1 * dt)
    H2 = h(t_start + _C2 * dt)
    return expm_hermitian(_A2 * H1 + _A1 * H2, dt) @ expm_hermitian(_A1 * H1 + _A2 * H2, dt)


def _block_for(h, t0):
    per = max(1, np.asarray(h(np.array([t0])))[0].size // 4)
    return max(8, min(_BLOCK, (1 << 20) // per))


def magnus_propagator(h, t0, t1, dt):
    """Unitary from ``t0`` to ``t1`` with steps no longer than ``dt``."""
    h = vectorize_hamiltonian(h)
    span = t1 - t0
    if span < 0:
        raise ValueError("t1 must not precede t0")
    n = max(1, int(np.ceil(span / dt - 1e-9))) if span > 0 else 0
    if n == 0:
        sample = np.asarray(h(np.array([t0])))[0]
        return np.broadcast_to(np.eye(2, dtype=complex), sample.shape).copy()
    step = span / n
    block = _block_for(h, t0)
    total = None
    for start in range(0, n, block):
        k = np.arange(start, min(n, start + block))
        U = ordered_product(_magnus_steps(h, t0 + k * step, step))
        total = U if total is None else U @ total
    return total


def unitary_superop(U):
    """Row-major superoperator of ``rho -> U rho U^+``."""
    U = np.asarray(U)
    return np.einsum("...ij,...kl->...ikjl", U, U.conj()).reshape(U.shape[:-2] + (4, 4))


def hamiltonian_superop(H):
    """Row-major generator ``-i[H, .]``."""
    H = np.asarray(H)
    eye = np.eye(2)
    a = np.einsum("...ij,kl->...ikjl", H, eye)
    b = np.einsum("ij,...lk->...ikjl", eye, H)
    return (-1j * (a - b)).reshape(H.shape[:-2] + (4, 4))


def dissipator_superop(channels: Sequence[LindbladChannel]):
    """Row-major dissipator summed over ``channels``."""
    D = np.zeros((4, 4), dtype=complex)
    eye = np.eye(2)
    for ch in channels:
        L = ch.operator
        LdL = L.conj().T @ L
        D += ch.rate * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
    return D


def _dissipator_half_step(channels, dt):
    D = dissipator_superop(channels)
    return expm(D * (0.5 * dt))


def lindblad_superop(h, channels, t0, t1, dt):
    """Superoperator from ``t0`` to ``t1`` (Strang split, CPTP by construction)."""
    h = vectorize_hamiltonian(h)
    span = t1 - t0
    n = max(1, int(np.ceil(span / dt - 1e-9))) if span > 0 else 0
    if n == 0:
        sample = np.asarray(h(np.array([t0])))[0]
        return np.broadcast_to(np.eye(4, dtype=complex), sample.shape[:-2] + (4, 4)).copy()
    step = span / n
    Dh = _dissipator_half_step(channels, step)
    block = _block_for(h, t0) // 4 or 1
    total = None
    for start in range(0, n, block):
        k = np.arange(start, min(n, start + block))
        S = Dh @ unitary_superop(_magnus_steps(h, t0 + k * step, step)) @ Dh
        S = ordered_product(S)
        total = S if total is None else S @ total
    return total


def _f_max(h):
    f = getattr(h, "max_frequency", None)
    return None if f is None else float(f)


def _check_renorm(psi):
    norm = np.linalg.norm(psi, axis=-1, keepdims=True)
    drift = float(np.max(np.abs(norm - 1.0)))
    if drift > NORM_TOL:
        log.warning("state norm drifted by %.3e; renormalizing", drift)
        psi = psi / norm
    return psi


def _adaptive(rhs, y0, t0, t1, cfg, f_max):
    max_step = cfg.step_for(f_max)
    sol = solve_ivp(
        rhs, (t0, t1), y0, method="DOP853", rtol=cfg.tolerance,
        atol=cfg.tolerance * 1e-3, max_step=max_step,
    )
    if sol.status < 0:
        t_fail = float(sol.t[-1]) if sol.t.size else t0
        raise PropagationError(f"adaptive integration failed at t = {t_fail:.6e} s: {sol.message}", time=t_fail)
    return sol.y[:, -1]


def propagate_pure(h, psi0, t0, t1, cfg: Optional[EvolutionConfig] = None):
    """Solve ``i dpsi/dt = H(t) psi`` from ``t0`` to ``t1``."""
    cfg = cfg or EvolutionConfig()
    psi0 = check_state(psi0, atol=1e-6)
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    h = vectorize_hamiltonian(h)
    f_max = _f_max(h)
    if t1 == t0:
        return psi0.copy()
    if cfg.method == "fixed-step":
        dt = cfg.step_for(f_max)
        if not np.isfinite(dt):
            dt = (t1 - t0) / 64
        U = magnus_propagator(h, t0, t1, dt)
        psi = np.einsum("...ij,...j->...i", U, psi0)
    else:
        shape = np.broadcast_shapes(psi0.shape, np.asarray(h(np.array([t0])))[0].shape[:-1])
        y0 = np.broadcast_to(psi0, shape).ravel().astype(complex)

        def rhs(t, y):
            H = h(np.array([t]))[0]
            return (-1j * np.einsum("...ij,...j->...i", H, y.reshape(shape))).ravel()

        psi = _adaptive(rhs, y0, t0, t1, cfg, f_max).reshape(shape)
    return _check_renorm(psi)


def propagate_lindblad(h, channels, rho0, t0, t1, cfg: Optional[EvolutionConfig] = None):
    """Integrate the Lindblad equation for a 2x2 density matrix."""
    cfg = cfg or EvolutionConfig()
    rho0 = check_density(rho0, atol=1e-9)
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    channels = list(channels)
    h = vectorize_hamiltonian(h)
    f_max = _f_max(h)
    if t1 == t0:
        return rho0.copy()
    if cfg.method == "fixed-step":
        dt = cfg.step_for(f_max)
        if not np.isfinite(dt):
            dt = (t1 - t0) / 64
        S = lindblad_superop(h, channels, t0, t1, dt)
        vec = np.einsum("...ij,...j->...i", S, rho0.reshape(rho0.shape[:-2] + (4,)))
        rho = vec.reshape(vec.shape[:-1] + (2, 2))
    else:
        D = dissipator_superop(channels)
        shape = np.broadcast_shapes(rho0.shape[:-2], np.asarray(h(np.array([t0])))[0].shape[:-2]) + (4,)
        y0 = np.broadcast_to(rho0.reshape(rho0.shape[:-2] + (4,)), shape).ravel().astype(complex)

        def rhs(t, y):
            L = hamiltonian_superop(h(np.array([t]))[0]) + D
            return np.einsum("...ij,...j->...i", L, y.reshape(shape)).ravel()

        rho = _adaptive(rhs, y0, t0, t1, cfg, f_max).reshape(shape[:-1] + (2, 2))
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    drift = float(np.max(np.abs(tr - 1.0)))
    if drift > NORM_TOL:
        log.warning("density trace drifted by %.3e; renormalizing", drift)
        rho = rho / tr[..., None, None]
    return rho
