"""Classical dephasing noise entering as ``eta(t) * sigma_z``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .._validation import check_nonnegative, check_positive
from ..spin import SIGMA_Z
from .integrators import LindbladChannel

KINDS = ("none", "quasi-static", "ornstein-uhlenbeck", "white")


@dataclass(frozen=True)
class NoiseModel:
    """Noise description; ``sigma_eta`` and ``dephasing_rate`` are in Hz.

    For white noise the coherence decays as ``exp(-dephasing_rate * t)``.
    """

    kind: str = "none"
    sigma_eta: float = 0.0
    correlation_time: Optional[float] = None
    dephasing_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"noise kind must be one of {KINDS}, got {self.kind!r}")
        check_nonnegative(self.sigma_eta, "sigma_eta")
        check_nonnegative(self.dephasing_rate, "dephasing_rate")
        if self.kind == "ornstein-uhlenbeck":
            if self.correlation_time is None:
                raise ValueError("Ornstein-Uhlenbeck noise needs a correlation_time")
            check_positive(self.correlation_time, "correlation_time")

    @classmethod
    def quasi_static(cls, sigma_eta):
        return cls("quasi-static", sigma_eta)

    @classmethod
    def ornstein_uhlenbeck(cls, sigma_eta, correlation_time):
        return cls("ornstein-uhlenbeck", sigma_eta, correlation_time)

    @classmethod
    def white(cls, dephasing_rate):
        return cls("white", dephasing_rate=dephasing_rate)

    @property
    def is_stochastic(self):
        return self.kind in ("quasi-static", "ornstein-uhlenbeck") and self.sigma_eta > 0

    def channels(self):
        """Lindblad channels standing in for white noise (empty otherwise)."""
        if self.kind != "white" or self.dephasing_rate == 0:
            return ()
        return (LindbladChannel(SIGMA_Z, 0.5 * self.dephasing_rate),)

    def default_grid_step(self, duration):
        if self.kind != "ornstein-uhlenbeck":
            return duration
        return min(self.correlation_time / 10.0, duration / 100.0)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Piecewise-constant ``eta(t)`` in Hz; ``values[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    values: np.ndarray
    kind: str = "none"

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    @property
    def is_constant(self):
        return len(self.values) == 1


def noise_grid(model: NoiseModel, duration, dt=None):
    """Left edges of the piecewise-constant segments used by :func:`sample_noise`."""
    check_positive(duration, "duration")
    if model.kind != "ornstein-uhlenbeck" or model.sigma_eta == 0:
        return np.zeros(1)
    step = model.default_grid_step(duration) if dt is None else float(dt)
    n = int(np.ceil(duration / step - 1e-9))
    return np.arange(n) * step


def sample_noise(model: NoiseModel, duration, rng, dt=None) -> NoisePath:
    """Draw one noise realization covering ``[0, duration]``."""
    times = noise_grid(model, duration, dt)
    if model.kind == "quasi-static" and model.sigma_eta > 0:
        values = np.array([rng.normal(0.0, model.sigma_eta)])
    elif model.kind == "ornstein-uhlenbeck" and model.sigma_eta > 0:
        values = ou_path(model.sigma_eta, model.correlation_time, times, rng)
    else:
        values = np.zeros(len(times))
    return NoisePath(times, values, model.kind)


def ou_path(sigma, tau, times, rng):
    """Exact stationary Ornstein-Uhlenbeck samples at ``times``."""
    z = rng.standard_normal(len(times))
    out = np.empty(len(times))
    out[0] = sigma * z[0]
    if len(times) < 2:
        return out
    steps = np.diff(times)
    if np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        a = np.exp(-steps[0] / tau)
        kick = sigma * np.sqrt(-np.expm1(-2.0 * steps[0] / tau))
        out[1:] = lfilter([kick], [1.0, -a], z[1:], zi=[a * out[0]])[0]
        return out
    decay = np.exp(-steps / tau)
    kick = sigma * np.sqrt(-np.expm1(-2.0 * steps / tau))
    for k in range(1, len(times)):
        out[k] = out[k - 1] * decay[k - 1] + kick[k - 1] * z[k]
    return out
