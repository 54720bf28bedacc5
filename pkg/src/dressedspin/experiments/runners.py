"""Experiment factories and runners (ODAR, Rabi, Ramsey, echo)."""

from __future__ import annotations

import warnings

import numpy as np

from .._validation import check_positive
from ..propagator import NoiseModel, noise_grid, run_shots, sample_noise
from ..spin import DriveField, SpinSystem, sideband_amplitude
from .engine import NoiseBatch, SequenceEngine
from .readout import read_population
from .sequences import (
    DrivePulse,
    ExperimentResult,
    ExperimentSpec,
    FreeEvolution,
    LaserInit,
    PulseSequence,
    Readout,
)

EMPTY_SIGNAL_CONTRAST = 0.02
PULSE_TOL = 1e-6


class EmptySignalWarning(UserWarning):
    """A sweep showed no population transfer anywhere on its grid."""


def resonant_frequency(system: SpinSystem):
    """Default probe frequency: ``w - Omega_D`` when dressed, ``w`` when bare."""
    d = system.dressing
    return system.omega if d is None else system.resonances().lower_sideband


def probe_drive(system: SpinSystem, frequency, rabi, phase=0.0) -> DriveField:
    """Probe tone whose effective Rabi rate is ``rabi`` at the nearest resonance.

    Bare spins rotate at ``omega_x``. Dressed states rotate at ``lambda_z`` on
    the low resonance and at :func:`~dressedspin.spin.sideband_rabi` (about
    ``omega_x/2``) on the ``w +- Omega_D`` sidebands.
    """
    check_positive(rabi, "rabi")
    if not system.is_dressed:
        return DriveField(rabi, frequency, phase=phase)
    res = system.resonances().frequencies
    nearest = int(np.argmin([abs(frequency - r) for r in res]))
    if nearest == 0:
        return DriveField(0.0, frequency, lambda_z=rabi, phase=phase)
    omega_D = float(system.dressing.omega_x)
    return DriveField(sideband_amplitude(rabi, omega_D), frequency, phase=phase)


def _init_target(system):
    return "minus" if system.is_dressed else "0"


def odar_experiment(system, frequencies, *, omega_x=18.4e6, lambda_z=9.2e6, pulse=67e-9,
                    frame="lab", laser=300e-9, **kwargs) -> ExperimentSpec:
    """Probe-frequency sweep with a fixed-length pulse carrying both polarizations."""
    freqs = np.asarray(frequencies, dtype=float)
    probe = DriveField(omega_x, freqs[0], lambda_z=lambda_z)
    seq = PulseSequence((LaserInit(_init_target(system), laser), DrivePulse(probe, pulse), Readout(laser)))
    return ExperimentSpec("odar", system, seq, "probe-frequency", freqs, frame=frame, **kwargs)


def rabi_experiment(system, durations, *, rabi=9.2e6, frequency=None, laser=300e-9,
                    **kwargs) -> ExperimentSpec:
    f = resonant_frequency(system) if frequency is None else frequency
    probe = probe_drive(system, f, rabi)
    seq = PulseSequence((
        LaserInit(_init_target(system), laser), DrivePulse(probe, float(np.max(durations))), Readout(laser),
    ))
    return ExperimentSpec("rabi", system, seq, "pulse-duration", durations, rabi=rabi, **kwargs)


def _check_pulse_time(given, expected, name):
    if given is not None and abs(given - expected) > PULSE_TOL * expected:
        raise ValueError(f"{name} duration {given:.4e} s is inconsistent with 1/(k * Rabi) = {expected:.4e} s")


def ramsey_experiment(system, delays, *, detuning, rabi, frequency=None, pi2_duration=None,
                      laser=300e-9, **kwargs) -> ExperimentSpec:
    """Two pi/2 pulses detuned by ``detuning`` around a swept free delay."""
    t90 = 1.0 / (4.0 * rabi)
    _check_pulse_time(pi2_duration, t90, "pi/2 pulse")
    f = (resonant_frequency(system) if frequency is None else frequency) + detuning
    probe = probe_drive(system, f, rabi)
    seq = PulseSequence((
        LaserInit(_init_target(system), laser), DrivePulse(probe, t90), FreeEvolution(0.0),
        DrivePulse(probe, t90), Readout(laser),
    ))
    return ExperimentSpec("ramsey", system, seq, "free-delay", delays, detuning=detuning, rabi=rabi, **kwargs)


def echo_experiment(system, delays, *, detuning, rabi, frequency=None, pi2_duration=None,
                    laser=300e-9, **kwargs) -> ExperimentSpec:
    """Ramsey with a refocusing pi pulse centered in the free delay."""
    t90 = 1.0 / (4.0 * rabi)
    _check_pulse_time(pi2_duration, t90, "pi/2 pulse")
    f = (resonant_frequency(system) if frequency is None else frequency) + detuning
    probe = probe_drive(system, f, rabi)
    seq = PulseSequence((
        LaserInit(_init_target(system), laser), DrivePulse(probe, t90), FreeEvolution(0.0),
        DrivePulse(probe, 2 * t90), FreeEvolution(0.0), DrivePulse(probe, t90), Readout(laser),
    ))
    return ExperimentSpec("echo", system, seq, "free-delay", delays, detuning=detuning, rabi=rabi, **kwargs)


def synchronous_delays(delays, omega_D, segments=1):
    """Round delays so each of ``segments`` free periods spans whole dressing periods.

    Sideband pulses respond to the phase of the ``Omega_D`` modulation they
    start in; locking every free segment to ``1/Omega_D`` keeps that phase
    fixed so it does not alias into the fringe. Echo sequences split the
    delay in two, so they need ``segments=2``. Duplicates are dropped.
    """
    check_positive(omega_D, "omega_D")
    period = segments / omega_D
    n = np.unique(np.rint(np.asarray(delays, dtype=float) / period))
    return n * period


def _noise_batch(model: NoiseModel, duration, rngs, dt):
    times = noise_grid(model, duration, dt)
    values = np.stack([sample_noise(model, duration, rng, dt).values for rng in rngs])
    return NoiseBatch(times, values)


def _records_pulse(spec):
    ev = spec.sequence.events
    return spec.axis == "pulse-duration" and len(spec.sequence.pulses) == 1 and isinstance(ev[-2], DrivePulse)


def _engine(spec: ExperimentSpec):
    return SequenceEngine(
        spec.system, frame=spec.frame, channels=tuple(spec.channels) + tuple(spec.noise.channels()),
        max_step=spec.evolution.max_step, init_fidelity=spec.readout.init_fidelity,
    )


def simulate(spec: ExperimentSpec, *, threads=None):
    """Shot samples of the readout population, shape ``(shots, len(grid))``."""
    if spec.frame == "lab" and spec.noise.channels():
        raise ValueError("white-noise channels are only supported in the rotating frame")
    engine = _engine(spec)
    grid = spec.grid
    basis = spec.basis
    if spec.axis == "probe-frequency":
        duration = spec.sequence.duration
    else:
        duration = spec.sequence_at(grid[-1]).duration
    P = len(grid)

    def batch_fn(idx, rngs):
        m = len(idx)
        noise = _noise_batch(spec.noise, duration, rngs, spec.noise_dt)
        if spec.axis == "probe-frequency":
            seq = spec.sequence.with_probe_frequency(np.tile(grid, m))
            nb = NoiseBatch(noise.times, np.repeat(noise.values, P, axis=0))
            return engine.run(seq, basis, nb, batch=m * P).reshape(m, P)
        if _records_pulse(spec):
            seq = spec.sequence_at(grid[-1])
            return engine.run(seq, basis, noise, batch=m, record=grid)
        start = None
        if spec.axis == "free-delay":
            k = next(i for i, ev in enumerate(spec.sequence.events) if isinstance(ev, FreeEvolution))
            start = (k, engine.prepare(spec.sequence, k, noise, m))
        return np.stack([engine.run(spec.sequence_at(v), basis, noise, batch=m, start=start) for v in grid], axis=1)

    return run_shots(batch_fn, spec.shots, spec.seed, threads=threads or spec.threads)


def _summarize(spec: ExperimentSpec, samples):
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    err = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    # The expected-count readout is linear with unit gain, so it acts on the mean.
    rngs = [np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed, spawn_key=(1 << 40, i))))
            for i in range(len(mean))] if spec.readout.poisson else [None] * len(mean)
    measured = np.array([read_population(float(np.clip(p, 0, 1)), spec.readout, r) for p, r in zip(mean, rngs)])
    return ExperimentResult(spec.kind, spec.axis, spec.grid.copy(), measured, err, n)


def _require_axis(spec, axis, name):
    if spec.axis != axis:
        raise ValueError(f"{name} needs sweep axis {axis!r}, got {spec.axis!r}")


def _check_pulses(spec: ExperimentSpec, fractions):
    if spec.rabi is None:
        raise ValueError(f"{spec.kind} needs the probe Rabi rate to time its pulses")
    pulses = spec.sequence.pulses
    if len(pulses) != len(fractions):
        raise ValueError(f"{spec.kind} expects {len(fractions)} drive pulses, found {len(pulses)}")
    for p, k in zip(pulses, fractions):
        _check_pulse_time(p.duration, 1.0 / (k * spec.rabi), f"1/{k} period pulse")


def _flag_empty(result: ExperimentResult):
    if np.ptp(result.mean_population) < EMPTY_SIGNAL_CONTRAST:
        result.flags["empty_signal"] = True
        warnings.warn("no population transfer on the sweep grid", EmptySignalWarning, stacklevel=3)
    return result


def run_odar(spec: ExperimentSpec, *, threads=None) -> ExperimentResult:
    _require_axis(spec, "probe-frequency", "ODAR")
    return _flag_empty(_summarize(spec, simulate(spec, threads=threads)))


def run_rabi(spec: ExperimentSpec, *, threads=None) -> ExperimentResult:
    _require_axis(spec, "pulse-duration", "Rabi")
    return _flag_empty(_summarize(spec, simulate(spec, threads=threads)))


def run_ramsey(spec: ExperimentSpec, *, threads=None) -> ExperimentResult:
    _require_axis(spec, "free-delay", "Ramsey")
    _check_pulses(spec, (4, 4))
    return _summarize(spec, simulate(spec, threads=threads))


def run_echo(spec: ExperimentSpec, *, threads=None) -> ExperimentResult:
    _require_axis(spec, "free-delay", "echo")
    _check_pulses(spec, (4, 2, 4))
    return _summarize(spec, simulate(spec, threads=threads))


RUNNERS = {"odar": run_odar, "rabi": run_rabi, "ramsey": run_ramsey, "echo": run_echo}


def run_experiment(spec: ExperimentSpec, *, threads=None) -> ExperimentResult:
    return RUNNERS[spec.kind](spec, threads=threads)
