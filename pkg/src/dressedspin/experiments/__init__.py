"""Pulse sequences, readout and experiment runners."""

from .engine import FrameHamiltonian, NoiseBatch, SequenceEngine, dressed_operator
from .readout import CountHistogram, ReadoutModel, extract_population, read_population, simulate_readout
from .runners import (
    EmptySignalWarning,
    echo_experiment,
    odar_experiment,
    probe_drive,
    rabi_experiment,
    ramsey_experiment,
    resonant_frequency,
    run_echo,
    run_experiment,
    run_odar,
    run_rabi,
    run_ramsey,
    simulate,
    synchronous_delays,
)
from .sequences import (
    DrivePulse,
    ExperimentResult,
    ExperimentSpec,
    FreeEvolution,
    LaserInit,
    PulseSequence,
    Readout,
)

__all__ = [
    "FrameHamiltonian", "NoiseBatch", "SequenceEngine", "dressed_operator",
    "CountHistogram", "ReadoutModel", "extract_population", "read_population", "simulate_readout",
    "EmptySignalWarning", "echo_experiment", "odar_experiment", "probe_drive", "rabi_experiment",
    "ramsey_experiment", "resonant_frequency", "run_echo", "run_experiment", "run_odar", "run_rabi",
    "run_ramsey", "simulate", "synchronous_delays", "DrivePulse", "ExperimentResult", "ExperimentSpec", "FreeEvolution",
    "LaserInit", "PulseSequence", "Readout",
]
