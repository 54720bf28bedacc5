"""Pulse sequence building blocks and experiment descriptions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .._validation import check_count, check_fraction, check_grid, check_nonnegative, check_positive
from ..propagator import EvolutionConfig, NoiseModel
from ..spin import DriveField, SpinSystem
from .readout import ReadoutModel

AXES = ("probe-frequency", "pulse-duration", "free-delay")
KINDS = ("odar", "rabi", "ramsey", "echo")
TARGETS = ("minus", "plus", "0", "1")


@dataclass(frozen=True)
class LaserInit:
    """Optical pumping into ``target``; the state is prepared when the pulse ends."""

    target: str = "minus"
    duration: float = 300e-9

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"init target must be one of {TARGETS}, got {self.target!r}")
        check_nonnegative(self.duration, "duration")


@dataclass(frozen=True, eq=False)
class DrivePulse:
    drive: DriveField
    duration: float

    def __post_init__(self):
        check_nonnegative(self.duration, "duration")


@dataclass(frozen=True)
class FreeEvolution:
    duration: float

    def __post_init__(self):
        check_nonnegative(self.duration, "duration")


@dataclass(frozen=True)
class Readout:
    duration: float = 300e-9

    def __post_init__(self):
        check_positive(self.duration, "duration")


Event = Union[LaserInit, DrivePulse, FreeEvolution, Readout]


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Events played back to back starting at ``t = 0``."""

    events: tuple

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        if not events:
            raise ValueError("sequence is empty")
        for ev in events:
            if not isinstance(ev, (LaserInit, DrivePulse, FreeEvolution, Readout)):
                raise TypeError(f"unknown sequence event {ev!r}")
        n_read = sum(isinstance(ev, Readout) for ev in events)
        if n_read != 1 or not isinstance(events[-1], Readout):
            raise ValueError("sequence needs exactly one Readout, placed last")
        if not isinstance(events[0], LaserInit):
            raise ValueError("sequence must start with a LaserInit")

    def timeline(self):
        """``(start, stop, event)`` triples."""
        t = 0.0
        out = []
        for ev in self.events:
            out.append((t, t + ev.duration, ev))
            t += ev.duration
        return out

    @property
    def duration(self):
        return sum(ev.duration for ev in self.events)

    @property
    def pulses(self):
        return [ev for ev in self.events if isinstance(ev, DrivePulse)]

    @property
    def init(self) -> LaserInit:
        return self.events[0]

    def with_probe_frequency(self, frequency):
        return PulseSequence(tuple(
            DrivePulse(ev.drive.with_(frequency=frequency), ev.duration) if isinstance(ev, DrivePulse) else ev
            for ev in self.events
        ))

    def with_pulse_duration(self, duration):
        if len(self.pulses) != 1:
            raise ValueError("pulse-duration sweeps need exactly one drive pulse")
        return PulseSequence(tuple(
            DrivePulse(ev.drive, duration) if isinstance(ev, DrivePulse) else ev for ev in self.events
        ))

    def with_free_delay(self, delay):
        """Spread a total free delay evenly over the free-evolution events."""
        n = sum(isinstance(ev, FreeEvolution) for ev in self.events)
        if n == 0:
            raise ValueError("free-delay sweeps need at least one FreeEvolution event")
        return PulseSequence(tuple(
            FreeEvolution(delay / n) if isinstance(ev, FreeEvolution) else ev for ev in self.events
        ))

    def swept(self, axis, value):
        if axis == "probe-frequency":
            return self.with_probe_frequency(value)
        if axis == "pulse-duration":
            return self.with_pulse_duration(value)
        if axis == "free-delay":
            return self.with_free_delay(value)
        raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """A sequence, the swept quantity and everything needed to simulate it.

    ``rabi`` is the effective Rabi rate (Hz) of the probe pulses; Ramsey and
    echo sequences are checked against it. ``channels`` are Lindblad channels
    expressed in the rotating-frame bare basis.
    """

    kind: str
    system: SpinSystem
    sequence: PulseSequence
    axis: str
    grid: np.ndarray
    noise: NoiseModel = field(default_factory=NoiseModel)
    shots: int = 1
    detuning: float = 0.0
    rabi: Optional[float] = None
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    channels: tuple = ()
    frame: str = "rotating"
    evolution: EvolutionConfig = field(default_factory=lambda: EvolutionConfig(method="fixed-step"))
    seed: int = 0
    threads: int = 1
    noise_dt: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        if self.axis not in AXES:
            raise ValueError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        object.__setattr__(self, "grid", check_grid(self.grid, "sweep grid"))
        if self.axis != "probe-frequency" and self.grid[0] < 0:
            raise ValueError("durations and delays must be >= 0")
        check_count(self.shots, "shots", minimum=1)
        check_count(self.threads, "threads", minimum=1)
        if self.frame not in ("rotating", "lab"):
            raise ValueError(f"frame must be 'rotating' or 'lab', got {self.frame!r}")
        if self.frame == "lab" and self.channels:
            raise ValueError("Lindblad channels are only supported in the rotating frame")
        if self.rabi is not None:
            check_positive(self.rabi, "rabi")
        if self.noise.is_stochastic and self.shots < 2:
            raise ValueError("stochastic noise needs at least 2 shots")
        check_fraction(self.readout.init_fidelity, "init_fidelity")
        init = self.sequence.init.target
        if self.system.is_dressed != (init in ("minus", "plus")):
            raise ValueError("dressed systems initialize into |+>/|->, bare systems into |0>/|1>")

    @property
    def basis(self):
        return "dressed" if self.system.is_dressed else "bare"

    def replace(self, **changes):
        return replace(self, **changes)

    def sequence_at(self, value):
        return self.sequence.swept(self.axis, value)


@dataclass(eq=False)
class ExperimentResult:
    kind: str
    axis: str
    sweep_values: np.ndarray
    mean_population: np.ndarray
    std_error: np.ndarray
    n_shots: int
    flags: dict = field(default_factory=dict)

    COLUMNS = ("sweep_value", "mean_population", "std_error", "n_shots")

    def rows(self):
        for x, y, e in zip(self.sweep_values, self.mean_population, self.std_error):
            yield (float(x), float(y), float(e), int(self.n_shots))

    def to_csv(self, path=None):
        """Write (or return) the CSV table; floats use shortest round-trip text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for x, y, e, n in self.rows():
            w.writerow((repr(x), repr(y), repr(e), n))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_records(self):
        return [dict(zip(self.COLUMNS, row)) for row in self.rows()]

    @classmethod
    def from_csv(cls, path, kind="imported", axis="unknown"):
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(cls.COLUMNS[:2]) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            rows = list(reader)
        x = np.array([float(r["sweep_value"]) for r in rows])
        y = np.array([float(r["mean_population"]) for r in rows])
        e = np.array([float(r.get("std_error") or 0.0) for r in rows])
        n = int(rows[0].get("n_shots") or 1) if rows else 0
        return cls(kind, axis, x, y, e, n)

    def curve(self):
        from ..analysis import Curve

        err = self.std_error if np.all(self.std_error > 0) else None
        return Curve(self.sweep_values, self.mean_population, err)
