"""SAW device link budget: microwave chain, IDT passband, arrival times,
power to Rabi conversion, duty-cycle planning and spectral-shift estimates.

Powers are in watts at the API boundary unless a name says ``_mw``.
Temperatures in the thermal table are in millikelvin because that is how
the measured rows are quoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.constants import epsilon_0

from ._validation import check_finite, check_nonnegative, check_positive

TWO_PI = 2.0 * np.pi


def db_to_amplitude(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 20.0)


def db_to_power(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class MicrowaveChain:
    amplifier_gain: float = 37.5
    isolator_loss: float = 1.0
    filter_loss: float = 2.0
    net_gain: Optional[float] = None

    def __post_init__(self):
        for name in ("isolator_loss", "filter_loss"):
            check_nonnegative(getattr(self, name), name)
        check_finite(self.amplifier_gain, "amplifier_gain")
        expected = self.amplifier_gain - self.isolator_loss - self.filter_loss
        if self.net_gain is None:
            object.__setattr__(self, "net_gain", expected)
        elif abs(self.net_gain - expected) > 1e-9:
            raise ValueError(
                f"net_gain {self.net_gain} dB disagrees with "
                f"amplifier - isolator - filter = {expected} dB"
            )
        assert abs(self.net_gain - expected) <= 1e-9

    def output_power(self, source_power):
        """Power delivered to the fridge input for a given source power (W)."""
        check_nonnegative(source_power, "source_power")
        return np.asarray(source_power, dtype=float) * db_to_power(self.net_gain)


def gaussian_shape(x):
    """Relative passband level in dB at normalized offset ``x = (f - fc)/(bw/2)``."""
    return -3.0 * np.asarray(x, dtype=float) ** 2


_SINC_HALF = 0.442946470689452  # np.sinc(a) = 1/sqrt(2)


def sinc_shape(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(np.sinc(_SINC_HALF * x)))


PASSBAND_SHAPES = {"gaussian": gaussian_shape, "sinc": sinc_shape}


@dataclass(frozen=True)
class IdtModel:
    """Transducer pair passband.

    ``shape`` maps the normalized offset to a level in dB relative to the
    peak and must give -3 dB at ``|x| = 1``. It is either a key of
    ``PASSBAND_SHAPES`` or a callable.
    """

    center_frequency: float = 3.35e9
    bandwidth: float = 100e6
    fridge_to_idt_loss: float = 18.0
    total_path_loss: float = 37.0
    delay: float = 26e-9
    shape: object = "gaussian"

    def __post_init__(self):
        check_positive(self.center_frequency, "center_frequency")
        check_positive(self.bandwidth, "bandwidth")
        check_nonnegative(self.fridge_to_idt_loss, "fridge_to_idt_loss")
        check_nonnegative(self.total_path_loss, "total_path_loss")
        check_nonnegative(self.delay, "delay")
        self.shape_function  # validates the key early

    @property
    def shape_function(self) -> Callable:
        if callable(self.shape):
            return self.shape
        try:
            return PASSBAND_SHAPES[self.shape]
        except KeyError:
            raise ValueError(
                f"unknown passband shape {self.shape!r}; "
                f"choose from {sorted(PASSBAND_SHAPES)} or pass a callable"
            ) from None

    def magnitude_db(self, f):
        x = (np.asarray(f, dtype=float) - self.center_frequency) / (0.5 * self.bandwidth)
        return -self.total_path_loss + self.shape_function(x)


def idt_transfer(f, idt: IdtModel = IdtModel()):
    """Complex S21 of the transducer pair at frequency ``f`` (Hz)."""
    f = np.asarray(f, dtype=float)
    check_positive(f, "f")
    phase = -TWO_PI * f * idt.delay
    out = db_to_amplitude(idt.magnitude_db(f)) * np.exp(1j * phase)
    return out if out.ndim else complex(out)


def group_delay(f, idt: IdtModel = IdtModel(), df=1e3):
    """``-d(phase)/d(2 pi f)`` from a centered difference of the unwrapped phase."""
    f = np.asarray(f, dtype=float)
    lo = np.angle(idt_transfer(f - df, idt))
    hi = np.angle(idt_transfer(f + df, idt))
    dphi = np.angle(np.exp(1j * (hi - lo)))
    return -dphi / (TWO_PI * 2.0 * df)


@dataclass(frozen=True)
class SawPath:
    idt_separation: float = 230e-6
    group_velocity: float = 8.8e3
    crosstalk_arrival: float = 77e-9
    first_pulse_arrival: float = 103e-9
    roundtrip_reflection_loss: float = 40.0

    def __post_init__(self):
        check_positive(self.idt_separation, "idt_separation")
        check_positive(self.group_velocity, "group_velocity")
        check_nonnegative(self.crosstalk_arrival, "crosstalk_arrival")
        check_nonnegative(self.roundtrip_reflection_loss, "roundtrip_reflection_loss")
        gap = self.first_pulse_arrival - self.crosstalk_arrival
        transit = self.transit_time
        if abs(gap - transit) > 0.1 * transit:
            raise ValueError(
                f"main arrival minus crosstalk ({gap * 1e9:.2f} ns) differs from "
                f"separation/velocity ({transit * 1e9:.2f} ns) by more than 10%"
            )

    @property
    def transit_time(self) -> float:
        return self.idt_separation / self.group_velocity

    @property
    def reflection_arrival(self) -> float:
        return self.first_pulse_arrival + 2.0 * self.transit_time

    @property
    def siv_reflection_loss(self) -> float:
        # A full round trip costs the quoted loss; the focus point sees half of it.
        return 0.5 * self.roundtrip_reflection_loss


@dataclass(frozen=True)
class InputPulse:
    amplitude: float
    duration: float
    start: float = 0.0

    def __post_init__(self):
        check_nonnegative(self.amplitude, "amplitude")
        check_positive(self.duration, "duration")
        check_finite(self.start, "start")


@dataclass(frozen=True)
class ArrivalEvent:
    """One copy of the input seen downstream.

    ``amplitude`` is the field at the receiving transducer, ``siv_amplitude``
    the acoustic field at the focus. Crosstalk is electromagnetic and carries
    no strain, so its ``siv_amplitude`` is zero.
    """

    kind: str
    time: float
    duration: float
    amplitude: float
    siv_amplitude: float

    @property
    def level_db(self) -> float:
        return 20.0 * math.log10(self.amplitude) if self.amplitude > 0 else -math.inf

    @property
    def siv_level_db(self) -> float:
        return 20.0 * math.log10(self.siv_amplitude) if self.siv_amplitude > 0 else -math.inf


def time_response(pulse: InputPulse, path: SawPath = SawPath(), crosstalk_db=-20.0):
    """Arrival events for one input pulse, ordered in time.

    Amplitudes are relative to the main SAW copy of a unit input. The
    crosstalk level is not characterized and defaults to -20 dB.
    """
    if pulse.amplitude == 0:
        return []
    a = float(pulse.amplitude)
    t0 = pulse.start
    refl = float(db_to_amplitude(-path.roundtrip_reflection_loss))
    refl_siv = float(db_to_amplitude(-path.siv_reflection_loss))
    return [
        ArrivalEvent("crosstalk", t0 + path.crosstalk_arrival, pulse.duration,
                     a * float(db_to_amplitude(crosstalk_db)), 0.0),
        ArrivalEvent("main", t0 + path.first_pulse_arrival, pulse.duration, a, a),
        ArrivalEvent("reflection", t0 + path.reflection_arrival, pulse.duration,
                     a * refl, a * refl_siv),
    ]


RABI_SLOPE = 250e6  # Hz per sqrt(mW) of SAW power at the SiV


def power_to_rabi(power_at_siv, slope=RABI_SLOPE):
    """Rabi frequency (Hz) for a SAW power at the SiV (W)."""
    check_nonnegative(power_at_siv, "power_at_siv")
    out = slope * np.sqrt(np.asarray(power_at_siv, dtype=float) * 1e3)
    return out if out.ndim else float(out)


def rabi_to_power(rabi, slope=RABI_SLOPE):
    check_nonnegative(rabi, "rabi")
    out = (np.asarray(rabi, dtype=float) / slope) ** 2 * 1e-3
    return out if out.ndim else float(out)


def fridge_to_idt_power(fridge_power, idt: IdtModel = IdtModel()):
    """Power reaching the transducer for a given fridge-input power (W)."""
    check_nonnegative(fridge_power, "fridge_power")
    return np.asarray(fridge_power, dtype=float) * db_to_power(-idt.fridge_to_idt_loss)


def fridge_rabi_efficiency(rabi, fridge_power):
    """Drive efficiency in Hz per sqrt(W) referred to the fridge input."""
    check_positive(fridge_power, "fridge_power")
    return float(rabi) / math.sqrt(float(fridge_power))


@dataclass(frozen=True)
class ThermalRow:
    rf_power_mw: float
    dressing_rabi_mhz: float
    duty_cycle_percent: float
    stage_temperature_mk: float


DEFAULT_THERMAL_ROWS = (
    ThermalRow(1.4, 65.0, 80.0, 280.0),
    ThermalRow(2.3, 76.0, 40.0, 250.0),
    ThermalRow(4.1, 100.0, 20.0, 240.0),
    ThermalRow(9.1, 150.0, 10.0, 260.0),
)

BASE_TEMPERATURE_MK = 45.0


@dataclass(frozen=True)
class DutyPlan:
    duty: float
    rf_power_mw: float
    max_temp_mk: float
    node_temperature_mk: float
    extrapolated: bool

    @property
    def average_power_mw(self) -> float:
        return self.duty * self.rf_power_mw


class InfeasibleDutyError(ValueError):
    pass


@dataclass(frozen=True)
class ThermalTable:
    rows: Sequence[ThermalRow] = DEFAULT_THERMAL_ROWS
    base_temperature_mk: float = BASE_TEMPERATURE_MK

    def __post_init__(self):
        rows = tuple(r if isinstance(r, ThermalRow) else ThermalRow(*r) for r in self.rows)
        if len(rows) < 2:
            raise ValueError("thermal table needs at least two rows")
        powers = [r.rf_power_mw for r in rows]
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise ValueError("thermal rows must be sorted by strictly increasing power")
        for r in rows:
            check_positive(r.rf_power_mw, "rf_power_mw")
            if not 0 < r.duty_cycle_percent <= 100:
                raise ValueError(f"duty {r.duty_cycle_percent}% outside (0, 100]")
            if r.stage_temperature_mk <= self.base_temperature_mk:
                raise ValueError("row temperature must exceed the base temperature")
        object.__setattr__(self, "rows", rows)

    @property
    def log_power(self):
        return np.log([r.rf_power_mw for r in self.rows])

    def _interp(self, power_mw, values):
        # Straight lines in log(power), extended with the end segments.
        x = self.log_power
        v = np.asarray(values, dtype=float)
        lp = math.log(power_mw)
        i = int(np.clip(np.searchsorted(x, lp) - 1, 0, len(x) - 2))
        w = (lp - x[i]) / (x[i + 1] - x[i])
        return float(v[i] + w * (v[i + 1] - v[i]))

    def nominal_duty(self, power_mw):
        """Duty fraction interpolated log-log between rows."""
        logd = np.log([r.duty_cycle_percent / 100.0 for r in self.rows])
        return math.exp(self._interp(power_mw, logd))

    def node_temperature(self, power_mw):
        return self._interp(power_mw, [r.stage_temperature_mk for r in self.rows])

    def budget_mw(self, power_mw):
        """Largest average power of the two rows bracketing ``power_mw``."""
        p = [r.rf_power_mw * r.duty_cycle_percent / 100.0 for r in self.rows]
        x = self.log_power
        i = int(np.clip(np.searchsorted(x, math.log(power_mw)) - 1, 0, len(x) - 2))
        return max(p[i], p[i + 1])


def duty_cycle_plan(rf_power_mw, max_temp_mk, table: ThermalTable = ThermalTable(),
                    resolution=1e-3) -> DutyPlan:
    """Dressing duty cycle that keeps the stage at or below ``max_temp_mk``.

    The table duty is followed when the interpolated row temperature fits
    under the limit. Otherwise duty is scaled by the ratio of allowed to
    nominal heating above base, assuming heating proportional to average
    power. The result is floored to ``resolution``.
    """
    check_positive(rf_power_mw, "rf_power_mw")
    check_finite(max_temp_mk, "max_temp_mk")
    coldest = min(r.stage_temperature_mk for r in table.rows)
    if max_temp_mk < coldest:
        raise InfeasibleDutyError(
            f"requested {max_temp_mk} mK is below the coldest tabulated "
            f"operating point ({coldest} mK)"
        )
    lo, hi = table.rows[0].rf_power_mw, table.rows[-1].rf_power_mw
    extrapolated = not (lo <= rf_power_mw <= hi)
    duty = table.nominal_duty(rf_power_mw)
    t_node = table.node_temperature(rf_power_mw)
    if max_temp_mk < t_node:
        base = table.base_temperature_mk
        duty *= (max_temp_mk - base) / (t_node - base)
    duty = min(duty, 1.0)
    duty = math.floor(duty / resolution + 1e-6) * resolution
    if duty <= 0:
        raise InfeasibleDutyError(f"no positive duty fits under {max_temp_mk} mK")
    return DutyPlan(duty=duty, rf_power_mw=float(rf_power_mw), max_temp_mk=float(max_temp_mk),
                    node_temperature_mk=t_node, extrapolated=extrapolated)


def ac_stark_shift(rabi, detuning):
    """Off-resonant level shift ``rabi**2 / detuning`` (Hz, signed)."""
    check_finite(rabi, "rabi")
    check_finite(detuning, "detuning")
    d = np.asarray(detuning, dtype=float)
    if np.any(d == 0):
        raise ValueError("detuning must be nonzero")
    out = np.asarray(rabi, dtype=float) ** 2 / d
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PyroelectricMaterial:
    pyro_coefficient: float = 7e-6      # C / (m^2 K)
    d33: float = 5.1e-12                # m / V
    relative_permittivity: float = 9.2

    @property
    def permittivity(self) -> float:
        return self.relative_permittivity * epsilon_0


def pyroelectric_shift(delta_T, material: PyroelectricMaterial = PyroelectricMaterial()):
    """Strain induced by a temperature change ``delta_T`` (K)."""
    check_finite(delta_T, "delta_T")
    out = material.pyro_coefficient * material.d33 * np.asarray(delta_T, dtype=float) / material.permittivity
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DeviceModel:
    chain: MicrowaveChain = field(default_factory=MicrowaveChain)
    idt: IdtModel = field(default_factory=IdtModel)
    path: SawPath = field(default_factory=SawPath)
    thermal: ThermalTable = field(default_factory=ThermalTable)
    rabi_slope: float = RABI_SLOPE
    material: PyroelectricMaterial = field(default_factory=PyroelectricMaterial)

    def report(self, rf_power_mw=None, max_temp_mk=None):
        """Flat list of (quantity, value, unit) records."""
        c, idt, p = self.chain, self.idt, self.path
        rec = [
            ("amplifier_gain", c.amplifier_gain, "dB"),
            ("isolator_loss", c.isolator_loss, "dB"),
            ("filter_loss", c.filter_loss, "dB"),
            ("net_gain", c.net_gain, "dB"),
            ("idt_center_frequency", idt.center_frequency, "Hz"),
            ("idt_bandwidth", idt.bandwidth, "Hz"),
            ("idt_peak_transmission", float(idt.magnitude_db(idt.center_frequency)), "dB"),
            ("fridge_to_idt_loss", idt.fridge_to_idt_loss, "dB"),
            ("idt_group_delay", float(group_delay(idt.center_frequency, idt)), "s"),
            ("saw_transit_time", p.transit_time, "s"),
            ("crosstalk_arrival", p.crosstalk_arrival, "s"),
            ("main_arrival", p.first_pulse_arrival, "s"),
            ("reflection_arrival", p.reflection_arrival, "s"),
            ("reflection_loss_roundtrip", p.roundtrip_reflection_loss, "dB"),
            ("reflection_loss_at_siv", p.siv_reflection_loss, "dB"),
            ("rabi_slope", self.rabi_slope, "Hz/sqrt(mW)"),
        ]
        if rf_power_mw is not None:
            rec.append(("rf_power", float(rf_power_mw), "mW"))
            if max_temp_mk is not None:
                plan = duty_cycle_plan(rf_power_mw, max_temp_mk, self.thermal)
                rec += [
                    ("max_stage_temperature", plan.max_temp_mk, "mK"),
                    ("duty_cycle", plan.duty, "fraction"),
                    ("average_power", plan.average_power_mw, "mW"),
                    ("duty_extrapolated", int(plan.extrapolated), "flag"),
                ]
        return rec
