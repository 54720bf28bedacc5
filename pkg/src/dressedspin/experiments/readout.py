"""Phenomenological optical readout: pumping decay plus a flat background."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .._validation import check_count, check_fraction, check_nonnegative, check_positive

BACKGROUND_TAIL = 0.2


@dataclass(frozen=True)
class ReadoutModel:
    """Count model for one readout (or initialization) laser pulse.

    The addressed-state population decays as ``p exp(-pump_rate t)`` and each
    bin collects ``bright_count_rate * p(t) + background_rate`` integrated over
    the bin. In Poisson mode counts are accumulated over ``repetitions``
    sequences and divided back, so the mean stays per-sequence.
    """

    pump_rate: float = 20e6
    bright_count_rate: float = 50e6
    background_rate: float = 2e6
    bin_width: float = 2e-9
    window: float = 20e-9
    init_fidelity: float = 0.9
    pulse_duration: float = 300e-9
    poisson: bool = False
    repetitions: int = 100_000

    def __post_init__(self):
        for name in ("pump_rate", "bright_count_rate", "background_rate"):
            check_nonnegative(getattr(self, name), name)
        check_positive(self.bin_width, "bin_width")
        check_positive(self.pulse_duration, "pulse_duration")
        check_fraction(self.init_fidelity, "init_fidelity")
        check_count(self.repetitions, "repetitions")
        if self.window < self.bin_width:
            raise ValueError("readout window must be at least one bin wide")
        if self.window > self.pulse_duration:
            raise ValueError("readout window exceeds the laser pulse")

    @property
    def edges(self):
        n = int(round(self.pulse_duration / self.bin_width))
        return np.arange(n + 1) * self.bin_width


@dataclass(frozen=True, eq=False)
class CountHistogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if edges.ndim != 1 or counts.shape != (edges.size - 1,):
            raise ValueError("histogram needs len(edges) == len(counts) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("histogram edges must increase")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be >= 0")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def duration(self):
        return self.edges[-1] - self.edges[0]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin_start_s", "expected_counts"))
        for start, c in zip(self.edges[:-1], self.counts):
            w.writerow((repr(float(start)), repr(float(c))))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def simulate_readout(population_plus, model: ReadoutModel, rng=None) -> CountHistogram:
    """Expected (or Poisson-sampled, when ``model.poisson``) photon histogram."""
    p = check_fraction(population_plus, "population_plus")
    edges = model.edges
    a, b = edges[:-1], edges[1:]
    g = model.pump_rate
    if g > 0:
        occupied = p * (np.exp(-g * a) - np.exp(-g * b)) / g
    else:
        occupied = p * (b - a)
    counts = model.bright_count_rate * occupied + model.background_rate * (b - a)
    if model.poisson:
        if rng is None:
            raise ValueError("Poisson readout needs a random generator")
        counts = rng.poisson(counts * model.repetitions) / model.repetitions
    return CountHistogram(edges, counts)


def _window_sum(hist: CountHistogram, window):
    a, b = hist.edges[:-1], hist.edges[1:]
    t0 = hist.edges[0]
    frac = np.clip((t0 + window - a) / (b - a), 0.0, 1.0)
    return float(np.sum(hist.counts * frac))


def _background_rate(hist: CountHistogram):
    n = len(hist.counts)
    k = max(1, int(round(BACKGROUND_TAIL * n)))
    width = hist.edges[-1] - hist.edges[-k - 1]
    return float(np.sum(hist.counts[-k:]) / width)


def extract_population(init_hist: CountHistogram, readout_hist: CountHistogram, window=20e-9):
    """Background-corrected window counts of the readout over those of the init pulse.

    The background rate of each histogram is estimated from its final 20%.
    """
    check_positive(window, "window")
    for name, h in (("init", init_hist), ("readout", readout_hist)):
        if h.duration < window:
            raise ValueError(f"{name} histogram is shorter than the {window:g} s window")
    total = _window_sum(init_hist, window)
    ref = total - _background_rate(init_hist) * window
    # Relative floor so rounding in a pure-background histogram reads as zero.
    if ref <= 1e-9 * total:
        raise ValueError("initialization counts do not exceed background; normalization undefined")
    sig = _window_sum(readout_hist, window) - _background_rate(readout_hist) * window
    return float(np.clip(sig / ref, 0.0, 1.0))


def read_population(population, model: ReadoutModel, rng=None):
    """Pass a true population through the readout model and back."""
    init = simulate_readout(1.0, model, rng)
    return extract_population(init, simulate_readout(population, model, rng), model.window)
