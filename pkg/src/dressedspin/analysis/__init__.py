"""Curve fitting for spectroscopy and coherence data."""

import numpy as np
from scipy.signal import find_peaks

from .curves import Curve, FitResult
from .estimators import (
    CurveFit,
    DampedSineFit,
    DecayFit,
    FitWarning,
    LinearFit,
    MultiSineFit,
    PeakFit,
)


def _fit(estimator, curve: Curve) -> FitResult:
    return estimator.fit(curve.x, curve.y, curve.y_err).result_


def fit_damped_sine(curve: Curve, t2star=None) -> FitResult:
    return _fit(DampedSineFit(t2star=t2star), curve)


def fit_multi_sine(curve: Curve, n_tones=1) -> FitResult:
    if n_tones < 1:
        raise ValueError("n_tones must be >= 1")
    return _fit(MultiSineFit(n_tones=n_tones), curve)


def fit_peak(curve: Curve, shape="gaussian") -> FitResult:
    return _fit(PeakFit(shape=shape), curve)


def fit_peaks(curve: Curve, shape="gaussian", prominence=0.5, span=3.0):
    """Detect peaks and fit each one locally.

    A peak counts when its prominence is at least ``prominence`` times the
    full range of ``y``, which keeps pulse sidelobes out. Each fit uses the
    points within ``span`` detected half-widths of the peak, cut at the
    valleys separating it from its neighbours. Results come back ordered by
    center.
    """
    y = np.asarray(curve.y, dtype=float)
    idx, props = find_peaks(y, prominence=prominence * np.ptp(y), width=0.5)
    x = np.asarray(curve.x, dtype=float)
    step = np.gradient(x)
    # Valley indices between consecutive peaks bound each local window.
    valleys = [int(a + np.argmin(y[a:b + 1])) for a, b in zip(idx[:-1], idx[1:])]
    lows = [0] + valleys
    highs = valleys + [len(x) - 1]
    fits = []
    for k, w, lo, hi in zip(idx, props["widths"], lows, highs):
        half = max(span * w * step[k], 3 * step[k])
        sel = np.abs(x - x[k]) <= half
        sel[:lo] = False
        sel[hi + 1:] = False
        if sel.sum() < 5:
            sel = np.zeros_like(sel)
            sel[max(k - 3, 0):k + 4] = True
        err = None if curve.y_err is None else np.asarray(curve.y_err)[sel]
        fits.append(_fit(PeakFit(shape=shape), Curve(x[sel], y[sel], err)))
    return sorted(fits, key=lambda f: f["center"])


def fit_linear(curve: Curve) -> FitResult:
    return _fit(LinearFit(), curve)


def fit_decay(curve: Curve) -> FitResult:
    return _fit(DecayFit(), curve)


__all__ = [
    "Curve", "FitResult", "CurveFit", "DampedSineFit", "DecayFit", "FitWarning", "LinearFit",
    "MultiSineFit", "PeakFit", "fit_damped_sine", "fit_multi_sine", "fit_peak", "fit_peaks", "fit_linear", "fit_decay",
]
