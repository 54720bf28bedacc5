"""Least-squares curve models with a scikit-learn style interface.

Each estimator is fitted on a single input column (``X`` of shape ``(n,)`` or
``(n, 1)``). Internally the data are rescaled to order-one coordinates so the
optimizer sees a well-conditioned problem. Parameters and covariances are
mapped back afterwards. The optimizer is MINPACK Levenberg-Marquardt with
analytic Jacobians.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lombscargle
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .curves import FitResult

XTOL = 1e-10
GTOL = 1e-12
FTOL = 1e-14
FOUR_LN2 = 4.0 * np.log(2.0)


class FitWarning(UserWarning):
    """A fit converged but its result deserves a second look."""


def _column(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _validate(X, y, min_points, distinct=True):
    X, y = check_X_y(_column(X), y, y_numeric=True)
    if X.shape[1] != 1:
        raise ValueError(f"curve fits take a single input column, got {X.shape[1]}")
    x = X[:, 0]
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if distinct and np.any(np.diff(x) <= 0):
        raise ValueError("x values must be distinct")
    if len(x) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(x)}")
    return x, y, order


def _periodogram(u, v, n_freq_per_span=8):
    span = u[-1] - u[0]
    n = len(u)
    fmax = max(n / (2.0 * span), 2.0 / span)
    freqs = np.arange(0.5 / span, fmax, 1.0 / (n_freq_per_span * span))
    power = lombscargle(u, v - v.mean(), 2 * np.pi * freqs)
    return freqs, power


def _sincos_lsq(u, v, f, env=None, offset=True):
    env = np.ones_like(u) if env is None else env
    cols = [np.sin(2 * np.pi * f * u) * env, np.cos(2 * np.pi * f * u) * env]
    if offset:
        cols.append(np.ones_like(u))
    M = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(M, v, rcond=None)
    r = v - M @ coef
    a, b = coef[0], coef[1]
    return np.hypot(a, b), np.arctan2(b, a), (coef[2] if offset else 0.0), float(r @ r)


def _wrap(phi):
    return (phi + np.pi) % (2 * np.pi) - np.pi


class CurveFit(RegressorMixin, BaseEstimator):
    """Shared machinery; subclasses define the model in scaled coordinates."""

    model_name = "curve"
    min_points = 2
    shift_x = False

    def __init__(self, max_iter=4000):
        self.max_iter = max_iter

    # -- subclass hooks ---------------------------------------------------
    def _names(self):
        raise NotImplementedError

    def _f(self, u, p):
        raise NotImplementedError

    def _jac(self, u, p):
        raise NotImplementedError

    def _guess(self, u, v):
        raise NotImplementedError

    def _affine(self, xs, xm, ys, ym):
        """Per-parameter ``(scale, shift)`` mapping scaled to physical values."""
        raise NotImplementedError

    def _fixed(self):
        return {}

    def _tidy(self, p):
        return p

    # -- fitting ----------------------------------------------------------
    def _scales(self, x, y):
        xm = 0.5 * (x[0] + x[-1]) if self.shift_x else 0.0
        xs = float(np.max(np.abs(x - xm))) or 1.0
        ym = float(np.median(y))
        ys = float(np.max(np.abs(y - ym))) or 1.0
        return xs, xm, ys, ym

    def fit(self, X, y, y_err=None):
        x, y, order = _validate(X, y, self.min_points)
        if y_err is not None:
            y_err = np.asarray(y_err, dtype=float)[order]
            if np.any(y_err <= 0):
                raise ValueError("y_err must be positive")
        xs, xm, ys, ym = self._scales(x, y)
        u = (x - xm) / xs
        v = (y - ym) / ys
        w = np.ones_like(v) if y_err is None else ys / y_err
        self.scales_ = (xs, xm, ys, ym)
        names = self._names()
        fixed = self._fixed_scaled(xs, xm, ys, ym)
        free = np.array([n not in fixed for n in names])
        p0, diag = self._guess(u, v)
        if p0 is None:
            return self._store(self._diverged(names, diag, x, y))
        p0 = np.asarray(p0, dtype=float)
        for i, n in enumerate(names):
            if n in fixed:
                p0[i] = fixed[n]

        def full(q):
            p = p0.copy()
            p[free] = q
            return p

        def fun(q):
            return w * (self._f(u, full(q)) - v)

        def jac(q):
            return w[:, None] * self._jac(u, full(q))[:, free]

        n_free = int(free.sum())
        if len(u) < n_free:
            raise ValueError(f"{self.model_name} needs at least {n_free} points")
        with np.errstate(over="ignore", invalid="ignore"):
            res = least_squares(fun, p0[free], jac=jac, method="lm", xtol=XTOL, gtol=GTOL, ftol=FTOL,
                                max_nfev=self.max_iter)
        p = self._tidy(full(res.x))
        J = jac(p[free])
        dof = len(u) - n_free
        cost = float(res.fun @ res.fun)
        cov_free = self._covariance(J, cost, dof, y_err is not None)
        cov = np.zeros((len(names), len(names)))
        cov[np.ix_(free, free)] = cov_free
        scale, shift = (np.asarray(a, dtype=float) for a in self._affine(xs, xm, ys, ym))
        values = scale * p + shift
        cov = cov * np.outer(scale, scale)
        grad = float(np.linalg.norm(J.T @ res.fun))
        ok = bool(res.status > 0 and np.all(np.isfinite(values)))
        diag.update({"status": int(res.status), "message": res.message, "gradient_norm": grad * ys})
        resid = (y - self._predict_scaled(x, p)) if y_err is None else (y - self._predict_scaled(x, p)) / y_err
        result = FitResult(self.model_name, names, values, np.sqrt(np.clip(np.diag(cov), 0, None)),
                           float(np.linalg.norm(resid)), ok, int(res.nfev), cov, diag)
        self.params_scaled_ = p
        return self._store(result)

    @staticmethod
    def _covariance(J, cost, dof, absolute):
        JTJ = J.T @ J
        try:
            inv = np.linalg.inv(JTJ)
        except np.linalg.LinAlgError:
            return np.full(JTJ.shape, np.inf)
        if absolute:
            return inv
        return inv * (cost / dof if dof > 0 else 0.0)

    def _fixed_scaled(self, xs, xm, ys, ym):
        fixed = self._fixed()
        if not fixed:
            return {}
        scale, shift = self._affine(xs, xm, ys, ym)
        names = self._names()
        return {n: (val - shift[names.index(n)]) / scale[names.index(n)] for n, val in fixed.items()}

    def _diverged(self, names, diag, x, y):
        n = len(names)
        return FitResult(self.model_name, names, np.full(n, np.nan), np.full(n, np.inf),
                         float(np.linalg.norm(y - np.median(y))), False, 0, None, diag)

    def _store(self, result):
        self.result_ = result
        self.params_ = result.as_dict()
        self.errors_ = dict(zip(result.names, result.errors.tolist()))
        self.converged_ = result.converged
        self.n_iter_ = result.iterations
        if not result.converged:
            self.params_scaled_ = None
        return self

    def _predict_scaled(self, x, p):
        xs, xm, ys, ym = self.scales_
        return self._f((x - xm) / xs, p) * ys + ym

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(_column(X))
        if self.params_scaled_ is None:
            raise ValueError("the fit diverged; there is no model to evaluate")
        return self._predict_scaled(X[:, 0], self.params_scaled_)


class DampedSineFit(CurveFit):
    """``A sin(2 pi f t + phi) exp(-(t/T2star)^2) + c``.

    Pass ``t2star`` to hold the envelope fixed (``np.inf`` for a pure sine).
    """

    model_name = "damped-sine"
    min_points = 8

    def __init__(self, t2star=None, max_iter=4000):
        self.t2star = t2star
        self.max_iter = max_iter

    def _names(self):
        return ("amplitude", "frequency", "phase", "offset", "T2star")

    def _fixed(self):
        return {} if self.t2star is None else {"T2star": float(self.t2star)}

    def _affine(self, xs, xm, ys, ym):
        return [ys, 1 / xs, 1, ys, xs], [0, 0, 0, ym, 0]

    def _f(self, u, p):
        A, f, phi, c, T = p
        env = np.exp(-(u / T) ** 2) if np.isfinite(T) else 1.0
        return A * np.sin(2 * np.pi * f * u + phi) * env + c

    def _jac(self, u, p):
        A, f, phi, c, T = p
        th = 2 * np.pi * f * u + phi
        env = np.exp(-(u / T) ** 2) if np.isfinite(T) else np.ones_like(u)
        s, co = np.sin(th) * env, np.cos(th) * env
        dT = A * s * 2 * u**2 / T**3 if np.isfinite(T) else np.zeros_like(u)
        return np.stack([s, A * co * 2 * np.pi * u, A * co, np.ones_like(u), dT], axis=1)

    def _guess(self, u, v):
        freqs, power = _periodogram(u, v)
        f0 = freqs[int(np.argmax(power))]
        span = u[-1] - u[0]
        fixed = self._fixed_scaled(*self.scales_)
        if "T2star" in fixed:
            Ts = [fixed["T2star"]]
        else:
            Ts = np.geomspace(span / 10, 30 * span, 40)
        best = None
        for T in Ts:
            env = np.exp(-(u / T) ** 2) if np.isfinite(T) else None
            A, phi, c, rss = _sincos_lsq(u, v, f0, env)
            if best is None or rss < best[-1]:
                best = (A, f0, phi, c, T, rss)
        if best[0] == 0:
            return None, {"reason": "no oscillation found"}
        return list(best[:5]), {"initial_frequency": float(f0 / self.scales_[0])}

    def _tidy(self, p):
        A, f, phi, c, T = p
        if f < 0:
            f, phi = -f, np.pi - phi
        if A < 0:
            A, phi = -A, phi + np.pi
        return np.array([A, f, _wrap(phi), c, abs(T)])


class MultiSineFit(CurveFit):
    """``sum_k A_k sin(2 pi f_k t + phi_k) + c`` with tones sorted by frequency."""

    model_name = "multi-sine"
    min_points = 4

    def __init__(self, n_tones=1, max_iter=4000):
        self.n_tones = n_tones
        self.max_iter = max_iter

    def _names(self):
        names = []
        for k in range(1, self.n_tones + 1):
            names += [f"amplitude_{k}", f"frequency_{k}", f"phase_{k}"]
        return tuple(names) + ("offset",)

    def _affine(self, xs, xm, ys, ym):
        return [ys, 1 / xs, 1] * self.n_tones + [ys], [0, 0, 0] * self.n_tones + [ym]

    def _f(self, u, p):
        out = np.full_like(u, p[-1])
        for k in range(self.n_tones):
            A, f, phi = p[3 * k:3 * k + 3]
            out += A * np.sin(2 * np.pi * f * u + phi)
        return out

    def _jac(self, u, p):
        cols = []
        for k in range(self.n_tones):
            A, f, phi = p[3 * k:3 * k + 3]
            th = 2 * np.pi * f * u + phi
            cols += [np.sin(th), A * np.cos(th) * 2 * np.pi * u, A * np.cos(th)]
        cols.append(np.ones_like(u))
        return np.stack(cols, axis=1)

    def _guess(self, u, v):
        if self.n_tones < 1:
            raise ValueError("n_tones must be >= 1")
        r = v - np.median(v)
        p = []
        offset = float(np.median(v))
        for _ in range(self.n_tones):
            freqs, power = _periodogram(u, r)
            f0 = freqs[int(np.argmax(power))]
            A, phi, c, _ = _sincos_lsq(u, r, f0)
            p += [A, f0, phi]
            r = r - A * np.sin(2 * np.pi * f0 * u + phi) - c
            offset += c
        return p + [offset], {}

    def _tidy(self, p):
        p = p.copy()
        tones = []
        for k in range(self.n_tones):
            A, f, phi = p[3 * k:3 * k + 3]
            if f < 0:
                f, phi = -f, np.pi - phi
            if A < 0:
                A, phi = -A, phi + np.pi
            tones.append((f, A, _wrap(phi)))
        tones.sort(key=lambda t: t[0])
        for k, (f, A, phi) in enumerate(tones):
            p[3 * k:3 * k + 3] = (A, f, phi)
        return p

    def fit(self, X, y, y_err=None):
        super().fit(X, y, y_err)
        r = self.result_
        if self.n_tones > 1 and np.all(np.isfinite(r.values)):
            freqs = np.sort(r.values[1:3 * self.n_tones:3])
            x = np.sort(_column(X)[:, 0])
            resolution = 1.0 / (x[-1] - x[0])
            degenerate = bool(np.min(np.diff(freqs)) < resolution)
            r.diagnostics["degenerate_tones"] = degenerate
            if degenerate:
                warnings.warn("two fitted tones are closer than the grid resolution", FitWarning, stacklevel=2)
        return self


class PeakFit(CurveFit):
    """Gaussian or Lorentzian peak; ``width`` is the full width at half maximum."""

    model_name = "peak"
    min_points = 5
    shift_x = True

    def __init__(self, shape="gaussian", noise_floor=3.0, max_iter=4000):
        self.shape = shape
        self.noise_floor = noise_floor
        self.max_iter = max_iter

    def _names(self):
        return ("center", "width", "height", "offset")

    def _affine(self, xs, xm, ys, ym):
        return [xs, xs, ys, ys], [xm, 0, 0, ym]

    def _profile(self, u, p):
        x0, w = p[0], p[1]
        d = u - x0
        if self.shape == "gaussian":
            g = np.exp(-FOUR_LN2 * d**2 / w**2)
            return g, g * 2 * FOUR_LN2 * d / w**2, g * 2 * FOUR_LN2 * d**2 / w**3
        if self.shape == "lorentzian":
            q = 1.0 / (1.0 + 4 * d**2 / w**2)
            return q, q**2 * 8 * d / w**2, q**2 * 8 * d**2 / w**3
        raise ValueError(f"peak shape must be 'gaussian' or 'lorentzian', got {self.shape!r}")

    def _f(self, u, p):
        return p[2] * self._profile(u, p)[0] + p[3]

    def _jac(self, u, p):
        g, gx, gw = self._profile(u, p)
        h = p[2]
        return np.stack([h * gx, h * gw, g, np.ones_like(u)], axis=1)

    def _guess(self, u, v):
        c = float(np.median(v))
        dev = v - c
        i = int(np.argmax(np.abs(dev)))
        h = float(dev[i])
        noise = 1.4826 * np.median(np.abs(np.diff(v))) / np.sqrt(2)
        if h == 0 or abs(h) <= self.noise_floor * noise:
            return None, {"reason": "no extremum above the noise floor", "noise_floor": float(noise)}
        above = np.abs(dev) >= 0.5 * abs(h)
        lo = i
        while lo > 0 and above[lo - 1]:
            lo -= 1
        hi = i
        while hi < len(u) - 1 and above[hi + 1]:
            hi += 1
        width = u[hi] - u[lo] if hi > lo else 2 * np.min(np.diff(u))
        return [u[i], width, h, c], {}

    def _tidy(self, p):
        p = p.copy()
        p[1] = abs(p[1])
        return p


class DecayFit(CurveFit):
    """Gaussian decay ``A exp(-(t/T)^2) + c`` for echo envelopes."""

    model_name = "decay"
    min_points = 4

    def _names(self):
        return ("amplitude", "T2", "offset")

    def _affine(self, xs, xm, ys, ym):
        return [ys, xs, ys], [0, 0, ym]

    def _f(self, u, p):
        A, T, c = p
        return A * np.exp(-(u / T) ** 2) + c

    def _jac(self, u, p):
        A, T, c = p
        e = np.exp(-(u / T) ** 2)
        return np.stack([e, A * e * 2 * u**2 / T**3, np.ones_like(u)], axis=1)

    def _guess(self, u, v):
        span = u[-1] - u[0]
        best = None
        for T in np.geomspace(span / 10, 100 * span, 50):
            M = np.stack([np.exp(-(u / T) ** 2), np.ones_like(u)], axis=1)
            coef, *_ = np.linalg.lstsq(M, v, rcond=None)
            r = v - M @ coef
            if best is None or r @ r < best[-1]:
                best = (coef[0], T, coef[1], r @ r)
        if best[0] == 0:
            return None, {"reason": "no decay found"}
        return list(best[:3]), {}

    def _tidy(self, p):
        p = p.copy()
        p[1] = abs(p[1])
        return p


class LinearFit(RegressorMixin, BaseEstimator):
    """Closed-form (weighted) straight line ``y = slope x + intercept``."""

    model_name = "linear"

    def fit(self, X, y, y_err=None):
        x, y, order = _validate(X, y, 2, distinct=False)
        if x[-1] == x[0]:
            raise ValueError("singular design: all x values are equal")
        if y_err is not None:
            y_err = np.asarray(y_err, dtype=float)[order]
            if np.any(y_err <= 0):
                raise ValueError("y_err must be positive")
        w = np.ones_like(y) if y_err is None else 1.0 / y_err**2
        xm = np.sum(w * x) / np.sum(w)
        d = x - xm
        sxx = np.sum(w * d * d)
        slope = np.sum(w * d * y) / sxx
        intercept = np.sum(w * y) / np.sum(w) - slope * xm
        resid = y - (slope * x + intercept)
        n = len(x)
        if y_err is None:
            s2 = resid @ resid / (n - 2) if n > 2 else 0.0
        else:
            s2 = 1.0
        var_slope = s2 / sxx
        var_mean = s2 / np.sum(w)
        cov = np.array([[var_slope, -xm * var_slope], [-xm * var_slope, var_mean + xm * xm * var_slope]])
        chi = resid if y_err is None else resid / y_err
        self.result_ = FitResult("linear", ("slope", "intercept"), [slope, intercept],
                                 np.sqrt(np.diag(cov)), float(np.linalg.norm(chi)), True, 1, cov,
                                 {"gradient_norm": 0.0})
        self.params_ = self.result_.as_dict()
        self.errors_ = dict(zip(self.result_.names, self.result_.errors.tolist()))
        self.coef_ = np.array([slope])
        self.intercept_ = intercept
        self.converged_ = True
        self.n_iter_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(_column(X))
        return X[:, 0] * self.coef_[0] + self.intercept_
