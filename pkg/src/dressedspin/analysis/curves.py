"""Curve containers and fit results."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class Curve:
    """Samples ``y(x)`` with optional one-sigma errors ``y_err``."""

    x: np.ndarray
    y: np.ndarray
    y_err: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.shape != x.shape:
            raise ValueError("curve x and y must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("curve contains non-finite values")
        if np.any(np.diff(x) <= 0):
            raise ValueError("curve x must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.y_err is not None:
            e = np.asarray(self.y_err, dtype=float)
            if e.shape != x.shape or np.any(e <= 0):
                raise ValueError("y_err must be positive and match x")
            object.__setattr__(self, "y_err", e)

    def __len__(self):
        return len(self.x)

    @property
    def span(self):
        return float(self.x[-1] - self.x[0])


@dataclass(eq=False)
class FitResult:
    """Parameter estimates with one-sigma errors and optimizer diagnostics."""

    model: str
    names: tuple
    values: np.ndarray
    errors: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    covariance: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.errors = np.abs(np.asarray(self.errors, dtype=float))

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def error(self, name):
        return float(self.errors[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))

    def records(self):
        return [
            {"parameter": n, "value": float(v), "sigma": float(e)}
            for n, v, e in zip(self.names, self.values, self.errors)
        ]

    def report(self):
        """Aligned plain-text table: parameter, value, sigma."""
        width = max(len(n) for n in self.names + ("parameter",))
        lines = [f"model: {self.model}", f"converged: {self.converged}  iterations: {self.iterations}",
                 f"residual_norm: {self.residual_norm:.6g}",
                 f"{'parameter':<{width}}  {'value':>16}  {'sigma':>12}"]
        for n, v, e in zip(self.names, self.values, self.errors):
            lines.append(f"{n:<{width}}  {v:>16.9g}  {e:>12.4g}")
        for k, v in sorted(self.diagnostics.items()):
            lines.append(f"# {k}: {v}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        def clean(v):
            if isinstance(v, (np.floating, float)):
                return None if not np.isfinite(v) else float(v)
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (np.bool_,)):
                return bool(v)
            return v

        doc = {
            "model": self.model,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual_norm": clean(self.residual_norm),
            "parameters": [{k: clean(v) for k, v in r.items()} for r in self.records()],
            "diagnostics": {k: clean(v) for k, v in self.diagnostics.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)
