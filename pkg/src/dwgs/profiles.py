"""Coefficient profiles (damping and potential) living on a single edge."""

from __future__ import annotations

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline


class CoefficientProfile:
    """Bounded real function on ``[0, length]``.

    Subclasses provide point evaluation, the edge average, restriction to a
    sub-interval and rescaling of the coordinate.
    """

    kind = "abstract"
    length: float

    def __call__(self, x):
        raise NotImplementedError

    @property
    def average(self) -> float:
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def pieces(self):
        """Return ``[(x0, x1, value), ...]`` if the profile is piecewise constant, else ``None``."""
        return None

    def restrict(self, x0: float, x1: float) -> "CoefficientProfile":
        raise NotImplementedError

    def rescaled(self, new_length: float, factor: float) -> "CoefficientProfile":
        """Profile on ``[0, new_length]`` with ``p_new(x) = factor * p(x * length / new_length)``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Constant(CoefficientProfile):
    kind = "constant"

    def __init__(self, value: float, length: float = 1.0):
        self.value = float(value)
        self.length = float(length)

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    @property
    def average(self) -> float:
        return self.value

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def pieces(self):
        return [(0.0, self.length, self.value)]

    def restrict(self, x0, x1):
        return Constant(self.value, x1 - x0)

    def rescaled(self, new_length, factor):
        return Constant(self.value * factor, new_length)

    def to_dict(self):
        return {"type": "constant", "value": self.value}

    def __repr__(self):
        return f"Constant({self.value!r}, length={self.length!r})"


class PiecewiseConstant(CoefficientProfile):
    """Piecewise constant profile; ``breakpoints`` are the interior jump positions."""

    kind = "piecewise"

    def __init__(self, breakpoints, values, length: float = 1.0):
        self.length = float(length)
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("piecewise profile needs len(values) == len(breakpoints) + 1")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("piecewise breakpoints must be strictly increasing")
        if len(self.breakpoints) and (self.breakpoints[0] <= 0 or self.breakpoints[-1] >= self.length):
            raise ValueError("piecewise breakpoints must lie strictly inside the edge")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("piecewise values must be finite")
        self._edges = np.concatenate([[0.0], self.breakpoints, [self.length]])
        self._average = float(np.dot(np.diff(self._edges), self.values) / self.length)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right")
        return self.values[idx]

    @property
    def average(self) -> float:
        return self._average

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def pieces(self):
        return [(float(a), float(b), float(v)) for a, b, v in zip(self._edges[:-1], self._edges[1:], self.values)]

    def restrict(self, x0, x1):
        bps, vals = [], []
        for a, b, v in self.pieces():
            lo, hi = max(a, x0), min(b, x1)
            if hi - lo <= 1e-14 * self.length:
                continue
            if vals and vals[-1] == v:
                continue
            if vals:
                bps.append(lo - x0)
            vals.append(v)
        if len(vals) == 1:
            return Constant(vals[0], x1 - x0)
        return PiecewiseConstant(bps, vals, x1 - x0)

    def rescaled(self, new_length, factor):
        s = new_length / self.length
        return PiecewiseConstant(self.breakpoints * s, self.values * factor, new_length)

    def to_dict(self):
        return {"type": "piecewise", "breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    def __repr__(self):
        return f"PiecewiseConstant({self.breakpoints.tolist()}, {self.values.tolist()}, length={self.length!r})"


class Sampled(CoefficientProfile):
    """Samples on a uniform grid over ``[0, length]`` with cubic interpolation.

    The cached average is composite Simpson on the samples.  A restricted
    profile keeps evaluating the parent interpolant so that subdivision does
    not perturb the coefficients.
    """

    kind = "sampled"

    def __init__(self, values, length: float = 1.0, *, _parent=None, _offset: float = 0.0):
        self.length = float(length)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 4:
            raise ValueError("sampled profile needs at least 4 grid values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sampled values must be finite")
        self.grid = np.linspace(0.0, self.length, len(self.values))
        if _parent is None:
            self._spline = CubicSpline(self.grid, self.values)
            self._offset = 0.0
        else:
            self._spline = _parent
            self._offset = float(_offset)
        self._deriv = self._spline.derivative()
        self._average = float(simpson(self.values, x=self.grid) / self.length)

    def __call__(self, x):
        return self._spline(np.asarray(x, dtype=float) + self._offset)

    @property
    def average(self) -> float:
        return self._average

    def derivative(self, x):
        return self._deriv(np.asarray(x, dtype=float) + self._offset)

    @property
    def spacing(self) -> float:
        return self.length / (len(self.values) - 1)

    def restrict(self, x0, x1):
        n = max(9, int(np.ceil((x1 - x0) / self.spacing)) + 1)
        if n % 2 == 0:
            n += 1
        grid = np.linspace(x0, x1, n)
        return Sampled(self(grid), x1 - x0, _parent=self._spline, _offset=self._offset + x0)

    def rescaled(self, new_length, factor):
        grid = np.linspace(0.0, self.length, max(len(self.values), 9))
        return Sampled(factor * self(grid), new_length)

    def to_dict(self):
        grid = self.grid if self._offset == 0.0 else np.linspace(0.0, self.length, len(self.values))
        return {"type": "sampled", "values": np.asarray(self(grid)).tolist()}

    def __repr__(self):
        return f"Sampled(<{len(self.values)} values>, length={self.length!r})"


def profile_from_dict(spec: dict, length: float) -> CoefficientProfile:
    kind = spec.get("type")
    if kind == "constant":
        return Constant(spec["value"], length)
    if kind == "piecewise":
        return PiecewiseConstant(spec["breakpoints"], spec["values"], length)
    if kind == "sampled":
        return Sampled(spec["values"], length)
    raise ValueError(f"unknown profile type {kind!r}")


def sample_function(func, length: float = 1.0, points: int = 257) -> Sampled:
    """Build a :class:`Sampled` profile from a callable on ``[0, length]``."""
    grid = np.linspace(0.0, length, points)
    return Sampled(func(grid), length)
