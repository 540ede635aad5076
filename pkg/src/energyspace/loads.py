"""Load power profiles with exact first and second derivatives."""

from __future__ import annotations

import bisect
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline


class LoadProfileError(ValueError):
    pass


class LoadProfile:
    """Base class. Subclasses implement :meth:`jet` returning ``(P, Pdot, Pddot)``."""

    kind = "abstract"

    def jet(self, t: float) -> tuple[float, float, float]:
        raise NotImplementedError

    def P(self, t: float) -> float:
        return self.jet(t)[0]

    def P_dot(self, t: float) -> float:
        return self.jet(t)[1]

    def P_ddot(self, t: float) -> float:
        return self.jet(t)[2]

    def check_positive(self, horizon: float, samples: int = 2001) -> None:
        for t in np.linspace(0.0, horizon, samples):
            P = self.jet(float(t))[0]
            if not P > 0.0:
                raise LoadProfileError(f"load power {P} not positive at t={t:g}")


class ConstantLoad(LoadProfile):
    kind = "constant"

    def __init__(self, P: float):
        self.value = float(P)

    def jet(self, t):
        return (self.value, 0.0, 0.0)

    def __repr__(self):
        return f"ConstantLoad({self.value})"


class SigmoidLoad(LoadProfile):
    """Smooth step ``P0 + dP / (1 + exp(-k (t - t0)))``."""

    kind = "sigmoid"

    def __init__(self, P0: float = 1000.0, dP: float = 1000.0, k: float = 2.0, t0: float = 5.0):
        if k <= 0:
            raise LoadProfileError("sigmoid steepness k must be positive")
        self.P0, self.dP, self.k, self.t0 = float(P0), float(dP), float(k), float(t0)

    def jet(self, t):
        a = -self.k * (t - self.t0)
        if a > 700.0:
            s = 0.0
        else:
            s = 1.0 / (1.0 + math.exp(a))
        ds = s * (1.0 - s)
        k = self.k
        return (
            self.P0 + self.dP * s,
            self.dP * k * ds,
            self.dP * k * k * ds * (1.0 - 2.0 * s),
        )

    def __repr__(self):
        return f"SigmoidLoad(P0={self.P0}, dP={self.dP}, k={self.k}, t0={self.t0})"


class PiecewiseLinearLoad(LoadProfile):
    """Linear interpolation between breakpoints, held constant outside them.

    The derivative is right-continuous at breakpoints and the second
    derivative is zero away from them.
    """

    kind = "piecewise-linear"

    def __init__(self, times: Sequence[float], powers: Sequence[float]):
        ts = [float(t) for t in times]
        ps = [float(p) for p in powers]
        if len(ts) != len(ps) or len(ts) < 1:
            raise LoadProfileError("times and powers must be non-empty and of equal length")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise LoadProfileError("breakpoint times must be strictly increasing")
        self.times, self.powers = ts, ps

    def jet(self, t):
        ts, ps = self.times, self.powers
        if t < ts[0]:
            return (ps[0], 0.0, 0.0)
        if t >= ts[-1]:
            return (ps[-1], 0.0, 0.0)
        j = bisect.bisect_right(ts, t) - 1
        slope = (ps[j + 1] - ps[j]) / (ts[j + 1] - ts[j])
        return (ps[j] + slope * (t - ts[j]), slope, 0.0)


class TabulatedLoad(LoadProfile):
    """Clamped cubic spline through tabulated ``(t, P)`` samples.

    Outside the table the power is held at the end values; the clamped end
    conditions make the first derivative continuous there.
    """

    kind = "tabulated"

    def __init__(self, times: Sequence[float], powers: Sequence[float], source: str | None = None):
        ts = np.asarray(times, dtype=float)
        ps = np.asarray(powers, dtype=float)
        if ts.ndim != 1 or ts.shape != ps.shape or ts.size < 2:
            raise LoadProfileError("table needs at least two (time, power) rows")
        if np.any(np.diff(ts) <= 0):
            raise LoadProfileError("table times must be strictly increasing")
        spline = CubicSpline(ts, ps, bc_type="clamped")
        self.source = source
        self._x = ts.tolist()
        # coefficients per interval, highest power first
        self._c = spline.c.T.tolist()
        self._spline = spline

    @classmethod
    def from_file(cls, path: str | Path) -> "TabulatedLoad":
        path = Path(path)
        try:
            data = np.loadtxt(path, comments="#", ndmin=2, delimiter=None)
        except ValueError as exc:
            raise LoadProfileError(f"{path}: {exc}") from exc
        if data.shape[1] != 2:
            raise LoadProfileError(f"{path}: expected two columns (time, power), got {data.shape[1]}")
        return cls(data[:, 0], data[:, 1], source=str(path))

    def jet(self, t):
        x = self._x
        if t <= x[0]:
            return (self._c[0][3], 0.0, 0.0)
        if t >= x[-1]:
            c = self._c[-1]
            dx = x[-1] - x[-2]
            return (((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3], 0.0, 0.0)
        j = bisect.bisect_right(x, t) - 1
        c3, c2, c1, c0 = self._c[j]
        dx = t - x[j]
        P = ((c3 * dx + c2) * dx + c1) * dx + c0
        Pd = (3.0 * c3 * dx + 2.0 * c2) * dx + c1
        Pdd = 6.0 * c3 * dx + 2.0 * c2
        return (P, Pd, Pdd)


def profile_from_config(cfg: dict, base_dir: Path | None = None) -> LoadProfile:
    """Build a profile from a ``[load]`` config table."""
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        return ConstantLoad(cfg.get("P", 1000.0))
    if kind == "sigmoid":
        return SigmoidLoad(
            P0=cfg.get("P0", 1000.0), dP=cfg.get("dP", 1000.0),
            k=cfg.get("k", 2.0), t0=cfg.get("t0", 5.0),
        )
    if kind == "piecewise-linear":
        return PiecewiseLinearLoad(cfg["times"], cfg["powers"])
    if kind == "tabulated":
        if "file" in cfg:
            path = Path(cfg["file"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            return TabulatedLoad.from_file(path)
        return TabulatedLoad(cfg["times"], cfg["powers"])
    raise LoadProfileError(f"unknown load kind {kind!r}")
