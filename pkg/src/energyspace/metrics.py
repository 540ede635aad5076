"""Performance metrics and residual monitors over recorded trajectories."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .sim import Trajectory

SETTLING_FRACTION = 0.02


@dataclass
class Metrics:
    steady_state_error: float
    overshoot: float
    settling_time_2pct: float
    settled: bool
    effort_l2: float
    effort_tv: float
    u_ss: float
    reaching_time: Optional[float] = None
    certificate_violations: int = 0
    band_basis: str = "reference"

    def as_dict(self) -> dict:
        return asdict(self)


def _first_zero_crossing(t: np.ndarray, s: np.ndarray) -> Optional[float]:
    """Time of the first sign change or zero of ``s`` (linear interpolation)."""
    if s.size == 0 or not math.isfinite(s[0]):
        return None
    if s[0] == 0.0:
        return float(t[0])
    sgn0 = math.copysign(1.0, s[0])
    hit = np.nonzero(s * sgn0 <= 0.0)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    s0, s1 = s[k - 1], s[k]
    return float(t[k - 1] + (t[k] - t[k - 1]) * s0 / (s0 - s1))


def settling_time(t: np.ndarray, y: np.ndarray, y_ref: float, band: float) -> tuple[float, bool]:
    """Last exit from the ``|y - y_ref| <= band`` tube, interpolated.

    Returns ``(time, settled)``; when the final sample is outside the tube the
    horizon end is returned with ``settled=False``.
    """
    err = np.abs(y - y_ref)
    out = np.nonzero(err > band)[0]
    if out.size == 0:
        return float(t[0]), True
    k = int(out[-1])
    if k == len(t) - 1:
        return float(t[-1]), False
    e0, e1 = err[k] - band, err[k + 1] - band
    return float(t[k] + (t[k + 1] - t[k]) * e0 / (e0 - e1)), True


def compute_metrics(traj: Trajectory, y_ref: float | None = None, window: float | None = None,
                    band_basis: str = "reference", u_ss: float | None = None) -> Metrics:
    """Metrics of the output ``y`` against a constant setpoint.

    ``window`` is the final averaging window (default: last 10% of the run).
    ``band_basis`` selects what the 2% settling band is relative to:
    ``"reference"`` uses ``|y_ref|``, ``"span"`` the initial error ``|y(0) - y_ref|``.
    """
    t = traj.t
    y = traj["y"]
    if y_ref is None:
        y_ref = float(traj["y_ref"][0])
    duration = t[-1] - t[0]
    if window is None:
        window = 0.1 * duration
    if not 0 < window <= duration:
        raise ValueError("window must lie within the recorded horizon")
    tail = t >= t[-1] - window - 1e-12 * max(1.0, abs(t[-1]))
    sse = float(np.mean(np.abs(y[tail] - y_ref)))

    span = abs(y[0] - y_ref)
    if span > 0:
        direction = math.copysign(1.0, y_ref - y[0])
        overshoot = max(0.0, float(np.max((y - y_ref) * direction) / span))
    else:
        overshoot = float(np.max(np.abs(y - y_ref))) / abs(y_ref) if y_ref else 0.0

    if band_basis == "reference":
        basis = abs(y_ref)
    elif band_basis == "span":
        basis = span if span > 0 else abs(y_ref)
    else:
        raise ValueError(f"unknown band basis {band_basis!r}")
    ts, settled = settling_time(t, y, y_ref, SETTLING_FRACTION * basis)

    u = traj["u"]
    if u_ss is None:
        u_ss = float(np.mean(u[tail]))
    l2 = float(trapezoid((u - u_ss) ** 2, t))
    tv = float(np.sum(np.abs(np.diff(u))))

    sigma = traj["sigma"]
    t_r = _first_zero_crossing(t, sigma) if np.all(np.isfinite(sigma)) else None
    return Metrics(steady_state_error=sse, overshoot=overshoot, settling_time_2pct=ts, settled=settled,
                   effort_l2=l2, effort_tv=tv, u_ss=u_ss, reaching_time=t_r, band_basis=band_basis)


class DecimatedTrajectoryError(ValueError):
    pass


def residual_monitors(traj: Trajectory, allow_decimated: bool = False) -> dict:
    """Max and RMS of the per-step balance residuals.

    Residuals are also reported per unit time (divided by ``h``), which is the
    form that scales as ``h**4`` for a fourth-order integrator. The
    ``gap_*`` entries are the drift between the lifted energy quantities and
    their integrated energy-space balances, i.e. the inter-layer consistency gap.
    With ``allow_decimated`` the residuals span ``decimation`` steps each.
    """
    dec = int(traj.meta.get("decimation", 1))
    if dec != 1 and not allow_decimated:
        raise DecimatedTrajectoryError("residual monitors need full-rate recording")
    t = traj.t
    if len(t) > 2:
        dt = np.diff(t)
        if np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
            raise DecimatedTrajectoryError("non-uniform time grid")
    h = traj.h * dec
    out: dict = {"steps": len(t) - 1, "h": traj.h, "decimation": dec}
    for name in ("res_E", "res_p", "res_Et", "tellegen_P", "tellegen_Qdot", "tellegen_Pt"):
        r = traj[name][1:] if name.startswith("res") else traj[name]
        out[f"{name}_max"] = float(np.max(np.abs(r))) if r.size else 0.0
        out[f"{name}_rms"] = float(np.sqrt(np.mean(r * r))) if r.size else 0.0
        if name.startswith("res"):
            out[f"{name}_max_per_time"] = out[f"{name}_max"] / h
    scale = float(np.max(np.abs(traj["E"])))
    out["tellegen_P_rel"] = out["tellegen_P_max"] / max(float(np.max(np.abs(traj["P_load"]))), 1e-300)
    for base, acc in (("E", "acc_E"), ("p", "acc_p"), ("E_t", "acc_Et")):
        gap = (traj[base] - traj[base][0]) - traj[acc]
        out[f"gap_{base}_max"] = float(np.max(np.abs(gap)))
    out["gap_E_rel"] = out["gap_E_max"] / scale if scale else 0.0
    return out
