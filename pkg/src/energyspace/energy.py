"""Energy-space quantities of a single component.

A physical state ``x`` with inertia matrix ``H`` and dissipation matrix ``B``
is lifted to the triple ``(E, p, E_t)``: stored energy, its rate, and the
tangent-space energy. Port, control and disturbance inputs enter through
interaction rates ``(P, Qdot, P_t)`` computed from effort/flow pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

DEFAULT_EPS_D = 1e-12


class EnergySpaceError(Exception):
    """Base class for errors raised by the energy-space layer."""


class RejectedInputError(EnergySpaceError, ValueError):
    """Raised for non-finite or otherwise inadmissible inputs."""


class UndefinedTimeConstantError(EnergySpaceError):
    """Raised when a dissipation denominator is too small for a ratio."""

    def __init__(self, which: str, value: float):
        super().__init__(f"time constant undefined: {which} = {value!r} is not positive")
        self.which = which
        self.value = value


@dataclass(frozen=True)
class EffortFlowSample:
    e: float
    f: float
    e_dot: float
    f_dot: float


@dataclass(frozen=True)
class EnergyState:
    E: float
    p: float
    E_t: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.E, self.p, self.E_t)


@dataclass(frozen=True)
class TimeConstants:
    tau: float
    tau_t: float


@dataclass(frozen=True)
class InteractionRate:
    """Rate of an interaction variable: power, reactive-power rate, tangent power."""

    P: float = 0.0
    Qdot: float = 0.0
    P_t: float = 0.0

    def __add__(self, other: "InteractionRate") -> "InteractionRate":
        return InteractionRate(self.P + other.P, self.Qdot + other.Qdot, self.P_t + other.P_t)

    def __sub__(self, other: "InteractionRate") -> "InteractionRate":
        return InteractionRate(self.P - other.P, self.Qdot - other.Qdot, self.P_t - other.P_t)

    def __neg__(self) -> "InteractionRate":
        return InteractionRate(-self.P, -self.Qdot, -self.P_t)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.P, self.Qdot, self.P_t)


ZERO_RATE = InteractionRate()


class InteractionVariable:
    """Running integral of an interaction rate.

    The integral is advanced by the simulation's integrator (the caller passes
    the increment); this class only owns the accumulator.
    """

    def __init__(self, t0: float = 0.0, z0: tuple[float, float, float] = (0.0, 0.0, 0.0)):
        self.t0 = t0
        self.z = tuple(float(v) for v in z0)

    def advance(self, dz: Iterable[float]) -> None:
        self.z = tuple(a + b for a, b in zip(self.z, dz))

    def __repr__(self) -> str:
        return f"InteractionVariable(t0={self.t0}, z={self.z})"


@dataclass(frozen=True)
class EnergyLiftParams:
    """Inertia and dissipation matrix evaluators, ``state -> matrix``."""

    H: Callable[[np.ndarray], np.ndarray]
    B: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def constant(cls, H, B) -> "EnergyLiftParams":
        Hm = np.atleast_2d(np.asarray(H, dtype=float))
        Bm = np.atleast_2d(np.asarray(B, dtype=float))
        return cls(H=lambda x: Hm, B=lambda x: Bm)


def _vec(x, name: str = "x") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} has non-finite entries: {arr}")
    return arr


def _quad(v: np.ndarray, M: np.ndarray) -> float:
    return 0.5 * float(v @ M @ v)


def stored_energy(x, params: EnergyLiftParams) -> float:
    """``E = 1/2 x^T H(x) x``."""
    xv = _vec(x)
    return _quad(xv, params.H(xv))


def tangent_energy(x_dot, params: EnergyLiftParams, x) -> float:
    """``E_t = 1/2 xdot^T H(x) xdot``."""
    xv = _vec(x)
    return _quad(_vec(x_dot, "x_dot"), params.H(xv))


def dissipation(x, params: EnergyLiftParams) -> float:
    xv = _vec(x)
    return _quad(xv, params.B(xv))


def tangent_dissipation(x_dot, params: EnergyLiftParams, x) -> float:
    xv = _vec(x)
    return _quad(_vec(x_dot, "x_dot"), params.B(xv))


def time_constants(E: float, D: float, E_t: float, D_t: float,
                   eps_D: float = DEFAULT_EPS_D) -> TimeConstants:
    if not D > eps_D:
        raise UndefinedTimeConstantError("D", D)
    if not D_t > eps_D:
        raise UndefinedTimeConstantError("D_t", D_t)
    return TimeConstants(tau=E / D, tau_t=E_t / D_t)


def rate_tuple(e: float, f: float, e_dot: float, f_dot: float) -> tuple[float, float, float]:
    """``(P, Qdot, P_t) = (e f, e fdot - f edot, edot fdot)`` on plain floats."""
    return (e * f, e * f_dot - f * e_dot, e_dot * f_dot)


def interaction_rate(s: EffortFlowSample) -> InteractionRate:
    vals = (s.e, s.f, s.e_dot, s.f_dot)
    if not all(math.isfinite(v) for v in vals):
        raise RejectedInputError(f"non-finite effort/flow sample: {s}")
    return InteractionRate(*rate_tuple(s.e, s.f, s.e_dot, s.f_dot))


def energy_rhs(
    xz: EnergyState,
    tc: Optional[TimeConstants],
    Qdot_C: float,
    r: InteractionRate,
    u: InteractionRate,
    m: InteractionRate,
    D: Optional[float] = None,
    D_t: Optional[float] = None,
) -> EnergyState:
    """Right-hand side of the third-order energy model.

    Returns ``(dE/dt, dp/dt, dE_t/dt)``. The dissipation terms ``E/tau`` and
    ``E_t/tau_t`` are taken from ``tc`` when given; otherwise the dissipation
    values ``D`` and ``D_t`` must be supplied (they are the same quantity and
    stay well defined when a time constant does not).
    """
    if tc is not None:
        loss = xz.E / tc.tau
        loss_t = xz.E_t / tc.tau_t
    else:
        if D is None or D_t is None:
            raise UndefinedTimeConstantError("D" if D is None else "D_t", float("nan"))
        loss, loss_t = D, D_t
    dE = -loss + r.P + u.P + m.P
    dp = 4.0 * xz.E_t + 2.0 * Qdot_C - r.Qdot - u.Qdot - m.Qdot
    dEt = -loss_t + r.P_t + u.P_t + m.P_t
    return EnergyState(dE, dp, dEt)


def tellegen_residual(rates: Iterable[InteractionRate], own: InteractionRate) -> InteractionRate:
    """``own + sum(rates)``; zero when the sum-zero interconnection holds."""
    total = own
    for r in rates:
        total = total + r
    return total
