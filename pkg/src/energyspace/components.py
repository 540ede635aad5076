"""Physical-layer component models.

Two concrete components are provided:

* :class:`RlcSource` -- series R-L branch fed by an ideal controllable voltage
  source, charging a shunt capacitor that supplies a constant-power load.
* :class:`Generator` -- swing equation in power/speed form driven by a
  first-order (IEEE Type-1) turbine whose valve position is the input.

Both expose plain-float evaluators because they sit in the integrator's inner
loop. States are tuples ``(x0, x1)``; the load power ``r`` is the port input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EffortFlowSample, EnergyLiftParams, InteractionRate, rate_tuple
from .loads import LoadProfile


class SingularityError(ArithmeticError):
    """State reached a region where the model divides by (nearly) zero."""

    def __init__(self, what: str, value: float, limit: float):
        super().__init__(f"{what} singularity: |{value!r}| <= {limit!r}")
        self.what = what
        self.value = value
        self.limit = limit


class UnknownPortError(KeyError):
    pass


@dataclass(frozen=True)
class RlcParams:
    R1: float = 0.1
    L1: float = 1.12e-3
    C1: float = 6.8e-3

    def __post_init__(self):
        for name in ("R1", "L1", "C1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class GenParams:
    J1: float = 10.0
    D1: float = 0.01
    Tt: float = 0.5
    Kt: float = 1000.0

    def __post_init__(self):
        for name in ("J1", "D1", "Tt", "Kt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


class PhysComponent:
    """Interface shared by the concrete components.

    ``coupling`` names the shared bus variable (``"voltage"`` or
    ``"frequency"``) through which the load port is attached.
    """

    state_names: tuple[str, ...] = ()
    input_name = "u"
    output_index = 0
    coupling = ""

    @property
    def state_dim(self) -> int:
        return len(self.state_names)

    def rhs(self, x, u, r, m=0.0, t=0.0):
        raise NotImplementedError

    def rhs_jet(self, x, u, r, u_dot, r_dot):
        raise NotImplementedError

    def ports(self) -> tuple[str, ...]:
        raise NotImplementedError

    def effort_flow(self, port, x, x_dot, u, u_dot, x_ddot=None) -> EffortFlowSample:
        raise NotImplementedError

    def lift_params(self) -> EnergyLiftParams:
        raise NotImplementedError

    def energy(self, x, x_dot) -> tuple[float, float, float, float, float]:
        """``(E, p, E_t, D, D_t)`` evaluated directly on floats."""
        raise NotImplementedError

    def qdot_C(self, x, x_dot, x_ddot) -> float:
        return 0.0

    def output(self, x) -> float:
        return x[self.output_index]

    def bus(self, x, r) -> tuple[float, float]:
        """Shared bus variable and its rate; neither depends on the control input."""
        raise NotImplementedError

    def port_rate(self, x, x_dot, x_ddot) -> tuple[float, float, float]:
        """Rate of the port interaction variable computed from the component's own physics."""
        raise NotImplementedError


class RlcSource(PhysComponent):
    state_names = ("i1", "v1")
    input_name = "u_vs"
    output_index = 1
    coupling = "voltage"

    def __init__(self, params: RlcParams = RlcParams(), v_min: float = 1e-3):
        self.params = params
        self.v_min = v_min

    def _check(self, v):
        if abs(v) <= self.v_min:
            raise SingularityError("bus voltage", v, self.v_min)

    def rhs(self, x, u, r, m=0.0, t=0.0):
        i, v = x
        self._check(v)
        p = self.params
        return ((-p.R1 * i - v + u) / p.L1, (i - r / v) / p.C1)

    def rhs_jet(self, x, u, r, u_dot, r_dot):
        i, v = x
        self._check(v)
        p = self.params
        di = (-p.R1 * i - v + u) / p.L1
        dv = (i - r / v) / p.C1
        # d/dt of the load current r / v
        dload = (r_dot * v - r * dv) / (v * v)
        ddi = (-p.R1 * di - dv + u_dot) / p.L1
        ddv = (di - dload) / p.C1
        return (di, dv), (ddi, ddv)

    def v_ddot(self, x, x_dot, r, r_dot) -> float:
        """Capacitor voltage acceleration; independent of the source voltage rate."""
        v = x[1]
        di, dv = x_dot
        return (di - (r_dot * v - r * dv) / (v * v)) / self.params.C1

    def bus(self, x, r):
        i, v = x
        self._check(v)
        return v, (i - r / v) / self.params.C1

    def port_rate(self, x, x_dot, x_ddot):
        # current drawn from the bus by the load is i - C dv/dt
        C = self.params.C1
        return rate_tuple(x[1], -(x[0] - C * x_dot[1]), x_dot[1], -(x_dot[0] - C * x_ddot[1]))

    def ports(self):
        return ("control", "capacitor", "bus")

    def effort_flow(self, port, x, x_dot, u, u_dot, x_ddot=None):
        i, v = x
        di, dv = x_dot
        if port == "control":
            return EffortFlowSample(e=u, f=i, e_dot=u_dot, f_dot=di)
        if port == "bus":
            if x_ddot is None:
                raise ValueError("bus port needs the second state derivative")
            C = self.params.C1
            return EffortFlowSample(e=v, f=-(i - C * dv), e_dot=dv, f_dot=-(di - C * x_ddot[1]))
        if port == "capacitor":
            if x_ddot is None:
                raise ValueError("capacitor port needs the second state derivative")
            C = self.params.C1
            return EffortFlowSample(e=v, f=C * dv, e_dot=dv, f_dot=C * x_ddot[1])
        raise UnknownPortError(port)

    def lift_params(self):
        p = self.params
        return EnergyLiftParams.constant(np.diag([p.L1, p.C1]), np.diag([2.0 * p.R1, 0.0]))

    def energy(self, x, x_dot):
        i, v = x
        di, dv = x_dot
        p = self.params
        E = 0.5 * p.L1 * i * i + 0.5 * p.C1 * v * v
        pw = p.L1 * i * di + p.C1 * v * dv
        Et = 0.5 * p.L1 * di * di + 0.5 * p.C1 * dv * dv
        return E, pw, Et, p.R1 * i * i, p.R1 * di * di

    def qdot_C(self, x, x_dot, x_ddot):
        v = x[1]
        dv = x_dot[1]
        return self.params.C1 * (v * x_ddot[1] - dv * dv)

    def control_rate(self, x, x_dot, u, u_dot) -> tuple[float, float, float]:
        return rate_tuple(u, x[0], u_dot, x_dot[0])

    def equilibrium(self, y_ref: float, P: float) -> tuple[tuple[float, float], float]:
        """Steady state with bus voltage ``y_ref`` under constant load ``P``."""
        i = P / y_ref
        return (i, y_ref), y_ref + self.params.R1 * i


class Generator(PhysComponent):
    state_names = ("omega1", "Pm1")
    input_name = "a1"
    output_index = 0
    coupling = "frequency"

    def __init__(self, params: GenParams = GenParams(), w_min: float = 1.0):
        self.params = params
        self.w_min = w_min

    def _check(self, w):
        if abs(w) <= self.w_min:
            raise SingularityError("rotor speed", w, self.w_min)

    def omega_dot(self, x, r) -> float:
        w, Pm = x
        self._check(w)
        p = self.params
        return -p.D1 / p.J1 * w + (Pm - r) / (p.J1 * w)

    def rhs(self, x, u, r, m=0.0, t=0.0):
        p = self.params
        return (self.omega_dot(x, r), -x[1] / p.Tt + p.Kt / p.Tt * u)

    def rhs_jet(self, x, u, r, u_dot, r_dot):
        w, Pm = x
        p = self.params
        dw = self.omega_dot(x, r)
        dPm = -Pm / p.Tt + p.Kt / p.Tt * u
        ddw = -p.D1 / p.J1 * dw + (dPm - r_dot) / (p.J1 * w) - (Pm - r) * dw / (p.J1 * w * w)
        ddPm = -dPm / p.Tt + p.Kt / p.Tt * u_dot
        return (dw, dPm), (ddw, ddPm)

    def bus(self, x, r):
        return x[0], self.omega_dot(x, r)

    def _bus_pair(self, x, x_dot, x_ddot):
        # electrical torque-equivalent effort delivered to the load, sign: into the machine
        w, Pm = x
        dw, dPm = x_dot
        p = self.params
        e = -(Pm / w - p.D1 * w - p.J1 * dw)
        e_dot = -((dPm * w - Pm * dw) / (w * w) - p.D1 * dw - p.J1 * x_ddot[0])
        return e, w, e_dot, dw

    def port_rate(self, x, x_dot, x_ddot):
        return rate_tuple(*self._bus_pair(x, x_dot, x_ddot))

    def ports(self):
        return ("control", "bus")

    def effort_flow(self, port, x, x_dot, u, u_dot, x_ddot=None):
        w, Pm = x
        dw, dPm = x_dot
        if port == "control":
            return EffortFlowSample(e=Pm / w, f=w, e_dot=(dPm * w - Pm * dw) / (w * w), f_dot=dw)
        if port == "bus":
            if x_ddot is None:
                raise ValueError("bus port needs the second state derivative")
            return EffortFlowSample(*self._bus_pair(x, x_dot, x_ddot))
        raise UnknownPortError(port)

    def lift_params(self):
        # only the rotor stores energy; the turbine state enters through the port
        p = self.params
        return EnergyLiftParams.constant(np.diag([p.J1, 0.0]), np.diag([2.0 * p.D1, 0.0]))

    def energy(self, x, x_dot):
        w = x[0]
        dw = x_dot[0]
        p = self.params
        return (0.5 * p.J1 * w * w, p.J1 * w * dw, 0.5 * p.J1 * dw * dw,
                p.D1 * w * w, p.D1 * dw * dw)

    def control_rate(self, x, x_dot, u, u_dot) -> tuple[float, float, float]:
        w, Pm = x
        dw, dPm = x_dot
        return rate_tuple(Pm / w, w, (dPm * w - Pm * dw) / (w * w), dw)

    def equilibrium(self, y_ref: float, P: float) -> tuple[tuple[float, float], float]:
        p = self.params
        Pm = P + p.D1 * y_ref * y_ref
        return (y_ref, Pm), Pm / p.Kt


def load_rate(coupling: str, P: float, P_dot: float, y: float, y_dot: float) -> tuple[float, float, float]:
    """Interaction rate of a power load attached to a voltage or frequency bus.

    Voltage bus: ``(e, f) = (v, P/v)``. Frequency bus: ``(e, f) = (P/w, w)``.
    Either way ``P`` (the first entry) equals the load power exactly.
    """
    if y == 0.0:
        raise SingularityError(f"{coupling} coupling", y, 0.0)
    ratio_dot = (P_dot * y - P * y_dot) / (y * y)
    if coupling == "voltage":
        return (P, y * ratio_dot - (P / y) * y_dot, y_dot * ratio_dot)
    if coupling == "frequency":
        return (P, (P / y) * y_dot - y * ratio_dot, ratio_dot * y_dot)
    raise ValueError(f"unknown coupling {coupling!r}")


def load_interaction(profile: LoadProfile, coupling: tuple[float, float], t: float,
                     kind: str = "voltage") -> InteractionRate:
    """Rate reported by a load at time ``t`` given the bus value and its rate."""
    P, Pd, _ = profile.jet(t)
    y, y_dot = coupling
    return InteractionRate(*load_rate(kind, P, Pd, y, y_dot))
