"""Control laws, energy-reference lifts and energy-to-physical input maps.

The energy-space laws compute a scalar primary input ``u_z`` (the reactive
power rate commanded at the control port). Plant-specific maps turn ``u_z``
into a physical actuation: an integrated source voltage for the RLC circuit
and an algebraic valve position for the generator.

Controller objects used by the simulator expose :meth:`Controller.evaluate`,
which returns the physical input, its time derivative, the derivative of any
internal controller state and a few diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .components import Generator, GenParams, RlcParams, RlcSource, SingularityError
from .energy import EnergyState

NAN = float("nan")


@dataclass(frozen=True)
class EnergyReference:
    E_ref: float
    p_ref: float
    pdot_ref: float


@dataclass(frozen=True)
class FblcGains:
    K1: float = 10.0
    K2: float = 10.0

    def __post_init__(self):
        if not (self.K1 > 0 and self.K2 > 0):
            raise ValueError("FBLC gains K1, K2 must be positive")


@dataclass(frozen=True)
class SmcGains:
    M0: float = 5.4
    M1: float = 2.9
    eps_bl: float = 0.0

    def __post_init__(self):
        if not (self.M0 > 0 and self.M1 > 0):
            raise ValueError("SMC gains M0, M1 must be positive")
        if self.eps_bl < 0:
            raise ValueError("boundary layer eps_bl must be non-negative")


@dataclass(frozen=True)
class ProportionalGains:
    Ki: float = 5.0
    Kv: float = 0.5


@dataclass(frozen=True)
class BraytonMoserGains:
    N1: float = 8.0
    N2: float = 1.0
    N3: float = 2.0
    Pi: float = 3e3


@dataclass(frozen=True)
class DroopGains:
    Tg: float = 0.2
    r: float = 0.2

    def __post_init__(self):
        if not self.Tg > 0:
            raise ValueError("governor time constant Tg must be positive")
        if self.r == 0:
            raise ValueError("droop coefficient r must be nonzero")


# -- energy-space laws -------------------------------------------------------

def sgn_eps(sigma: float, eps_bl: float) -> float:
    """Sign function, or its boundary-layer saturation when ``eps_bl > 0``."""
    if eps_bl > 0.0:
        return sigma / max(abs(sigma), eps_bl)
    if sigma > 0.0:
        return 1.0
    if sigma < 0.0:
        return -1.0
    return 0.0


def fblc_uz(xz: EnergyState, Qdot_C: float, neighbor_Qdot_sum: float,
            ref: EnergyReference, g: FblcGains) -> float:
    return (4.0 * xz.E_t + 2.0 * Qdot_C + neighbor_Qdot_sum
            + g.K1 * (xz.E - ref.E_ref) + g.K2 * (xz.p - ref.p_ref) - ref.pdot_ref)


def smc_sigma(xz: EnergyState, ref: EnergyReference, M1: float) -> float:
    return (xz.p - ref.p_ref) + M1 * (xz.E - ref.E_ref)


def smc_uz(xz: EnergyState, Qdot_C: float, neighbor_Qdot_sum: float,
           ref: EnergyReference, g: SmcGains) -> tuple[float, float]:
    """Returns ``(u_z, sigma)``."""
    sigma = smc_sigma(xz, ref, g.M1)
    uz = (4.0 * xz.E_t + 2.0 * Qdot_C + neighbor_Qdot_sum
          + g.M1 * (xz.p - ref.p_ref) + g.M0 * sgn_eps(sigma, g.eps_bl) - ref.pdot_ref)
    return uz, sigma


# -- reference lifts ---------------------------------------------------------

def rlc_reference_jet(P: float, P_dot: float, P_ddot: float, y_ref: float,
                      params: RlcParams) -> EnergyReference:
    if not y_ref > 0:
        raise ValueError("voltage reference must be positive")
    L = params.L1
    y2 = y_ref * y_ref
    return EnergyReference(
        E_ref=0.5 * L * (P / y_ref) ** 2 + 0.5 * params.C1 * y2,
        p_ref=L * P * P_dot / y2,
        pdot_ref=L * (P_dot * P_dot + P * P_ddot) / y2,
    )


def rlc_reference_lift(profile, t: float, y_ref: float, params: RlcParams) -> EnergyReference:
    return rlc_reference_jet(*profile.jet(t), y_ref, params)


def gen_reference_lift(y_ref: float, params: GenParams) -> EnergyReference:
    if not y_ref > 0:
        raise ValueError("frequency reference must be positive")
    return EnergyReference(0.5 * params.J1 * y_ref * y_ref, 0.0, 0.0)


# -- energy-to-physical maps -------------------------------------------------

class ControlSingularityError(SingularityError):
    pass


def rlc_uz_rate(u_z: float, x, x_dot, u: float, i_min: float = 1e-3) -> float:
    """``du/dt = (u/i) di/dt - u_z/i`` for the inverter source voltage."""
    i = x[0]
    if abs(i) <= i_min:
        raise ControlSingularityError("inductor current", i, i_min)
    return (u * x_dot[0] - u_z) / i


def rlc_uz_to_u(u_z: float, x, x_dot, u_prev: float, h: float, i_min: float = 1e-3) -> float:
    """One RK4 step of the source-voltage map with the plant sample held fixed."""
    f = lambda u: rlc_uz_rate(u_z, x, x_dot, u, i_min)
    k1 = f(u_prev)
    k2 = f(u_prev + 0.5 * h * k1)
    k3 = f(u_prev + 0.5 * h * k2)
    k4 = f(u_prev + h * k3)
    return u_prev + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def gen_uz_to_u(u_z: float, x, x_dot, params: GenParams, w_min: float = 1.0) -> float:
    """Valve position that realizes the commanded control reactive-power rate."""
    w, Pm = x
    if abs(w) <= w_min:
        raise ControlSingularityError("rotor speed", w, w_min)
    return (params.Tt * (2.0 * x_dot[0] * Pm / w - u_z) + Pm) / params.Kt


# -- benchmark laws ----------------------------------------------------------

def proportional_u(x, y_ref: float, P_load: float, params: RlcParams,
                   gains: ProportionalGains = ProportionalGains()) -> float:
    i, v = x
    u_ref = y_ref + params.R1 * P_load / y_ref
    return u_ref - gains.Ki * (i - P_load / y_ref) - gains.Kv * (v - y_ref)


def brayton_moser_u(x, x_dot, y_ref: float, params: RlcParams,
                    gains: BraytonMoserGains = BraytonMoserGains(), v_min: float = 1e-3) -> float:
    i, v = x
    if abs(v) <= v_min:
        raise SingularityError("bus voltage", v, v_min)
    dv = x_dot[1]
    return (y_ref + params.R1 * i - params.L1 * (gains.Pi / (v * v) + gains.N3) * dv
            - (gains.N1 * (v - y_ref) + gains.N2 * dv))


def droop_rate(a: float, w: float, y_ref: float, gains: DroopGains) -> float:
    return -a / gains.Tg - (w - y_ref) / (gains.Tg * gains.r)


def droop_governor_step(a_prev: float, w: float, y_ref: float, gains: DroopGains, h: float) -> float:
    """One RK4 step of the governor with the speed sample held fixed."""
    f = lambda a: droop_rate(a, w, y_ref, gains)
    k1 = f(a_prev)
    k2 = f(a_prev + 0.5 * h * k1)
    k3 = f(a_prev + 0.5 * h * k2)
    k4 = f(a_prev + h * k3)
    return a_prev + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# -- controller objects for the simulator ------------------------------------

@dataclass
class ControlOutput:
    u: float
    u_dot: float
    c_dot: tuple
    u_z: float = NAN
    sigma: float = NAN
    V: float = NAN
    ref: Optional[EnergyReference] = None


DisturbanceFn = Callable[[float, float], float]


class Controller:
    """Base class. ``plant`` is the component the law was designed for."""

    name = "controller"
    energy_based = False
    state_names: tuple[str, ...] = ()

    def __init__(self, plant, y_ref: float):
        self.plant = plant
        self.y_ref = float(y_ref)

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def initial_state(self, x0, t0: float, load_jet) -> tuple:
        return ()

    def steady_state_guess(self, x_eq, u_eq: float, load_jet) -> tuple:
        """Internal state consistent with holding ``u_eq`` at ``x_eq``."""
        return self.initial_state(x_eq, 0.0, load_jet)

    def reference(self, P: float, P_dot: float, P_ddot: float) -> EnergyReference:
        if isinstance(self.plant, RlcSource):
            return rlc_reference_jet(P, P_dot, P_ddot, self.y_ref, self.plant.params)
        return gen_reference_lift(self.y_ref, self.plant.params)

    def evaluate(self, t, x, c, load_jet, neighbor_Qdot_sum, disturbance: DisturbanceFn | None = None
                 ) -> ControlOutput:
        raise NotImplementedError


class EnergyController(Controller):
    """FBLC or SMC in energy space, realized through the plant-specific map.

    ``disturbance(t, e_p)`` returns an extra reactive-power rate that the
    actuator realizes on top of the command; the law never sees it.
    With ``pdot_estimate=True`` the reference acceleration is replaced by a
    dirty-derivative of ``p_ref`` with filter time constant ``filter_tau``,
    carried as an extra controller state.
    """

    energy_based = True

    def __init__(self, plant, y_ref, law: str, gains, u0: float = 79.0,
                 pdot_estimate: bool = False, filter_tau: float = 1e-3, i_min: float = 1e-3):
        super().__init__(plant, y_ref)
        if law not in ("fblc", "smc"):
            raise ValueError(f"unknown energy law {law!r}")
        if law == "fblc" and not isinstance(gains, FblcGains):
            raise TypeError("FBLC needs FblcGains")
        if law == "smc" and not isinstance(gains, SmcGains):
            raise TypeError("SMC needs SmcGains")
        self.law = law
        self.name = law
        self.gains = gains
        self.u0 = float(u0)
        self.pdot_estimate = pdot_estimate
        self.filter_tau = float(filter_tau)
        self.i_min = i_min
        self.is_rlc = isinstance(plant, RlcSource)
        names = ("u_vs",) if self.is_rlc else ()
        if pdot_estimate:
            names = names + ("p_ref_filt",)
        self.state_names = names

    def initial_state(self, x0, t0, load_jet):
        c = [self.u0] if self.is_rlc else []
        if self.pdot_estimate:
            c.append(self.reference(*load_jet).p_ref)
        return tuple(c)

    def steady_state_guess(self, x_eq, u_eq, load_jet):
        c = list(self.initial_state(x_eq, 0.0, load_jet))
        if self.is_rlc:
            c[0] = float(u_eq)
        return tuple(c)

    def lyapunov(self, eE: float, ep: float, sigma: float) -> float:
        if self.law == "fblc":
            return 0.5 * (self.gains.K1 * eE * eE + ep * ep)
        return 0.5 * sigma * sigma

    def evaluate(self, t, x, c, load_jet, neighbor_Qdot_sum, disturbance=None):
        plant = self.plant
        P, Pd, Pdd = load_jet
        ref = self.reference(P, Pd, Pdd)
        c_dot = []
        if self.pdot_estimate:
            w = c[-1]
            est = (ref.p_ref - w) / self.filter_tau
            ref = EnergyReference(ref.E_ref, ref.p_ref, est)
        if self.is_rlc:
            u = c[0]
            x_dot = plant.rhs(x, u, P)
            E, p, Et, _, _ = plant.energy(x, x_dot)
            vdd = plant.v_ddot(x, x_dot, P, Pd)
            QC = plant.params.C1 * (x[1] * vdd - x_dot[1] * x_dot[1])
        else:
            wdot = plant.omega_dot(x, P)
            x_dot = (wdot, 0.0)
            E, p, Et, _, _ = plant.energy(x, x_dot)
            QC = 0.0
        xz = EnergyState(E, p, Et)
        if self.law == "fblc":
            uz = fblc_uz(xz, QC, neighbor_Qdot_sum, ref, self.gains)
            sigma = NAN
        else:
            uz, sigma = smc_uz(xz, QC, neighbor_Qdot_sum, ref, self.gains)
        eE = E - ref.E_ref
        ep = p - ref.p_ref
        realized = uz
        if disturbance is not None:
            realized = uz + disturbance(t, ep)
        if self.is_rlc:
            u_dot = rlc_uz_rate(realized, x, x_dot, u, self.i_min)
            c_dot.append(u_dot)
        else:
            u = gen_uz_to_u(realized, x, x_dot, plant.params, plant.w_min)
            # the valve rate is not needed by any rotor-side energy quantity
            u_dot = NAN
        if self.pdot_estimate:
            c_dot.append((ref.p_ref - c[-1]) / self.filter_tau)
        return ControlOutput(u=u, u_dot=u_dot, c_dot=tuple(c_dot), u_z=uz, sigma=sigma,
                             V=self.lyapunov(eE, ep, sigma), ref=ref)


class ProportionalController(Controller):
    name = "proportional"

    def __init__(self, plant: RlcSource, y_ref, gains: ProportionalGains = ProportionalGains()):
        if not isinstance(plant, RlcSource):
            raise TypeError("proportional benchmark is defined for the RLC source")
        super().__init__(plant, y_ref)
        self.gains = gains

    def evaluate(self, t, x, c, load_jet, neighbor_Qdot_sum, disturbance=None):
        P, Pd, Pdd = load_jet
        prm = self.plant.params
        y = self.y_ref
        u = proportional_u(x, y, P, prm, self.gains)
        di, dv = self.plant.rhs(x, u, P)
        u_dot = prm.R1 * Pd / y - self.gains.Ki * (di - Pd / y) - self.gains.Kv * dv
        return ControlOutput(u=u, u_dot=u_dot, c_dot=(), ref=self.reference(P, Pd, Pdd))


class BraytonMoserController(Controller):
    name = "brayton_moser"

    def __init__(self, plant: RlcSource, y_ref, gains: BraytonMoserGains = BraytonMoserGains()):
        if not isinstance(plant, RlcSource):
            raise TypeError("Brayton-Moser benchmark is defined for the RLC source")
        super().__init__(plant, y_ref)
        self.gains = gains

    def evaluate(self, t, x, c, load_jet, neighbor_Qdot_sum, disturbance=None):
        P, Pd, Pdd = load_jet
        plant = self.plant
        prm, g = plant.params, self.gains
        i, v = x
        dv = (i - P / v) / prm.C1
        u = brayton_moser_u(x, (NAN, dv), self.y_ref, prm, g, plant.v_min)
        di = (-prm.R1 * i - v + u) / prm.L1
        vdd = plant.v_ddot(x, (di, dv), P, Pd)
        u_dot = (prm.R1 * di + 2.0 * prm.L1 * g.Pi * dv * dv / (v * v * v)
                 - (prm.L1 * (g.Pi / (v * v) + g.N3) + g.N2) * vdd - g.N1 * dv)
        return ControlOutput(u=u, u_dot=u_dot, c_dot=(), ref=self.reference(P, Pd, Pdd))


class DroopController(Controller):
    name = "droop"
    state_names = ("a1",)

    def __init__(self, plant: Generator, y_ref, gains: DroopGains = DroopGains(), a0: float | None = None):
        if not isinstance(plant, Generator):
            raise TypeError("droop governor is defined for the generator")
        super().__init__(plant, y_ref)
        self.gains = gains
        self.a0 = a0

    def initial_state(self, x0, t0, load_jet):
        a0 = self.a0 if self.a0 is not None else x0[1] / self.plant.params.Kt
        return (float(a0),)

    def evaluate(self, t, x, c, load_jet, neighbor_Qdot_sum, disturbance=None):
        a = c[0]
        da = droop_rate(a, x[0], self.y_ref, self.gains)
        return ControlOutput(u=a, u_dot=da, c_dot=(da,), ref=self.reference(*load_jet))


class ZeroGainController(Controller):
    """Holds the physical input at a constant value."""

    name = "constant"

    def __init__(self, plant, y_ref, u: float):
        super().__init__(plant, y_ref)
        self.u = float(u)

    def evaluate(self, t, x, c, load_jet, neighbor_Qdot_sum, disturbance=None):
        return ControlOutput(u=self.u, u_dot=0.0, c_dot=(), ref=self.reference(*load_jet))
