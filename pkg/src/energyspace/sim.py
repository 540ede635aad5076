"""Fixed-step simulation of a controlled component and its load.

The integrated (augmented) state is::

    [physical state | controller state | z_r (3) | z_u (3) | z_m (3) | A_E, A_p, A_Et]

where ``z_*`` are the interaction variables and ``A_*`` integrate the right-hand
sides of the three energy equations. Comparing ``A_*`` increments with the
increments of the lifted ``(E, p, E_t)`` gives the per-step balance residuals.

Every step: the load publishes its port rate (delayed exchange only), the
controller is evaluated on the lifted state, and one classical RK4 step
advances the whole augmented system. With ``delay_steps == 0`` the exchange
is exact: the neighbor rate is re-evaluated at every RK4 stage.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .components import PhysComponent, SingularityError, load_rate
from .controllers import Controller
from .energy import InteractionRate
from .interconnect import DisturbanceChannel, Mailbox
from .loads import LoadProfile


class DivergenceError(ArithmeticError):
    def __init__(self, stage: int, t: float):
        super().__init__(f"non-finite derivative at RK4 stage {stage} (t={t:g})")
        self.stage = stage
        self.t = t


class SimulationError(RuntimeError):
    """A run stopped early; ``partial`` holds the trajectory up to ``step``."""

    def __init__(self, step: int, t: float, cause: Exception, partial: "Trajectory"):
        super().__init__(f"simulation stopped at step {step} (t={t:g}): {cause}")
        self.step = step
        self.t = t
        self.cause = cause
        self.partial = partial


def rk4_step(y: Sequence[float], t: float, h: float,
             rhs: Callable[[float, Sequence[float]], Sequence[float]], k1=None) -> list[float]:
    """Classical fourth-order Runge-Kutta step.

    ``k1`` may be passed when the caller already evaluated ``rhs(t, y)``.
    Raises :class:`DivergenceError` naming the first non-finite stage.
    """
    if k1 is None:
        k1 = rhs(t, y)
    if not math.isfinite(sum(k1)):
        raise DivergenceError(1, t)
    hh = 0.5 * h
    k2 = rhs(t + hh, [a + hh * b for a, b in zip(y, k1)])
    if not math.isfinite(sum(k2)):
        raise DivergenceError(2, t + hh)
    k3 = rhs(t + hh, [a + hh * b for a, b in zip(y, k2)])
    if not math.isfinite(sum(k3)):
        raise DivergenceError(3, t + hh)
    k4 = rhs(t + h, [a + h * b for a, b in zip(y, k3)])
    if not math.isfinite(sum(k4)):
        raise DivergenceError(4, t + h)
    h6 = h / 6.0
    return [a + h6 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]


# Fixed CSV column order.
COLUMNS: tuple[str, ...] = (
    "t",
    "x0", "x1", "u", "u_dot",
    "y", "y_ref",
    "E", "p", "E_t", "D", "D_t", "Qdot_C",
    "E_ref", "p_ref", "pdot_ref",
    "P_load",
    "r_P", "r_Qdot", "r_Pt",
    "u_P", "u_Qdot", "u_Pt",
    "m_P", "m_Qdot", "m_Pt",
    "nbr_P", "nbr_Qdot", "nbr_Pt",
    "port_P", "port_Qdot", "port_Pt",
    "u_z", "sigma", "V",
    "zr_P", "zr_Qdot", "zr_Pt",
    "zu_P", "zu_Qdot", "zu_Pt",
    "zm_P", "zm_Qdot", "zm_Pt",
    "acc_E", "acc_p", "acc_Et",
    "res_E", "res_p", "res_Et",
    "tellegen_P", "tellegen_Qdot", "tellegen_Pt",
)
_INDEX = {c: i for i, c in enumerate(COLUMNS)}
_N_RECORDED = COLUMNS.index("res_E")


class Trajectory:
    """Uniformly sampled record of a run; columns follow :data:`COLUMNS`."""

    def __init__(self, data: np.ndarray, meta: dict | None = None):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(COLUMNS):
            raise ValueError(f"trajectory data must have {len(COLUMNS)} columns")
        self.data = data
        self.meta = dict(meta or {})

    @classmethod
    def from_rows(cls, rows, meta: dict | None = None) -> "Trajectory":
        """Build from recorded rows (all columns before the derived residuals)."""
        n = len(rows)
        arr = np.empty((n, len(COLUMNS)))
        if n:
            arr[:, :_N_RECORDED] = np.asarray(rows, dtype=float)
            for name, acc, base in (("res_E", "acc_E", "E"), ("res_p", "acc_p", "p"),
                                    ("res_Et", "acc_Et", "E_t")):
                res = np.zeros(n)
                res[1:] = np.diff(arr[:, _INDEX[base]]) - np.diff(arr[:, _INDEX[acc]])
                arr[:, _INDEX[name]] = res
            for comp in ("P", "Qdot", "Pt"):
                arr[:, _INDEX["tellegen_" + comp]] = arr[:, _INDEX["port_" + comp]] + arr[:, _INDEX["nbr_" + comp]]
        return cls(arr, meta)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, _INDEX[name]]

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    @property
    def h(self) -> float:
        return float(self.meta.get("h", self.t[1] - self.t[0]))

    @property
    def e_E(self) -> np.ndarray:
        return self["E"] - self["E_ref"]

    @property
    def e_p(self) -> np.ndarray:
        return self["p"] - self["p_ref"]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in self.data:
                w.writerow([format(float(v), ".17g") for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, meta: dict | None = None) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != COLUMNS:
                raise SchemaError(f"{path}: header does not match the trajectory schema")
            rows = [[float(v) for v in row] for row in reader]
        return cls(np.asarray(rows, dtype=float).reshape(-1, len(COLUMNS)), meta)


class SchemaError(ValueError):
    pass


@dataclass
class Scenario:
    plant: PhysComponent
    controller: Controller
    load: LoadProfile
    x0: tuple
    T: float
    h: float
    delay_steps: int = 0
    disturbance: DisturbanceChannel = field(default_factory=DisturbanceChannel)
    decimation: int = 1
    name: str = "scenario"
    # an idle (zero) load is allowed only for open-circuit checks
    allow_idle_load: bool = False

    @property
    def y_ref(self) -> float:
        return self.controller.y_ref

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))

    def validate(self) -> None:
        if not self.h > 0:
            raise ValueError("step h must be positive")
        if not self.T >= self.h:
            raise ValueError("horizon T must be at least one step")
        if abs(self.n_steps * self.h - self.T) > 1e-9 * self.T:
            raise ValueError("horizon T must be an integer multiple of h")
        if self.delay_steps < 0 or int(self.delay_steps) != self.delay_steps:
            raise ValueError("delay_steps must be a non-negative integer")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if len(self.x0) != self.plant.state_dim:
            raise ValueError(f"x0 must have {self.plant.state_dim} entries")
        if self.disturbance.injects and not self.controller.energy_based:
            raise ValueError("injected disturbances are realized through an energy-space controller")
        if self.disturbance.has_power_components:
            raise ValueError("only the Qdot component of a disturbance signal can be injected")
        if not self.allow_idle_load:
            self.load.check_positive(self.T)


def _stage_factory(scn: Scenario):
    plant, ctrl, load = scn.plant, scn.controller, scn.load
    nx = plant.state_dim
    nc = ctrl.n_states
    kind = plant.coupling
    dist = scn.disturbance
    inj = dist.injection if dist.injects else None
    implicit = dist.implicit
    y_ref = ctrl.y_ref

    def stage(t, X, held, want_row=False):
        x = (X[0], X[1]) if nx == 2 else tuple(X[:nx])
        c = X[nx:nx + nc]
        jet = load.jet(t)
        P, Pd = jet[0], jet[1]
        y, y_dot = plant.bus(x, P)
        true_load = load_rate(kind, P, Pd, y, y_dot)
        recv = true_load if held is None else held
        out = ctrl.evaluate(t, x, c, jet, recv[1], inj)
        u, u_dot = out.u, out.u_dot
        x_dot, x_ddot = plant.rhs_jet(x, u, P, u_dot, Pd)
        E, p, Et, D, Dt = plant.energy(x, x_dot)
        QC = plant.qdot_C(x, x_dot, x_ddot)
        uP, uQ, uPt = plant.control_rate(x, x_dot, u, u_dot)
        q_inj = 0.0
        if inj is not None and out.ref is not None:
            q_inj = inj(t, p - out.ref.p_ref)
        uQ_nom = uQ - q_inj
        tP, tQ, tPt = -true_load[0], -true_load[1], -true_load[2]
        if implicit:
            rP, rQ, rPt = -recv[0], -recv[1], -recv[2]
        else:
            rP, rQ, rPt = tP, tQ, tPt
        mP, mQ, mPt = tP - rP, tQ - rQ + q_inj, tPt - rPt
        dX = list(x_dot)
        dX.extend(out.c_dot)
        dX.extend((rP, rQ, rPt, uP, uQ_nom, uPt, mP, mQ, mPt,
                   -D + rP + uP + mP,
                   4.0 * Et + 2.0 * QC - rQ - uQ_nom - mQ,
                   -Dt + rPt + uPt + mPt))
        if not want_row:
            return dX, None
        ref = out.ref
        port = plant.port_rate(x, x_dot, x_ddot)
        zacc = X[nx + nc:]
        row = [t, x[0], x[1], u, u_dot, plant.output(x), y_ref,
               E, p, Et, D, Dt, QC,
               ref.E_ref, ref.p_ref, ref.pdot_ref, P,
               rP, rQ, rPt, uP, uQ_nom, uPt, mP, mQ, mPt,
               recv[0], recv[1], recv[2], port[0], port[1], port[2],
               out.u_z, out.sigma, out.V]
        row.extend(zacc)
        return dX, row

    return stage


def simulate(scn: Scenario) -> Trajectory:
    """Run a scenario over ``[0, T]`` and return the recorded trajectory.

    On a singularity or divergence a :class:`SimulationError` is raised whose
    ``partial`` attribute holds every row recorded before the failing step.
    """
    scn.validate()
    plant, ctrl, load = scn.plant, scn.controller, scn.load
    h = scn.h
    n = scn.n_steps
    dec = scn.decimation
    delay = scn.delay_steps
    stage = _stage_factory(scn)
    c0 = ctrl.initial_state(tuple(scn.x0), 0.0, load.jet(0.0))
    X = [float(v) for v in scn.x0] + [float(v) for v in c0] + [0.0] * 12
    meta = {"scenario": scn.name, "h": h, "T": scn.T, "delay_steps": delay,
            "decimation": dec,
            "controller": ctrl.name, "plant": type(plant).__name__, "y_ref": ctrl.y_ref}
    mailbox = Mailbox(("source", "load"), delay) if delay > 0 else None
    n_rec = n // dec + 1 + (1 if n % dec else 0)
    rows = np.empty((n_rec, _N_RECORDED))
    j = 0

    def published(k, t):
        if mailbox is None:
            return None
        x = tuple(X[:plant.state_dim])
        P, Pd, _ = load.jet(t)
        y, y_dot = plant.bus(x, P)
        mailbox.publish(k, "load", InteractionRate(*load_rate(plant.coupling, P, Pd, y, y_dot)))
        return mailbox.payload(k, "load")[1].as_tuple()

    k = 0
    t = 0.0
    try:
        for k in range(n + 1):
            t = k * h
            held = published(k, t)
            k1, row = stage(t, X, held, want_row=(k % dec == 0 or k == n))
            if row is not None:
                rows[j] = row
                j += 1
            if k == n:
                break
            X = rk4_step(X, t, h, lambda tt, XX: stage(tt, XX, held)[0], k1=k1)
    except (SingularityError, DivergenceError, ZeroDivisionError, OverflowError) as exc:
        meta["error"] = str(exc)
        meta["failed_step"] = k
        raise SimulationError(k, t, exc, Trajectory.from_rows(rows[:j], meta)) from exc
    return Trajectory.from_rows(rows[:j], meta)
