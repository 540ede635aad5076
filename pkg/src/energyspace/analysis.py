"""Equilibria, linearization and Lyapunov/reaching-time certificates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .components import GenParams, PhysComponent, load_rate
from .controllers import Controller, DroopGains, FblcGains, SmcGains
from .sim import Trajectory
from . import report

EQ_TOL = 1e-10
ROUNDOFF_V = 1e-12
RDOT_TOL = 1e-9


class EquilibriumError(RuntimeError):
    pass


@dataclass
class Equilibrium:
    x_eq: tuple
    u_eq: float
    residual: float
    c_eq: tuple = ()
    iterations: int = 0

    @property
    def state(self) -> np.ndarray:
        return np.array(tuple(self.x_eq) + tuple(self.c_eq), dtype=float)


def closed_loop_rhs(plant: PhysComponent, controller: Controller, P: float
                    ) -> Callable[[np.ndarray], np.ndarray]:
    """Autonomous vector field of ``[x | controller state]`` under a constant load."""
    nx = plant.state_dim
    jet = (float(P), 0.0, 0.0)

    def f(X):
        x = tuple(float(v) for v in X[:nx])
        c = tuple(float(v) for v in X[nx:])
        y, y_dot = plant.bus(x, P)
        nbr = load_rate(plant.coupling, P, 0.0, y, y_dot)
        out = controller.evaluate(0.0, x, c, jet, nbr[1])
        return np.array(tuple(plant.rhs(x, out.u, P)) + tuple(out.c_dot), dtype=float)

    return f


def _scales(X: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(X), 1.0)


def _newton(f, X0, tol=EQ_TOL, max_iter=100, rel_step=1e-7):
    X = np.asarray(X0, dtype=float).copy()
    r = f(X)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(r) / _scales(X)) <= tol:
            return X, r, it - 1
        J = jacobian(f, X, rel_step)
        try:
            dX = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError(f"singular Jacobian at iteration {it}") from exc
        # backtracking on the residual norm
        lam = 1.0
        n0 = np.linalg.norm(r / _scales(X))
        while lam > 1e-6:
            Xn = X + lam * dX
            try:
                rn = f(Xn)
            except ArithmeticError:
                rn = None
            if rn is not None and np.all(np.isfinite(rn)) and np.linalg.norm(rn / _scales(Xn)) < n0:
                break
            lam *= 0.5
        else:
            Xn = X + lam * dX
            rn = f(Xn)
        X, r = Xn, rn
    if np.max(np.abs(r) / _scales(X)) <= tol:
        return X, r, max_iter
    raise EquilibriumError(f"no convergence in {max_iter} iterations (residual {np.max(np.abs(r)):.3g})")


def solve_equilibrium(plant: PhysComponent, P: float, controller: Controller | None = None,
                      y_ref: float | None = None, guess: Sequence[float] | None = None,
                      tol: float = EQ_TOL, max_iter: int = 100) -> Equilibrium:
    """Damped Newton for a steady state under constant load ``P``.

    With a controller the unknowns are the closed-loop states. Without one, the
    physical state and the input are solved for with the output pinned at
    ``y_ref``. The residual is the scaled max-norm of the right-hand side.
    """
    nx = plant.state_dim
    if controller is not None:
        f = closed_loop_rhs(plant, controller, P)
        if guess is None:
            (x_g, u_g) = plant.equilibrium(controller.y_ref, P)
            c_g = controller.steady_state_guess(x_g, u_g, (P, 0.0, 0.0))
            guess = tuple(x_g) + tuple(c_g)
        X, r, it = _newton(f, guess, tol, max_iter)
        x = tuple(float(v) for v in X[:nx])
        c = tuple(float(v) for v in X[nx:])
        y, y_dot = plant.bus(x, P)
        u = controller.evaluate(0.0, x, c, (P, 0.0, 0.0), load_rate(plant.coupling, P, 0.0, y, y_dot)[1]).u
        return Equilibrium(x, float(u), float(np.max(np.abs(r) / _scales(X))), c, it)
    if y_ref is None:
        raise ValueError("open-loop equilibrium needs y_ref")
    k = plant.output_index

    def g(X):
        x = tuple(float(v) for v in X[:nx])
        return np.array(tuple(plant.rhs(x, float(X[nx]), P)) + (x[k] - y_ref,), dtype=float)

    if guess is None:
        x_g, u_g = plant.equilibrium(y_ref, P)
        # start away from the analytic answer so the solver does real work
        guess = tuple(v * 1.05 for v in x_g) + (u_g * 1.05,)
    X, r, it = _newton(g, guess, tol, max_iter)
    return Equilibrium(tuple(float(v) for v in X[:nx]), float(X[nx]),
                       float(np.max(np.abs(r) / _scales(X))), (), it)


def droop_equilibrium(P: float, y_ref: float, gains: DroopGains = DroopGains(),
                      params: GenParams = GenParams()) -> tuple[float, float, float]:
    """``(omega, Pm, a)`` of the droop-governed generator, by scalar root finding.

    At rest the governor gives ``a = (y_ref - omega)/r`` and the swing equation
    ``Kt a = P + D omega**2``.
    """
    def g(w):
        return params.Kt * (y_ref - w) / gains.r - P - params.D1 * w * w

    w = brentq(g, 1e-6 * y_ref, y_ref, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    a = (y_ref - w) / gains.r
    return w, params.Kt * a, a


def jacobian(f: Callable[[np.ndarray], np.ndarray], X: Sequence[float], rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian with step ``rel_step * max(|x_i|, 1)``."""
    X = np.asarray(X, dtype=float)
    f0 = np.asarray(f(X), dtype=float)
    J = np.empty((f0.size, X.size))
    for j in range(X.size):
        d = rel_step * max(abs(X[j]), 1.0)
        Xp, Xm = X.copy(), X.copy()
        Xp[j] += d
        Xm[j] -= d
        J[:, j] = (np.asarray(f(Xp)) - np.asarray(f(Xm))) / (2.0 * d)
    return J


def linearize(f: Callable[[np.ndarray], np.ndarray], X_eq: Sequence[float] | Equilibrium,
              rel_step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """State matrix and its eigenvalues at an equilibrium of ``f``."""
    if isinstance(X_eq, Equilibrium):
        X_eq = X_eq.state
    A = jacobian(f, X_eq, rel_step)
    return A, np.linalg.eigvals(A)


# -- certificates -----------------------------------------------------------

@dataclass
class CertificateReport:
    kind: str
    steps: int
    condition_satisfied_fraction: float
    condition_violation_steps: int
    v_increase_steps: int
    vdot_bound_violations: int
    coincident_steps: int
    V0: float
    V_final: float
    V_ratio: float
    ultimate_bound: float = math.nan
    Mbar: float = math.nan
    sigma0: float = math.nan
    reaching_time: Optional[float] = None
    reaching_bound: float = math.nan
    reaching_slack: float = 0.0
    reached: bool = False
    reaching_mode: str = ""
    surface_violations: int = 0
    chatter_band: float = math.nan
    decay_rate: float = math.nan
    decay_rate_expected: float = math.nan
    decay_fit_points: int = 0

    @property
    def violations(self) -> int:
        """Certificate violations: V increases plus bound violations."""
        return self.v_increase_steps + self.vdot_bound_violations

    @property
    def reaching_within_bound(self) -> bool:
        """``t_r <= bound`` allowing for the measured integrator drift of sigma."""
        if self.reaching_time is None:
            return False
        tol = 1e-12 * max(1.0, self.reaching_bound)
        return self.reaching_time <= self.reaching_bound + self.reaching_slack + tol

    @property
    def condition_violated(self) -> bool:
        return self.condition_violation_steps > 0

    @property
    def certificate_violated(self) -> bool:
        return self.v_increase_steps > 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = self.violations
        if self.kind == "SMC":
            d["reaching_within_bound"] = self.reaching_within_bound
        return d

    def dumps(self) -> str:
        return report.dumps(self.as_dict(), title=f"{self.kind} certificate")


def _stationary_Qdot(traj: Trajectory) -> np.ndarray:
    """Energy-model right-hand side of ``p`` from the recorded rates."""
    return (4.0 * traj["E_t"] + 2.0 * traj["Qdot_C"] - traj["r_Qdot"] - traj["u_Qdot"] - traj["m_Qdot"])


def fblc_certificate(traj: Trajectory, gains: FblcGains) -> CertificateReport:
    """Lyapunov check for the linearizing law.

    ``V = (K1 e_E^2 + e_p^2)/2`` must be non-increasing whenever
    ``|Qdot_m| <= K2 |e_p|``. Steps where ``V`` grows by more than
    ``1e-12 max V`` are counted, as are steps where the pointwise form
    ``Vdot = -K2 e_p^2 - Qdot_m e_p`` is positive, and the two sets are
    compared with the condition violations.
    """
    eE, ep = traj.e_E, traj.e_p
    Qm = traj["m_Qdot"]
    V = 0.5 * (gains.K1 * eE * eE + ep * ep)
    n = len(V)
    thr = ROUNDOFF_V * float(np.max(V)) if n else 0.0
    dV = np.diff(V)
    inc = dV > thr
    cond_ok = np.abs(Qm) <= gains.K2 * np.abs(ep)
    # a step is attributed to the condition at either end of the interval
    cond_bad_step = ~(cond_ok[:-1] & cond_ok[1:])
    vdot = -gains.K2 * ep * ep - Qm * ep
    vdot_bad = vdot > ROUNDOFF_V * np.maximum(gains.K2 * ep * ep + np.abs(Qm * ep), 1e-300) * 1e3
    return CertificateReport(
        kind="FBLC", steps=max(n - 1, 0),
        condition_satisfied_fraction=float(np.mean(cond_ok)) if n else 1.0,
        condition_violation_steps=int(np.count_nonzero(~cond_ok)),
        v_increase_steps=int(np.count_nonzero(inc)),
        vdot_bound_violations=int(np.count_nonzero(vdot_bad)),
        coincident_steps=int(np.count_nonzero(inc & cond_bad_step)),
        V0=float(V[0]), V_final=float(V[-1]), V_ratio=float(V[-1] / V[0]) if V[0] else 0.0,
        ultimate_bound=float(np.max(np.abs(Qm)) / gains.K2),
    )


def smc_certificate(traj: Trajectory, gains: SmcGains, Mbar: float | None = None,
                    fit_margin: float = 20.0) -> CertificateReport:
    """Reaching-time and sliding-phase check for the sliding-mode law.

    ``Mbar`` is the assumed bound on ``|Qdot_m|``; when omitted the measured
    supremum over the reaching phase is used. The pointwise derivative
    ``Vdot = sigma * dsigma/dt`` is rebuilt from the recorded rates and
    compared with ``-(M0 - Mbar)|sigma|``. After reaching, ``log|e_E|`` is
    fitted by least squares outside the chatter band.

    Reaching is the first recorded sign change of sigma or, when none is
    recorded, the last entry into the chatter band ``h (M0 + max|Qdot_m|)``
    from which sigma never leaves; ``reaching_mode`` says which.
    """
    t = traj.t
    eE, ep = traj.e_E, traj.e_p
    sigma = ep + gains.M1 * eE
    n = len(t)
    V = 0.5 * sigma * sigma
    Qm = traj["m_Qdot"]
    h = traj.h

    pdot_model = _stationary_Qdot(traj)
    sdot = (pdot_model - traj["pdot_ref"]) + gains.M1 * ep

    s0 = float(sigma[0])
    if s0 == 0.0:
        k_r = 0
        t_r: Optional[float] = float(t[0])
    else:
        hit = np.nonzero(sigma * math.copysign(1.0, s0) <= 0.0)[0]
        if hit.size:
            k_r = int(hit[0])
            a, b = sigma[k_r - 1], sigma[k_r]
            dt = t[k_r] - t[k_r - 1]
            # the sign switch inside the crossing step bends the sampled
            # sigma, so extrapolate from the last smooth sample when possible
            if sdot[k_r - 1] * a < 0 and -a / sdot[k_r - 1] <= dt:
                t_r = float(t[k_r - 1] - a / sdot[k_r - 1])
            else:
                t_r = float(t[k_r - 1] + dt * a / (a - b))
        else:
            k_r = n
            t_r = None
    band = h * (gains.M0 + float(np.max(np.abs(Qm)))) if n else 0.0
    mode = "crossing" if t_r is not None else ""
    if t_r is None and n:
        # sign switches may happen only inside RK4 stages, leaving every
        # recorded sigma on one side; entering the band for good counts too
        outside = np.nonzero(np.abs(sigma) > band)[0]
        k = int(outside[-1]) + 1 if outside.size else 0
        if k < n:
            a = sigma[k]
            t_r = float(t[k] - a / sdot[k]) if sdot[k] * a < 0 else float(t[k])
            k_r = min(k + 1, n)
            mode = "band"
    pre = slice(0, k_r)
    Qm_pre = np.abs(Qm[pre])
    measured = float(np.max(Qm_pre)) if Qm_pre.size else 0.0
    assumed = Mbar is not None
    if not assumed:
        Mbar = measured
    margin = gains.M0 - Mbar

    vdot = sigma * sdot
    terms = (np.abs(4.0 * traj["E_t"]) + np.abs(2.0 * traj["Qdot_C"]) + np.abs(traj["r_Qdot"])
             + np.abs(traj["u_Qdot"]) + np.abs(traj["m_Qdot"]) + np.abs(traj["pdot_ref"])
             + gains.M1 * np.abs(ep))
    # the recorded rates are differences of products up to ~1e7 times larger
    # than their result, so round-off is judged relative to RDOT_TOL
    tol = RDOT_TOL * np.abs(sigma) * (gains.M0 + terms)
    bound_bad = (vdot > -margin * np.abs(sigma) + tol)[pre]
    # V increase over a reaching-phase step
    dV = np.diff(V[: k_r + 1]) if k_r > 0 else np.array([])
    thr = ROUNDOFF_V * float(np.max(V))
    inc = dV > thr
    # without an assumed bound the condition is feasibility of the measured one
    cond_bad = Qm_pre > Mbar if assumed else Qm_pre >= gains.M0
    if inc.size:
        either_end = cond_bad[: inc.size] | np.append(cond_bad[1:], cond_bad[-1:])[: inc.size]
        coincident = int(np.count_nonzero(inc & either_end))
    else:
        coincident = 0

    # drift between the lifted sigma and the integrated energy-space balance
    # over the reaching phase; it bounds how far integrator error can move t_r
    sig_model = ((traj["p"][0] + traj["acc_p"] - traj["p_ref"])
                 + gains.M1 * (traj["E"][0] + traj["acc_E"] - traj["E_ref"]))
    drift = float(np.max(np.abs(sigma[: k_r + 1] - sig_model[: k_r + 1]))) if n else 0.0

    surf_viol = 0
    rate = math.nan
    npts = 0
    if t_r is not None and k_r < n:
        post = slice(k_r, n)
        surf_viol = int(np.count_nonzero(np.abs(sigma[post]) > band + 1e-9 * max(abs(s0), 1.0)))
        eEp = np.abs(eE[post])
        tp = t[post]
        # a wide band (coarse h) may cover most of the sliding phase
        cut = min(fit_margin * band / gains.M1, 0.25 * float(np.max(eEp)) if eEp.size else 0.0)
        keep = eEp > cut
        npts = int(np.count_nonzero(keep))
        if npts >= 3:
            rate = -float(np.polyfit(tp[keep], np.log(eEp[keep]), 1)[0])

    return CertificateReport(
        kind="SMC", steps=max(n - 1, 0),
        condition_satisfied_fraction=float(np.mean(Qm_pre <= Mbar)) if Qm_pre.size else 1.0,
        condition_violation_steps=int(np.count_nonzero(cond_bad)),
        v_increase_steps=int(np.count_nonzero(inc)),
        vdot_bound_violations=int(np.count_nonzero(bound_bad)),
        coincident_steps=coincident,
        V0=float(V[0]), V_final=float(V[-1]), V_ratio=float(V[-1] / V[0]) if V[0] else 0.0,
        Mbar=float(Mbar), sigma0=s0, reaching_time=t_r,
        reaching_bound=abs(s0) / margin if margin > 0 else math.inf,
        reaching_slack=drift / margin if margin > 0 else math.inf,
        reached=t_r is not None, reaching_mode=mode, surface_violations=surf_viol, chatter_band=band,
        decay_rate=rate, decay_rate_expected=gains.M1, decay_fit_points=npts,
    )


def certificate_for(traj: Trajectory, law: str, gains, **kw) -> CertificateReport:
    if law == "fblc":
        return fblc_certificate(traj, gains)
    if law == "smc":
        return smc_certificate(traj, gains, **kw)
    raise ValueError(f"no certificate for controller {law!r}")
