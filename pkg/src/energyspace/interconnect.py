"""Exchange of port interaction rates between coupled components.

Members of a :class:`Coupling` publish the rate of their port interaction
variable every step. A :class:`Mailbox` delivers each payload to the other
members after a fixed number of steps. A component reconstructs its own port
rate from what it received (sum-zero rule); any mismatch with the true port
rate, together with injected signals, is accounted as the exogenous channel.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .energy import InteractionRate, ZERO_RATE


class SchedulingError(RuntimeError):
    """A payload was requested before it was published (a programming bug)."""


@dataclass(frozen=True)
class Coupling:
    shared_variable: str
    members: tuple[str, ...]
    owner: str
    orientation: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.shared_variable not in ("bus-voltage", "bus-frequency"):
            raise ValueError(f"unknown shared variable {self.shared_variable!r}")
        if len(set(self.members)) != len(self.members) or len(self.members) < 2:
            raise ValueError("a coupling needs at least two distinct members")
        if self.owner not in self.members:
            raise ValueError("the storage owner must be a member")
        for m, s in self.orientation.items():
            if m not in self.members or s not in (1, -1):
                raise ValueError(f"bad orientation entry {m!r}: {s!r}")

    def sign(self, member: str) -> int:
        return self.orientation.get(member, 1)

    def neighbors(self, member: str) -> tuple[str, ...]:
        return tuple(m for m in self.members if m != member)


class Mailbox:
    """Lossless, in-order delivery with a fixed delay in integrator steps.

    Before the first ``delay`` steps have elapsed the step-0 payload is
    delivered, i.e. the exchange is assumed to have been primed at start-up.
    """

    def __init__(self, members: Sequence[str], delay: int = 0):
        if delay < 0:
            raise ValueError("delay must be non-negative")
        self.delay = int(delay)
        self._buf: dict[str, deque] = {m: deque(maxlen=self.delay + 1) for m in members}
        self._first: dict[str, int] = {}

    def publish(self, k: int, sender: str, rate: InteractionRate) -> None:
        buf = self._buf[sender]
        if buf and buf[-1][0] >= k:
            raise SchedulingError(f"{sender} already published for step {buf[-1][0]}")
        buf.append((k, rate))
        self._first.setdefault(sender, k)

    def payload(self, k: int, sender: str) -> tuple[int, InteractionRate]:
        """``(stamp, rate)`` visible at step ``k`` from ``sender``."""
        buf = self._buf[sender]
        if not buf:
            raise SchedulingError(f"{sender} has not published anything")
        want = max(k - self.delay, self._first[sender])
        for stamp, rate in buf:
            if stamp == want:
                return stamp, rate
        raise SchedulingError(f"{sender}: no payload for step {want} at step {k}")


def exchange(k: int, outgoing: Mapping[str, InteractionRate], mailbox: Mailbox,
             coupling: Coupling) -> dict[str, list[InteractionRate]]:
    """Publish every member's rate for step ``k`` and collect neighbor sets."""
    for m in coupling.members:
        if m not in outgoing:
            raise SchedulingError(f"member {m!r} did not publish for step {k}")
        mailbox.publish(k, m, outgoing[m])
    return {m: [mailbox.payload(k, n)[1] for n in coupling.neighbors(m)] for m in coupling.members}


def own_port_rate(received: Sequence[InteractionRate]) -> InteractionRate:
    """Sum-zero reconstruction ``-(sum of neighbor rates)``; zero when isolated."""
    total = ZERO_RATE
    for r in received:
        total = total + r
    return -total


# -- exogenous channel -------------------------------------------------------

def _signal(spec) -> callable:
    if spec is None:
        return lambda t: 0.0
    if isinstance(spec, (int, float)):
        c = float(spec)
        return lambda t: c
    kind = spec.get("kind", "constant")
    if kind == "constant":
        c = float(spec.get("value", 0.0))
        return lambda t: c
    if kind == "sine":
        a = float(spec.get("amplitude", 1.0))
        w = float(spec.get("omega", 1.0))
        ph = float(spec.get("phase", 0.0))
        off = float(spec.get("offset", 0.0))
        return lambda t: off + a * math.sin(w * t + ph)
    if kind == "step":
        before = float(spec.get("before", 0.0))
        after = float(spec.get("after", 1.0))
        t0 = float(spec.get("t0", 0.0))
        return lambda t: after if t >= t0 else before
    raise ValueError(f"unknown signal kind {kind!r}")


class DisturbanceChannel:
    """Source of the exogenous interaction rate.

    kinds:
      ``zero``            nothing injected;
      ``signal``          time signals for ``P``, ``Qdot`` and ``P_t``;
      ``error_feedback``  ``Qdot = -gain * (p - p_ref)``, an adversarial
                          disturbance used to probe stability conditions.

    Independently of the kind, ``implicit=True`` adds the difference between
    true and reconstructed port rates (non-zero only with delayed exchange).
    Only the ``Qdot`` part of an injected signal can be realized physically
    (through the actuator); see :meth:`injection`.
    """

    def __init__(self, kind: str = "zero", P=None, Qdot=None, P_t=None,
                 gain: float = 0.0, implicit: bool = True):
        if kind not in ("zero", "signal", "error_feedback"):
            raise ValueError(f"unknown disturbance kind {kind!r}")
        self.kind = kind
        self.implicit = implicit
        self.gain = float(gain)
        self._spec = {"P": P, "Qdot": Qdot, "P_t": P_t}
        self._P, self._Q, self._Pt = _signal(P), _signal(Qdot), _signal(P_t)

    @classmethod
    def from_config(cls, cfg: Mapping | None) -> "DisturbanceChannel":
        if not cfg:
            return cls()
        cfg = dict(cfg)
        return cls(kind=cfg.pop("kind", "zero"), P=cfg.pop("P", None), Qdot=cfg.pop("Qdot", None),
                   P_t=cfg.pop("P_t", None), gain=cfg.pop("gain", 0.0),
                   implicit=cfg.pop("implicit", True))

    @property
    def injects(self) -> bool:
        return self.kind != "zero"

    @property
    def has_power_components(self) -> bool:
        return self.kind == "signal" and (self._spec["P"] is not None or self._spec["P_t"] is not None)

    def injection(self, t: float, e_p: float) -> float:
        """Reactive-power-rate disturbance realized at the actuator."""
        if self.kind == "signal":
            return self._Q(t)
        if self.kind == "error_feedback":
            return -self.gain * e_p
        return 0.0

    def sample(self, t: float, e_p: float = 0.0) -> InteractionRate:
        if self.kind == "signal":
            return InteractionRate(self._P(t), self._Q(t), self._Pt(t))
        if self.kind == "error_feedback":
            return InteractionRate(0.0, -self.gain * e_p, 0.0)
        return ZERO_RATE


def disturbance_rate(channel: DisturbanceChannel, t: float, context: Mapping | None = None
                     ) -> InteractionRate:
    """Exogenous rate at ``t``.

    ``context`` may carry ``e_p`` (for error feedback) and ``true_port`` /
    ``reconstructed_port`` rates (for the implicit part).
    """
    context = context or {}
    rate = channel.sample(t, context.get("e_p", 0.0))
    if channel.implicit and "true_port" in context and "reconstructed_port" in context:
        rate = rate + (context["true_port"] - context["reconstructed_port"])
    return rate
