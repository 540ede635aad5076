"""Session-wide simulation runs reused by several test modules."""

from __future__ import annotations

import pytest

from energyspace.loads import ConstantLoad
from energyspace.sim import simulate

import _builders as B


@pytest.fixture(scope="session")
def rlc_fblc_run():
    # 10 s: long enough for V to fall below 1e-6 of its start value
    return simulate(B.rlc("fblc", T=10.0, h=1e-4))


@pytest.fixture(scope="session")
def rlc_smc_run():
    return simulate(B.rlc("smc", T=5.0, h=1e-4))


@pytest.fixture(scope="session")
def gen_fblc_run():
    return simulate(B.gen("fblc", T=20.0, h=1e-3))


@pytest.fixture(scope="session")
def gen_droop_run():
    return simulate(B.gen("droop", T=40.0, h=1e-3))


@pytest.fixture(scope="session")
def gen_smc_run():
    # the reaching phase lasts |sigma0|/M0, roughly 1550 s with M0 = 10
    return simulate(B.gen("smc", T=1600.0, h=0.05))


@pytest.fixture(scope="session")
def rlc_prop_short():
    return simulate(B.rlc("proportional", T=0.2, h=1e-4, load=ConstantLoad(1000.0)))


class _TimedRuns:
    """Lazily simulates scenarios once per session and records wall time."""

    def __init__(self):
        self._cache = {}

    def get(self, key, build):
        if key not in self._cache:
            import time
            from energyspace.sim import SimulationError
            t0 = time.perf_counter()
            try:
                traj, err = simulate(build()), None
            except SimulationError as exc:
                traj, err = exc.partial, exc
            self._cache[key] = (traj, err, time.perf_counter() - t0)
        return self._cache[key]


@pytest.fixture(scope="session")
def timed_runs():
    return _TimedRuns()


_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance check; echoed in the terminal summary."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
