from __future__ import annotations

import numpy as np
import pytest

from blacksol.grid import make_grid


@pytest.fixture(scope="session")
def grid():
    return make_grid(20.0, 4001)


@pytest.fixture(scope="session")
def coarse():
    return make_grid(20.0, 1001)


def exact_dark(c: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (rho, phase) of the travelling dark soliton, centred at 0.

    The phase follows the package convention phase(0) = sign(c) pi/2.
    """
    s = np.sqrt(1 + c * c)
    t = np.tanh(np.abs(x))
    k = (s + 1) / abs(c)
    rho = 1 - 2 / (1 + s * np.cosh(2 * x))
    ph = np.sign(c) * (np.pi / 2 - (np.arctan(k * t) - np.arctan(t / k)))
    ph = np.where(x < 0, np.sign(c) * np.pi - ph, ph)
    return rho, ph


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line; the table is printed in the terminal summary."""

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {number:2d}. {name:<24s} {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
