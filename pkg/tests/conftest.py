from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cmps.core import FiniteCMPS, bosons, random_uniform  # noqa: E402


def smooth_finite_state(D=2, L=4.0, N=400, seed=0, q=1):
    """Open finite state with smooth Q(x), R(x) and generic boundary vectors."""
    rng = np.random.default_rng(seed)

    def gauss(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2 * D)

    Q0, Q1 = gauss(D, D), gauss(D, D)
    R0, R1 = gauss(q, D, D), gauss(q, D, D)
    vL, vR = gauss(D), gauss(D)
    return FiniteCMPS.from_functions(
        lambda x: Q0 + np.sin(x) * Q1,
        lambda x: R0 + np.cos(0.7 * x) * R1,
        L, N, vL=vL, vR=vR, species=bosons(q))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def boson_d2():
    return random_uniform(2, bosons(1), np.random.default_rng(7))


@pytest.fixture
def boson_d3():
    return random_uniform(3, bosons(1), np.random.default_rng(8))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    verdicts = getattr(acceptance, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for number in sorted(verdicts):
            terminalreporter.write_line(verdicts[number])
