from __future__ import annotations

import numpy as np
import pytest

from emscatter.fields import field_a, gaussian_field, zero_field


@pytest.fixture(scope="session")
def fa():
    return field_a()


@pytest.fixture(scope="session")
def zero2():
    return zero_field(2)


@pytest.fixture(scope="session")
def gauss_v():
    return gaussian_field(2, v_amp=1.0, b_amp=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Full-scale FIELD-A sweep shared by the inversion tests and the acceptance suite.
FAN = {"J": 256, "I": 256, "Q": 6.0}
GRID = {"L": 4.0, "N": 128}


@pytest.fixture(scope="session")
def fa_sweep(fa):
    from emscatter.inversion import run_sweep

    return run_sweep(fa, FAN["J"], FAN["I"], FAN["Q"], [16.0, 32.0, 64.0, 128.0])


@pytest.fixture(scope="session")
def fa_W(fa, fa_sweep):
    """Exact W11 and W12 on the lines of the shared sweep."""
    from emscatter.asymptotics import asymptotic_batch

    thetas, xs = fa_sweep.lines
    return asymptotic_batch(fa, thetas, xs, position=False)


@pytest.fixture(scope="session")
def fa_recon(fa, fa_sweep):
    """Reconstruction from the {16, 32, 64} part of the sweep."""
    from emscatter.inversion import reconstruct_from_a

    return reconstruct_from_a(fa_sweep.subset([0, 1, 2]), GRID["L"], GRID["N"], truth=fa)


@pytest.fixture(scope="session")
def cx_bundle():
    from emscatter.counterexample import build_bundle

    return build_bundle()


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
