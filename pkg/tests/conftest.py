import numpy as np
import pytest

from iongrad.chain_modes import CrystalSpec, compute_modes
from iongrad.drive_model import DriveConfig, calibrate_drive
from iongrad.lindblad import NoiseModel

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def ref_spec():
    return CrystalSpec(8, TWO_PI * 342.2e3, TWO_PI * 1.304e6, TWO_PI * 1.344e6)


@pytest.fixture(scope="session")
def ref_drive():
    return DriveConfig((3, 4), TWO_PI * 20e3, n_loops=4)


@pytest.fixture(scope="session")
def ref_noise():
    return NoiseModel(t1=7.0, t2=0.2, motional_coherence=0.04, heating_rate_per_ion=1.5,
                      scattering_rayleigh=1.2e-4, spam_error=0.002)


@pytest.fixture(scope="session")
def two_ion():
    spec = CrystalSpec(2, TWO_PI * 1.0e6, TWO_PI * 3.0e6, TWO_PI * 3.2e6)
    modes = compute_modes(spec, "axial")
    drive = calibrate_drive(spec, modes, DriveConfig((0, 1), TWO_PI * 20e3, n_loops=4))
    return spec, modes, drive


# -- acceptance summary ----------------------------------------------------------

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""

    def record(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
