from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.stats import unitary_group

from loqc import AncillaSpec, DualRailEncoding, io, target

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


def haar(n, seed):
    return unitary_group.rvs(n, random_state=np.random.default_rng(seed)) if n > 1 else np.exp(1j * np.array([[seed]]))


@pytest.fixture
def cz_setup():
    return target("cz"), DualRailEncoding.standard(), AncillaSpec((1, 1), (1, 1))


@pytest.fixture(scope="session")
def knill_point():
    """Real orthogonal Knill-form CZ optimum, frozen in canonical gauge."""
    return io.read_point(DATA / "knill_cz.json")


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
