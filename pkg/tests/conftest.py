import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from warprig.ambient import ads_schwarzschild, cubic_warp, schwarzschild, space_form
from warprig.sphere import SurfaceSpec, build_grid

settings.register_profile(
    "warprig",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("warprig")

# the standard generic star-shaped test surface
GENERIC = ((2, 2, 0.08), (3, 1, 0.06))


@pytest.fixture(scope="session")
def generic_spec():
    return SurfaceSpec(2.0, GENERIC)


@pytest.fixture(scope="session")
def spaces():
    return {
        "euclidean": space_form(0.0),
        "hyperbolic": space_form(1.0),
        "schw01": schwarzschild(0.1),
        "schw05": schwarzschild(0.5),
        "ads": ads_schwarzschild(0.3, 1.0),
        "cubic": cubic_warp(),
    }


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16, 32)


@pytest.fixture(scope="session")
def grid24():
    return build_grid(24, 48)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------------
_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """record(number, title, ok, detail): prints and keeps one line per criterion."""

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}  ({detail})"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(line)
