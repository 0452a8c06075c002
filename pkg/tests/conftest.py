import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import corrdecay as cd

GRID = 1024  # unit-test grid; acceptance tests use the spec defaults


@pytest.fixture(scope="session")
def doubling():
    return cd.doubling_spec()


@pytest.fixture(scope="session")
def moebius():
    return cd.moebius_test_spec()


@pytest.fixture(scope="session")
def formal_cert():
    # degenerate K = 0 certificate treated formally with e^-R = 1
    return cd.ue_certificate(2.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def override_cert():
    return cd.override_certificate(2.0, 0.0, 1.0, r_floor=0.1)


@pytest.fixture(scope="session")
def golden_tower_formal(doubling, formal_cert):
    """The hand-checkable tower: tau uniform on {1,2} with the formal R = 0 pair."""
    return cd.build_tower(doubling, [1, 2], cert=formal_cert, allow_degenerate=True)


@pytest.fixture(scope="session")
def golden_tower(doubling, override_cert):
    """The same tower with the R = 0.1 override, for dynamics and bounds."""
    return cd.build_tower(
        doubling, [1, 2], tail_law=cd.PolynomialTail(2.0, 2.0), cert=override_cert
    )


@pytest.fixture(scope="session")
def lsv():
    """Induced first-return map of the intermittent map, 64 branches."""
    return cd.lsv_induced_spec(alpha=0.5, n_branches=64)


@pytest.fixture(scope="session")
def lsv_tower(lsv):
    spec, tau, dist = lsv
    cert = cd.override_certificate(spec.lam, spec.K, spec.eta, r_floor=2.2 * spec.K)
    return cd.build_tower(spec, tau, tail_law=dist.tail, L_max=128, cert=cert, dist=dist)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260809)
