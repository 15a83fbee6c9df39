import pytest
from mpmath import mp, mpf

import mpmath

from commdiff import set_precision
from commdiff.fixtures import fixture
from commdiff.szekeres import SzekeresField

WORK_TOL = mpf(2) ** -80
TIGHT_TOL = mpf(2) ** -140
SERIES_RTOL = mpf(2) ** -80


@pytest.fixture(autouse=True)
def _precision():
    set_precision(256)
    yield


@pytest.fixture(scope="session")
def hyperbolic():
    set_precision(256)
    field, (f1, fs2) = fixture("hyperbolic")
    return field, f1, fs2


@pytest.fixture(scope="session")
def hyperbolic_series_field(hyperbolic):
    _field, f1, _ = hyperbolic
    return SzekeresField(f1, mode="series")


@pytest.fixture(scope="session")
def flat_boundary():
    set_precision(256)
    field, (f1, g1) = fixture("flat_boundary", tol=TIGHT_TOL)
    return field, f1, g1


@pytest.fixture(scope="session")
def flat_series_field(flat_boundary):
    _field, f1, _ = flat_boundary
    return SzekeresField(f1, mode="series", rel_tol=SERIES_RTOL)


@pytest.fixture(scope="session")
def flat_generator_field(flat_boundary):
    _field, f1, _ = flat_boundary
    return SzekeresField(f1, rel_tol=SERIES_RTOL)


@pytest.fixture(scope="session")
def oscillating():
    set_precision(256)
    field, (f, g) = fixture("oscillating", tol=WORK_TOL)
    return field, f, g


def approx(a, b, tol):
    return abs(mpf(a) - mpf(b)) <= mpf(tol)


def rel(a, b):
    b = mpf(b)
    if b == 0:
        return abs(mpf(a))
    return abs(mpf(a) - b) / abs(b)
