import math

import pytest

from d2dmimo import LinkBudget, build_hex_layout, dbm_to_mw

TABLE_DENSITY = 12.0 / (math.pi * 500.0**2)


@pytest.fixture(scope="session")
def layout19():
    return build_hex_layout(2, 500.0)


@pytest.fixture(scope="session")
def layout1():
    return build_hex_layout(0, 500.0)


@pytest.fixture(scope="session")
def budget():
    return LinkBudget(p_c=dbm_to_mw(23.0), p_d=dbm_to_mw(13.0))
