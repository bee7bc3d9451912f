import numpy as np
import pytest

import cassim.elements as el

# Built systems are immutable once constructed and expensive enough to share.
_SYSTEMS = {}


def reference_system(name: str) -> el.OpticalSystem:
    if name not in _SYSTEMS:
        _SYSTEMS[name] = el.build_reference_system(name)
    return _SYSTEMS[name]


@pytest.fixture(scope="session")
def sp():
    return reference_system("SP")


@pytest.fixture(scope="session")
def ap():
    return reference_system("AP")


@pytest.fixture(scope="session")
def msp():
    return reference_system("mSP")


@pytest.fixture(scope="session")
def map_():
    return reference_system("mAP")


@pytest.fixture(scope="session")
def all_systems(sp, ap, msp, map_):
    return {"SP": sp, "AP": ap, "mSP": msp, "mAP": map_}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
