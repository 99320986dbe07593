import numpy as np
import pytest

from pesinlab import systems as dyn

LOG_U = np.log((3.0 + np.sqrt(5.0)) / 2.0)   # 0.9624236501192069
LOG2 = np.log(2.0)
LOG_3P5 = np.log(3.0 + np.sqrt(5.0))          # 1.6555708306791521


@pytest.fixture(scope="session")
def cat():
    return dyn.make_system("cat")


@pytest.fixture(scope="session")
def cat_split(cat):
    return dyn.reference_splitting(cat)


@pytest.fixture(scope="session")
def p24():
    return dyn.make_system("product24")


@pytest.fixture(scope="session")
def p24_split(p24):
    return dyn.reference_splitting(p24)
