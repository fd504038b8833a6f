import pytest

from decoyqkd.presets import get_preset


@pytest.fixture
def gys():
    return get_preset('gys')


@pytest.fixture
def pdc144():
    return get_preset('pdc144')


@pytest.fixture
def noiseless(gys):
    # no background and no misalignment
    return gys._replace(y0=0.0, e_detector=0.0)
