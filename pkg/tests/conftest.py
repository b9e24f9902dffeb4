import warnings

import numpy as np
import pytest

from optofb.model import PhysicalConfig, derive_params


@pytest.fixture(scope="session")
def cfg():
    return PhysicalConfig()


@pytest.fixture(scope="session")
def dp(cfg):
    return derive_params(cfg)


def dp_at(T, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return derive_params(PhysicalConfig(T=T, **kw))


@pytest.fixture(scope="session")
def log_grid():
    return np.geomspace(1e4, 1e8, 2000)


@pytest.fixture(scope="session")
def band_grid():
    # resolves the normal-mode doublet at omega_m +- Omega_e/2
    return np.linspace(0.5e6, 1.5e6, 20001)


@pytest.fixture(scope="session")
def near_grid():
    return np.linspace(1e6 - 2000, 1e6 + 2000, 4001)
