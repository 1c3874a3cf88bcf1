import math

import pytest

from elutrikit import config as config_mod
from elutrikit import physics


WATER = physics.FluidProperties(mu=0.001, rho=1000.0)
LST = physics.FluidProperties(mu=0.0035, rho=2200.0)
SILICA = physics.ParticleProperties(rho=2650.0, g=9.81)
GEOM = physics.ChannelGeometry(z=1.8e-3, theta=math.radians(70.0), ell=1.0)


def make_ramp(lam, v0=0.0, t0=0.0):
    return physics.FlowRamp(v0=v0, t0=t0, lam=lam)


@pytest.fixture(scope="session")
def water_config():
    return config_mod.load_config("water")


@pytest.fixture(scope="session")
def lst_config():
    return config_mod.load_config("lst")


@pytest.fixture(scope="session")
def water_ctx(water_config):
    return water_config.context()


@pytest.fixture(scope="session")
def water_feed(water_config):
    return water_config.feed()


@pytest.fixture(scope="session")
def water_grid(water_config):
    return water_config.grid()
