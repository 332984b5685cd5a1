import numpy as np
import pytest

from delaystab import KernelPiece, SystemSpec


def scalar_ide(a, tau=1.0):
    return SystemSpec.scalar("ide", a=[a], tau=[tau])


def scalar_dde(a, tau=1.0):
    return SystemSpec.scalar("dde", a=[a], tau=[tau])


def const_kernel(c, a=0.0, b=1.0):
    return KernelPiece(a, b, np.array([[[c]]]))


def mixed(kind="ide", a=0.3, c=0.2):
    """``a`` at delay 1 plus ``N = c`` on ``[0, 1]``."""
    return SystemSpec.scalar(kind, a=[a], tau=[1.0], kernel=[const_kernel(c)])


@pytest.fixture
def ide_half():
    return scalar_ide(0.5)


@pytest.fixture
def dde_one():
    return scalar_dde(1.0)


@pytest.fixture
def mixed_ide():
    return mixed("ide")


@pytest.fixture
def mixed_dde():
    return mixed("dde")
