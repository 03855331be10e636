import numpy as np
import pytest

from smoothext import core


@pytest.fixture(scope="session")
def line_domain():
    return core.WorkingDomain(box=[[-1.0, 1.0]], net_step=1e-3)


@pytest.fixture(scope="session")
def coarse_line():
    return core.WorkingDomain(box=[[-1.0, 1.0]], net_step=0.01)


@pytest.fixture(scope="session")
def square_domain():
    return core.WorkingDomain(box=[[-1.0, 1.0], [-1.0, 1.0]], net_step=0.05)


def abs_field():
    return core.ScalarField(lambda X: np.abs(X[:, 0]), lip_bound=1.0,
                            modulus=lambda r: r, name="abs")


def sin_field():
    return core.ScalarField(
        lambda X: np.sin(X[:, 0]),
        grad_fn=lambda X: np.stack(
            [np.cos(X[:, 0])] + [np.zeros(X.shape[0])] * (X.shape[1] - 1), -1),
        lip_bound=1.0, modulus=lambda r: r, name="sin")
