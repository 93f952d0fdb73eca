import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pllab import ScalarField, catalogue

settings.register_profile(
    "pllab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pllab")


def analytic_sine():
    return ScalarField(
        dim=1,
        value_fn=lambda x: math.sin(x[0]),
        grad_fn=lambda x: np.array([math.cos(x[0])]),
        hess_fn=lambda x: np.array([[-math.sin(x[0])]]),
        name="sin",
    )


@pytest.fixture
def sine_graph():
    """(y - sin x)^2 with exact derivatives of sin."""
    return catalogue("graph_residual", g=analytic_sine())


@pytest.fixture
def half_norm_sq():
    """1/2 |x|^2 in 2D, stored as x'Qx with Q = I/2."""
    return catalogue("quadratic_psd", Q=0.5 * np.eye(2))


@pytest.fixture
def half_x_sq():
    return catalogue("quadratic_psd", Q=[[0.5]])


@pytest.fixture
def zero_field():
    return ScalarField(dim=2, value_fn=lambda x: 0.0, grad_fn=lambda x: np.zeros(2),
                       hess_fn=lambda x: np.zeros((2, 2)), name="zero", known_inf=0.0)
