import numpy as np
import pytest

from qlinode import SHIPPED_PROBLEMS, OdeProblem, shipped_problem
from qlinode.methods import REGISTRY


@pytest.fixture(params=sorted(REGISTRY))
def method(request):
    return REGISTRY[request.param]


@pytest.fixture(params=SHIPPED_PROBLEMS)
def shipped(request):
    return shipped_problem(request.param)


@pytest.fixture
def relaxation():
    """Standard test problem: decoupled relaxation towards (1, 0.25)."""
    return OdeProblem(np.diag([-1.0, -2.0]), [1.0, 0.5], [1.0, 1.0], delta_t=1.0)


@pytest.fixture
def scalar_decay():
    return OdeProblem([[-1.0]], [0.0], [1.0], delta_t=1.0)
