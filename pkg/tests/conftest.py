import pytest

from monobvp.problem import ProblemSpec

BASE = dict(p="1", q="1", b=1.0, alpha1=1.0, beta1=0.0, gamma1=0.0, f="0", phi="1", K1=0.0, L1=0.0)


def make_spec(**changes) -> ProblemSpec:
    """Problem with p = q = 1 on [0, 1], Dirichlet zero data, f = 0, overridden by ``changes``."""
    data = dict(BASE)
    data.update(changes)
    return ProblemSpec.from_dict(data)


def power_spec(alpha, **changes) -> ProblemSpec:
    return make_spec(p={"power": alpha}, q={"power": alpha}, **changes)


@pytest.fixture
def spec_factory():
    return make_spec
