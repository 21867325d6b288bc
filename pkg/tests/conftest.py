import pytest

from hubnet.graph import HeterogeneityParams, build_example1, sample_graph


@pytest.fixture(scope="session")
def ex1_seq():
    params = HeterogeneityParams(n=20_000, gamma=1.0, ell=2, kappas=(1.0, 0.99), low_degree_base=7)
    return build_example1(params, delta_override=260)


@pytest.fixture(scope="session")
def ex1_graph(ex1_seq):
    return sample_graph(ex1_seq, 1)
