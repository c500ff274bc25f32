import pytest

from gpopf.dataset import UncertaintySpec, generate_dataset, sample_inputs
from gpopf.grid import load_case, io_schema


@pytest.fixture(scope="session")
def case9():
    return load_case("case9")


@pytest.fixture(scope="session")
def case39():
    return load_case("case39")


@pytest.fixture(scope="session")
def schema9(case9):
    return io_schema(case9)


@pytest.fixture(scope="session")
def dataset9(case9, schema9):
    """Factory for labelled case9 datasets with the default fluctuation spec."""

    def make(n, seed, spec=None):
        spec = spec or UncertaintySpec()
        x = sample_inputs(case9, schema9, spec, n, seed)
        return generate_dataset(case9, schema9, x, spec=spec, seed=seed)

    return make
