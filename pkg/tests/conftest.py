import pytest

from levybdsde.levy_model import LevyModel


@pytest.fixture
def two_atom():
    return LevyModel(0.0, 0.0, ((1.0, 0.5), (-1.0, 0.5)))


@pytest.fixture
def brownian():
    return LevyModel(0.0, 1.0, ())


@pytest.fixture
def report(capsys):
    """Print one line straight to the terminal, bypassing capture."""

    def emit(line: str) -> None:
        with capsys.disabled():
            print(f"\n{line}", end="")

    return emit
