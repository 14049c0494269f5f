import io
import math

import numpy as np
import pytest

from levybdsde.levy_model import (
    BLOCK_SIZE,
    LevyModel,
    TimeGrid,
    brownian_increments,
    char_exponent,
    forward_euler,
    mean_L1,
    nu_moment,
    simulate_paths,
    var_L1,
    write_paths_csv,
)


@pytest.mark.parametrize(
    "atoms",
    [((0.0, 1.0),), ((1.0, -0.5),), ((1.0, 0.5), (1.0, 0.2)), ((math.inf, 1.0),)],
)
def test_invalid_atoms_rejected(atoms):
    with pytest.raises(ValueError):
        LevyModel(0.0, 0.0, atoms)


def test_negative_kappa_rejected():
    with pytest.raises(ValueError):
        LevyModel(0.0, -1.0, ())


def test_from_dict():
    m = LevyModel.from_dict({"drift": 0.2, "kappa": 0.3, "atoms": [[0.5, 2.0]]})
    assert m.drift_a == 0.2 and m.gaussian_kappa == 0.3 and m.atoms == ((0.5, 2.0),)


def test_mean_and_variance_from_exponent():
    m = LevyModel(0.3, 0.7, ((0.5, 2.0), (-1.5, 0.4)))
    h = 1e-4
    # E L_1 = -i psi'(0), Var L_1 = -psi''(0)
    d1 = (char_exponent(m, h) - char_exponent(m, -h)) / (2 * h)
    d2 = (char_exponent(m, h) - 2 * char_exponent(m, 0.0) + char_exponent(m, -h)) / h**2
    assert (-1j * d1).real == pytest.approx(mean_L1(m), rel=1e-7)
    assert (-d2).real == pytest.approx(var_L1(m), rel=1e-5)
    assert mean_L1(m) == pytest.approx(0.3 + 0.4 * -1.5)
    assert var_L1(m) == pytest.approx(0.49 + nu_moment(m, 2))


def test_characteristic_function_by_simulation():
    m = LevyModel(0.3, 0.7, ((0.5, 2.0), (-1.5, 0.4)))
    b = simulate_paths(m, TimeGrid(0, 1, 4), 40_000, seed=2)
    LT = b.L()[:, -1]
    for u in (0.5, 1.3):
        emp = np.exp(1j * u * LT).mean()
        assert abs(emp - np.exp(char_exponent(m, u))) < 4 / math.sqrt(LT.size)


def test_pure_drift_is_linear():
    b = simulate_paths(LevyModel(1.0, 0.0, ()), TimeGrid(0, 2, 8), 3, seed=0)
    np.testing.assert_allclose(b.L(), np.tile(b.grid.nodes, (3, 1)), atol=1e-14)


def test_paths_independent_of_batch_size():
    m = LevyModel(0.1, 0.5, ((1.0, 3.0),))
    grid = TimeGrid(0, 1, 5)
    small = simulate_paths(m, grid, 7, seed=5)
    big = simulate_paths(m, grid, BLOCK_SIZE + 300, seed=5)
    np.testing.assert_array_equal(small.dL, big.dL[:7])
    tail = simulate_paths(m, grid, 50, seed=5, first_path_id=BLOCK_SIZE - 20)
    np.testing.assert_array_equal(tail.dL, big.dL[BLOCK_SIZE - 20 : BLOCK_SIZE + 30])


def test_jump_table_consistent():
    m = LevyModel(0.0, 0.0, ((1.0, 2.0), (-0.5, 1.0)))
    grid = TimeGrid(0, 1, 10)
    b = simulate_paths(m, grid, 200, seed=1)
    lo = grid.nodes[b.jump_step]
    assert np.all((b.jump_time > lo) & (b.jump_time < lo + grid.dt))
    key = b.jump_path * 10.0 + b.jump_time
    assert np.all(np.diff(key) >= 0)
    n = np.zeros((200, 10))
    np.add.at(n, (b.jump_path, b.jump_step), 1)
    np.testing.assert_array_equal(n, b.jump_counts())
    np.testing.assert_allclose(b.dL, b.counts @ m.sizes - m.small_jump_compensator * grid.dt, atol=1e-14)


def test_brownian_rows_are_seeded_per_path():
    grid = TimeGrid(0, 1, 4)
    a = brownian_increments(grid, 3, 9)
    b = brownian_increments(grid, 5, 9)
    np.testing.assert_array_equal(a, b[:3])


def test_paths_csv_roundtrip():
    m = LevyModel(0.0, 1.0, ((1.0, 1.0),))
    b = simulate_paths(m, TimeGrid(0, 1, 3), 2, seed=4)
    fh = io.StringIO()
    write_paths_csv(b, fh, ["config_sha256=abc"])
    lines = fh.getvalue().splitlines()
    assert lines[0] == "# config_sha256=abc"
    assert lines[1] == "path_id,step,t,dB,dL,n_jumps"
    assert len(lines) == 2 + 6
    row = lines[3].split(",")
    assert float(row[4]) == b.dL[0, 1]


def test_euler_sigma_zero_and_identity():
    m = LevyModel(0.2, 0.5, ((1.0, 1.0),))
    b = simulate_paths(m, TimeGrid(0, 1, 20), 30, seed=3)
    X0 = forward_euler(b, m, 1.5, sigma=lambda x: np.zeros_like(x))
    assert np.all(X0 == 1.5)
    X1 = forward_euler(b, m, 1.5, sigma=lambda x: np.ones_like(x))
    np.testing.assert_allclose(X1, forward_euler(b, m, 1.5), atol=1e-12)


def test_euler_geometric_jumps_mean():
    # sigma(x) = x with jumps of size 1 doubles X at every jump: E X_T = x exp(lam T)
    lam = 0.8
    m = LevyModel(0.0, 0.0, ((1.0, lam),))
    b = simulate_paths(m, TimeGrid(0, 1, 10), 50_000, seed=8)
    XT = forward_euler(b, m, 1.0, sigma=lambda x: x)[:, -1]
    counts = b.jump_counts().sum(axis=1)
    np.testing.assert_allclose(XT, 2.0**counts)
    se = XT.std() / math.sqrt(XT.size)
    assert abs(XT.mean() - math.exp(lam)) < 3 * se


def test_euler_start_step_freezes():
    m = LevyModel(0.0, 1.0, ())
    b = simulate_paths(m, TimeGrid(0, 1, 10), 5, seed=0)
    X = forward_euler(b, m, 0.7, sigma=lambda x: 1 + 0 * x, start_step=4)
    assert np.all(X[:, :5] == 0.7)
    np.testing.assert_allclose(X[:, -1] - 0.7, b.dL[:, 4:].sum(axis=1), atol=1e-12)
