import math
import pickle

import numpy as np
import pandas as pd
import pytest
from scipy import sparse

from peristat.base.exceptions import ConfigError, PoissonMismatch, SingularSystem, add_context
from peristat.base.solver import LinearSolver
from peristat.base.utils import config_hash, sample_rng, voigt_pairs
from peristat.base.writers import read_json, write_json, write_table, write_vtk_points


def chain(n):
    return sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_solver_condensation(method):
    solver = LinearSolver(method=method, tol=1e-12)
    u = solver.solve(chain(10), np.zeros(10), fixed_dofs=[0, 9], fixed_values=[0.0, 1.0])
    np.testing.assert_allclose(u, np.arange(10) / 9.0, atol=1e-9)
    assert solver.last_residual < 1e-8


def test_solver_fully_fixed():
    u = LinearSolver().solve(chain(3), np.ones(3), fixed_dofs=[0, 1, 2], fixed_values=0.5)
    np.testing.assert_array_equal(u, 0.5)


def test_solver_errors():
    with pytest.raises(ValueError):
        LinearSolver(method="lu")
    floating = sparse.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    with pytest.raises(SingularSystem):
        LinearSolver().solve(floating, np.array([1.0, -1.0]))
    with pytest.raises(SingularSystem):
        LinearSolver(method="cg").solve(sparse.csr_matrix((2, 2)), np.ones(2))


def test_json_and_tables(tmp_path):
    path = write_json(tmp_path / "nested" / "data.json", {"b": [math.inf, 1.5], "a": None})
    assert read_json(path) == {"a": None, "b": [math.inf, 1.5]}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')

    table = write_table(tmp_path / "t.csv", pd.DataFrame({"step": [0, 1], "stress": [0.0, 1.0 / 3.0]}))
    assert table.read_text().splitlines() == ["step,stress", "0,0.000000000000e+00", "1,3.333333333333e-01"]


def test_vtk_points(tmp_path):
    positions = np.array([[0.0, 0.0], [1.0, 0.5]])
    write_vtk_points(tmp_path / "p.vtk", positions, {"damage": [0.0, 0.25], "u": [[1e-40, 2.0], [3.0, 4.0]]})
    lines = (tmp_path / "p.vtk").read_text().splitlines()
    assert "POINTS 2 double" in lines
    assert "VERTICES 2 4" in lines
    assert lines[lines.index("SCALARS damage double 1") + 3] == "2.5000000000e-01"
    assert lines[lines.index("VECTORS u double") + 1] == "0.0000000000e+00 2.0000000000e+00 0.0000000000e+00"


def test_sample_streams():
    first = sample_rng(2023, 0).random(4)
    np.testing.assert_array_equal(first, sample_rng(2023, 0).random(4))
    assert not np.allclose(first, sample_rng(2023, 1).random(4))
    assert not np.allclose(first, sample_rng(2024, 0).random(4))


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(voigt_pairs(2)) == 3 and len(voigt_pairs(3)) == 6


def test_errors_survive_pickling():
    error = add_context(ConfigError("must be positive", "rve.spacing"), "sample 3")
    restored = pickle.loads(pickle.dumps(error))
    assert type(restored) is ConfigError
    assert restored.field == "rve.spacing"
    assert str(restored) == "sample 3: rve.spacing: must be positive"

    mismatch = pickle.loads(pickle.dumps(add_context(PoissonMismatch("nu"), "sample 0")))
    assert isinstance(mismatch, PoissonMismatch)
    assert str(mismatch) == "sample 0: nu"
