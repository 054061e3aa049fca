import io
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conekit.docking import (
    CSV_COLUMNS,
    LIGAND_ROOTS,
    POCKET_ROOTS,
    AtomFrame,
    CoordinateParseError,
    PathSpec,
    load_coordinates,
    nearest_atoms,
    path_summary,
    probability_path,
    symmetrize,
    write_path_csv,
)
from conekit.numeric import DomainError


def frame(coords):
    coords = np.asarray(coords, dtype=float)
    return AtomFrame(tuple(f"A{i}" for i in range(len(coords))), coords)


@pytest.fixture(scope="module")
def short_path():
    spec = PathSpec(steps=10)
    return spec, probability_path(spec)


# -- coordinates ---------------------------------------------------------------


@pytest.mark.parametrize("header", ["", "id,x,y,z\n"])
def test_load_csv(tmp_path, header):
    path = tmp_path / "lig.csv"
    path.write_text(header + "C1,0,0,0\nC2,1.5,0,0\nO1,0,1.2,0.3\n")
    f = load_coordinates(path)
    assert len(f) == 3
    assert f.atoms[2] == ("O1", 0.0, 1.2, 0.3)


def test_load_xyz(tmp_path):
    path = tmp_path / "lig.xyz"
    path.write_text("2\ncomment\nC 0 0 0\nN 1 1 1\n")
    assert load_coordinates(path).ids == ("C", "N")
    path.write_text("3\ncomment\nC 0 0 0\nN 1 1 1\n")
    with pytest.raises(CoordinateParseError, match="header says 3"):
        load_coordinates(path)


@pytest.mark.parametrize(
    "text, match",
    [
        ("C1,0,0,nan\n", "non-finite"),
        ("C1,0,0\n", ":1:"),
        ("C1,0,0,0\nC2,x,0,0\n", ":2:"),
        ("", "empty"),
    ],
    ids=["nan", "columns", "non-numeric", "empty"],
)
def test_bad_csv(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        load_coordinates(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_coordinates(tmp_path / "absent.csv")


# -- selection and symmetrization ----------------------------------------------


def test_nearest_atom_on_grid():
    grid = frame([(x, y, z) for x in range(-2, 3) for y in range(-2, 3) for z in range(-2, 3)])
    ligand = frame([(0.1, -0.2, 0.05)])
    picked = nearest_atoms(grid, ligand, 1)
    assert np.array_equal(picked.coords, [[0.0, 0.0, 0.0]])
    assert len(nearest_atoms(grid, ligand, len(grid))) == len(grid)


def test_nearest_atoms_tie_goes_to_first_in_file():
    protein = frame([(5, 0, 0), (0, 1, 0), (1, 0, 0), (0, 0, 1)])
    picked = nearest_atoms(protein, frame([(0, 0, 0)]), 2)
    assert picked.ids == ("A1", "A2")


def test_nearest_atoms_count_validated():
    with pytest.raises(ValueError):
        nearest_atoms(frame([(0, 0, 0)]), frame([(0, 0, 0)]), 2)


def test_symmetrize_orthogonal_columns():
    T = 2.5 * np.eye(3)
    S, spec = symmetrize(frame(T), centering=False)
    assert np.allclose(S, np.eye(3) / 3, atol=1e-15)
    assert np.allclose(spec.eigenvalues, 1 / 3, atol=1e-15)


@pytest.mark.parametrize("coords", [np.ones((5, 3)), [(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 1, 0)]], ids=["identical", "flat"])
def test_symmetrize_rank_deficient(coords):
    with pytest.raises(DomainError, match="rank"):
        symmetrize(frame(coords))


@pytest.mark.parametrize("seed", range(5))
def test_symmetrize_spectrum_is_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(21, 3)) * [3.0, 1.5, 0.7]
    R = Rotation.random(random_state=seed).as_matrix()
    S, a = symmetrize(frame(X))
    _, b = symmetrize(frame(X @ R.T))
    assert math.fsum(a.eigenvalues) == pytest.approx(1.0, abs=1e-12)
    assert np.trace(S) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(sorted(a.eigenvalues), sorted(b.eigenvalues), atol=1e-10)


# -- path ----------------------------------------------------------------------


def test_path_spec_defaults():
    spec = PathSpec()
    assert spec.b == pytest.approx(0.19735 + 2.0, abs=1e-15)
    assert spec.c == pytest.approx((0.34397 + 0.19735) * 3, abs=1e-14)
    assert PathSpec(c_mode="joint").c == pytest.approx((0.34397 + 56 * 0.19735) * 3, abs=1e-12)
    assert PathSpec(bracket_mode="as-printed").b == pytest.approx(4.19735, abs=1e-15)
    assert PathSpec(c_override=2.0).as_dict()["c_mode"] == "override"


@pytest.mark.parametrize(
    "kwargs",
    [
        {"start_roots": (0.5, 0.3, 0.3)},
        {"end_roots": (0.7, 0.4, -0.1)},
        {"steps": 0},
        {"bracket_mode": "full"},
    ],
)
def test_path_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PathSpec(**kwargs)


def test_interpolated_roots_sum_to_one():
    roots = PathSpec().roots()
    assert roots.shape == (1001, 3)
    assert np.allclose(roots[0], LIGAND_ROOTS, atol=0)
    assert np.allclose(roots[-1], POCKET_ROOTS, atol=1e-15)
    assert np.max(np.abs(roots.sum(axis=1) - 1.0)) < 1e-12


def test_constant_path():
    steps = probability_path(PathSpec(LIGAND_ROOTS, LIGAND_ROOTS, 4))
    assert len({s.result.probability for s in steps}) == 1


def test_path_endpoints_and_monotonicity(short_path):
    spec, steps = short_path
    summary = path_summary(spec, steps)
    assert summary["start_probability"] == pytest.approx(0.24884, abs=5e-3)
    assert summary["end_probability"] == pytest.approx(0.37276, abs=5e-3)
    assert summary["monotone"] and summary["all_converged"]
    assert summary["max_tail_estimate"] < 1e-5


def test_as_printed_bracket_is_ordered_but_small():
    steps = probability_path(PathSpec(steps=1, bracket_mode="as-printed"))
    p0, p1 = (s.result.probability for s in steps)
    assert 0 < p0 < p1 < 0.01


def test_path_is_identical_across_thread_counts():
    spec = PathSpec(steps=150)
    one = [s.result.probability for s in probability_path(spec, threads=1)]
    four = [s.result.probability for s in probability_path(spec, threads=4)]
    assert one == four


def test_path_csv(short_path):
    spec, steps = short_path
    buf = io.StringIO()
    write_path_csv(buf, steps)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 12
    last = lines[-1].split(",")
    assert last[0] == "10"
    assert float(last[4]) == steps[-1].result.probability
    assert last[-1] == "true"
