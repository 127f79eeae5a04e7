import dataclasses

import numpy as np
import pytest

from fcma.dataset import (
    DataError,
    StudyData,
    load_mediator_long,
    load_study,
    load_subjects,
    rescale_grid,
    validate,
    write_study,
)
from fcma.simgen import gen_replication, make_scenario


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_subjects_parses_columns(tmp_path):
    f = _write(tmp_path / "subjects.csv", "id,treatment,outcome,x\ns1,1,0,2.0\ns2,0,3,1.5\n")
    ids, a, X, y, names = load_subjects(f)
    assert ids == ["s1", "s2"]
    np.testing.assert_array_equal(a, [1, 0])
    np.testing.assert_array_equal(y, [0, 3])
    np.testing.assert_array_equal(X, [[2.0], [1.5]])
    assert names == ["x"]


def test_covariate_order_preserved(tmp_path):
    f = _write(tmp_path / "s.csv", "z,id,treatment,outcome,b\n9,s1,1,0,2\n8,s2,0,3,1\n")
    *_, X, _, names = load_subjects(f)
    assert names == ["z", "b"]
    np.testing.assert_array_equal(X, [[9, 2], [8, 1]])


@pytest.mark.parametrize(
    "body, message",
    [
        ("id,treatment,outcome\ns1,2,0\n", "non-binary treatment"),
        ("id,treatment,outcome\ns1,1,-1\n", "nonnegative integer"),
        ("id,treatment,outcome\ns1,1,1.5\n", "nonnegative integer"),
        ("id,treatment,outcome\ns1,1,1\ns1,0,2\n", "duplicate id"),
        ("id,outcome\ns1,1\n", "missing required column"),
    ],
)
def test_load_subjects_errors(tmp_path, body, message):
    f = _write(tmp_path / "s.csv", body)
    with pytest.raises(DataError, match=message):
        load_subjects(f)


def test_load_mediator_long_rescales_grid(tmp_path):
    rows = "".join(f"{sid},{t},{v}\n" for sid in ("s1", "s2") for t, v in ((0, 1.0), (5, 2.0), (10, 3.0)))
    f = _write(tmp_path / "m.csv", "id,time,value\n" + rows)
    grid, M = load_mediator_long(f, ["s2", "s1"])
    np.testing.assert_array_equal(grid, [0, 0.5, 1])
    assert M.shape == (2, 3)


def test_rescale_affine():
    np.testing.assert_array_equal(rescale_grid([3, 4, 5]), [0, 0.5, 1])


@pytest.mark.parametrize(
    "body, message",
    [
        ("s1,0,1\ns1,5,1\ns2,0,1\n", "ragged grid"),
        ("s1,0,1\ns3,0,1\n", "unknown id"),
        ("s1,0,1\ns1,0,2\ns2,0,1\n", "duplicate"),
    ],
)
def test_load_mediator_errors(tmp_path, body, message):
    f = _write(tmp_path / "m.csv", "id,time,value\n" + body)
    with pytest.raises(DataError, match=message):
        load_mediator_long(f, ["s1", "s2"])


def test_round_trip(tmp_path):
    study = gen_replication(make_scenario("simple", n=30, T=12), seed=3)
    subj, med = write_study(study, tmp_path)
    back = load_study(subj, med)
    for f in dataclasses.fields(StudyData):
        a, b = getattr(study, f.name), getattr(back, f.name)
        if isinstance(a, np.ndarray):
            np.testing.assert_array_equal(a, b)
        else:
            assert tuple(a) == tuple(b)


def test_validate_clean_simulated():
    study = gen_replication(make_scenario("complex", n=50, T=20), seed=1)
    assert validate(study).errors == []


def test_validate_reports_negative_outcome():
    study = gen_replication(make_scenario("simple", n=20, T=10), seed=1)
    y = study.outcome.copy()
    y[4] = -1
    rep = validate(dataclasses.replace(study, outcome=y))
    assert len(rep.errors) == 1
    row, field, _ = rep.errors[0]
    assert (row, field) == (4, "outcome")


def test_validate_reports_unsorted_grid():
    study = gen_replication(make_scenario("simple", n=20, T=10), seed=1)
    grid = study.grid.copy()
    grid[[2, 3]] = grid[[3, 2]]
    rep = validate(dataclasses.replace(study, grid=grid))
    assert [e[2] for e in rep.errors] == ["grid not increasing"]


def test_validate_dimension_mismatch():
    study = gen_replication(make_scenario("simple", n=20, T=10), seed=1)
    rep = validate(dataclasses.replace(study, mediator=study.mediator[:, :-1]))
    assert not rep.ok
