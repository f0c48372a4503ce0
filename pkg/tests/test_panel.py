import io

import numpy as np
import pytest

from heavyuser.errors import PanelFormatError, ParameterError
from heavyuser.model import example_model, simulate
from heavyuser.panel import PanelDataset, read_sidecar, write_sidecar

from conftest import make_panel


def _parse(text, k=None):
    return PanelDataset.parse_csv(io.StringIO(text), k)


def test_csv_roundtrip(tmp_path):
    panel = simulate(example_model(2), 5, 30, 20, rng_seed=1)
    path = tmp_path / "p.csv"
    panel.to_csv(path)
    back = PanelDataset.read_csv(path, k=5)
    assert back.k == 5
    assert back.user_id.tolist() == panel.user_id.tolist()
    np.testing.assert_array_equal(back.day, panel.day)
    np.testing.assert_array_equal(back.outcome, panel.outcome)  # repr round-trips exactly
    appearing = set(panel.user_id.tolist())
    assert back.assignment == {u: z for u, z in panel.assignment.items() if u in appearing}
    assert back.truth is None


def test_csv_is_lf_utf8(tmp_path):
    path = tmp_path / "p.csv"
    make_panel(2, {"é": {1: 1.0}}, {"b": {2: 0.5}}).to_csv(path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.decode("utf-8").splitlines()[0] == "user_id,day,outcome,treated"


def test_sidecar_supplies_k(tmp_path):
    path = tmp_path / "p.csv"
    make_panel(3, {"a": {1: 1.0}}, {"b": {1: 0.5}}).to_csv(path)
    write_sidecar(path, {"k": 3, "seed": 1})
    assert read_sidecar(path)["k"] == 3
    assert PanelDataset.read_csv(path).k == 3
    (tmp_path / "p.csv.json").unlink()
    assert PanelDataset.read_csv(path).k == 1  # falls back to the largest day


@pytest.mark.parametrize("body,line,match", [
    ("1,0,1.0,1\n", 2, "day 0"),
    ("1,1,1.0,1\n2,x,1.0,0\n", 3, "not an integer"),
    ("1,1,abc,1\n", 2, "not a number"),
    ("1,1,1.0,2\n", 2, "treated"),
    ("1,1,1.0,1\n1,2,1.0,0\n", 3, "both arms"),
    ("1,1,1.0,1\n1,1,2.0,1\n", 3, "duplicate"),
    ("1,1,1.0\n", 2, "4 fields"),
    ("1,1,nan,1\n", 2, "finite"),
])
def test_malformed_rows_cite_line(body, line, match):
    with pytest.raises(PanelFormatError, match=match) as info:
        _parse("user_id,day,outcome,treated\n" + body)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_day_beyond_k():
    with pytest.raises(PanelFormatError, match="outside 1..2"):
        _parse("user_id,day,outcome,treated\n1,3,1.0,1\n", k=2)


def test_bad_header_and_empty():
    with pytest.raises(PanelFormatError, match="header"):
        _parse("user,day,y,z\n")
    with pytest.raises(PanelFormatError):
        _parse("")
    with pytest.raises(PanelFormatError, match="no data"):
        _parse("user_id,day,outcome,treated\n")


def test_from_rows_invariants():
    with pytest.raises(ParameterError, match="duplicate"):
        PanelDataset.from_rows(2, [("a", 1, 1.0), ("a", 1, 2.0)], {"a": True})
    with pytest.raises(ParameterError, match="assignment"):
        PanelDataset.from_rows(2, [("a", 1, 1.0)], {})
    with pytest.raises(ParameterError, match="days"):
        PanelDataset.from_rows(2, [("a", 3, 1.0)], {"a": True})


def test_dense_view_drops_never_active_users():
    panel = PanelDataset.from_rows(
        3, [("a", 1, 2.0), ("a", 3, 1.0), ("c", 2, 5.0)],
        {"a": True, "b": True, "c": False, "d": False})
    t, c = panel.arms
    assert t.users == ("a",) and c.users == ("c",)
    np.testing.assert_array_equal(t.active, [[True, False, True]])
    np.testing.assert_array_equal(t.outcome, [[2.0, 0.0, 1.0]])
    np.testing.assert_array_equal(c.outcome, [[0.0, 5.0, 0.0]])
    dt, dc = panel.active_days()
    assert dt.tolist() == [2] and dc.tolist() == [1]
