import json
import math

import numpy as np
import pytest

from mobilitylab.errors import ParameterError
from mobilitylab.output import atomic_write_text, format_csv, format_float, write_json
from mobilitylab.workers import derive_seed, make_rng, map_ordered, resolve_jobs


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(2.5) == "2.5"
    assert format_float(math.nan) == ""
    assert float(format_float(1 / 3)) == 1 / 3


def test_format_csv():
    rows = [(1, np.float64(0.5), True), (None, "x", np.int64(3))]
    text = format_csv(("a", "b", "c"), rows, {"n": 3})
    assert text.splitlines() == ['# config: {"n": 3}', "a,b,c", "1,0.5,true", ",x,3"]
    assert format_csv(("a",), []) == "a\n"


def test_write_json_maps_nan_to_null(tmp_path):
    target = tmp_path / "out" / "report.json"
    write_json(target, {"x": np.float64("nan"), "v": np.arange(3), "ok": np.bool_(True)})
    assert json.loads(target.read_text()) == {"ok": True, "v": [0, 1, 2], "x": None}


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "a.txt"
    atomic_write_text(target, "one\n")
    atomic_write_text(target, "two\n")
    assert target.read_text() == "two\n"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_derive_seed():
    assert derive_seed(1, "u_x", 3) == derive_seed(1, "u_x", 3)
    seeds = {derive_seed(1, "u_x", i) for i in range(100)}
    assert len(seeds) == 100
    assert derive_seed(1, "u_x", 0) != derive_seed(2, "u_x", 0)
    assert 0 <= derive_seed(7, "lanczos") < 2**63


def test_make_rng_is_reproducible():
    assert make_rng(5).random(4).tolist() == make_rng(5).random(4).tolist()


@pytest.mark.parametrize("kind", ["thread", "process"])
def test_map_ordered_keeps_order(kind):
    items = [-4, 3, -2, 1, 0]
    assert map_ordered(abs, items, jobs=3, kind=kind) == [4, 3, 2, 1, 0]


def test_map_ordered_rejects_unknown_pool():
    with pytest.raises(ParameterError):
        map_ordered(abs, [1, 2], jobs=2, kind="fiber")


def test_resolve_jobs(monkeypatch):
    monkeypatch.delenv("MOBILITYLAB_JOBS", raising=False)
    assert resolve_jobs(3) == 3
    assert resolve_jobs() >= 1
    monkeypatch.setenv("MOBILITYLAB_JOBS", "5")
    assert resolve_jobs() == 5
    monkeypatch.setenv("MOBILITYLAB_JOBS", "many")
    with pytest.raises(ParameterError):
        resolve_jobs()
    with pytest.raises(ParameterError):
        resolve_jobs(0)
