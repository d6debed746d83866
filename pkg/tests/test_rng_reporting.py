import json

import numpy as np
import pytest

from frechetlab import trials
from frechetlab.reporting import dumps, fmt, write_csv
from frechetlab.rng import StreamFactory, key_part, substream


def test_substreams_are_stable_and_distinct():
    a = substream(42, "clt", 3).standard_normal(4)
    assert np.array_equal(a, substream(42, "clt", 3).standard_normal(4))
    assert not np.array_equal(a, substream(42, "clt", 4).standard_normal(4))
    assert not np.array_equal(a, substream(43, "clt", 3).standard_normal(4))


def test_factory_child_matches_flat_key():
    s = StreamFactory(7, "study")
    assert np.array_equal(s.child("a")(1).random(3), s("a", 1).random(3))
    assert np.array_equal(s("a", 1).random(3), substream(7, "study", "a", 1).random(3))


def test_key_part_rules():
    assert key_part(5) == 5
    assert key_part("abc") == key_part("abc") != key_part("abd")
    with pytest.raises(ValueError):
        key_part(-1)


def test_map_trials_order_independent_of_workers():
    def fn(i):
        return substream(1, i).random()

    serial = trials.map_trials(fn, 600)
    old = trials._max_workers
    try:
        trials.set_max_workers(4)
        threaded = trials.map_trials(fn, 600, chunk=7)
    finally:
        trials.set_max_workers(old)
    assert serial == threaded


def test_fmt_17_significant_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(1 / 3)) == 1 / 3
    assert fmt(True) == "true"
    assert fmt(np.int64(3)) == "3"
    assert fmt(float("inf")) == "inf"


def test_write_csv(tmp_path):
    p = write_csv(tmp_path / "x.csv", ("a", "b"), [(1, 0.5), (2, np.float64(2 / 3))])
    assert p.read_bytes() == b"a,b\n1,0.5\n2,0.66666666666666663\n"


def test_dumps_is_valid_json_with_full_precision():
    obj = {"x": 1 / 3, "arr": np.array([[1.0, 2.0]]), "flag": np.bool_(True), "none": None,
           "inf": float("inf"), "empty": []}
    back = json.loads(dumps(obj))
    assert back["x"] == 1 / 3
    assert back["arr"] == [[1.0, 2.0]]
    assert back["flag"] is True and back["none"] is None
    assert back["inf"] == "inf"
