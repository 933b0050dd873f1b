import json
import math

import numpy as np
from hypothesis import given, strategies as st

from oselab.serialization import dumps_stable, one_line, write_atomic

finite = st.floats(allow_nan=False, allow_infinity=False)
tree = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6) | finite | st.text(max_size=8),
    lambda kids: st.lists(kids, max_size=4) | st.dictionaries(st.text(max_size=5), kids, max_size=4),
    max_leaves=20,
)


@given(x=finite)
def test_float_round_trip(x):
    assert json.loads(dumps_stable(x)) == x


@given(obj=tree)
def test_tree_round_trip(obj):
    assert json.loads(dumps_stable(obj)) == obj
    assert json.loads(one_line(obj)) == obj
    assert "\n" not in one_line(obj)


def test_infinities_and_complex():
    doc = json.loads(dumps_stable({"a": -math.inf, "b": [1.5, math.inf], "z": 1 - 2j, "n": math.nan}))
    assert doc == {"a": "-inf", "b": [1.5, "inf"], "z": {"re": 1.0, "im": -2.0}, "n": "nan"}


def test_numpy_values():
    assert json.loads(dumps_stable({"v": np.arange(3.0), "s": np.float64(0.1)})) == {"v": [0.0, 1.0, 2.0], "s": 0.1}


def test_write_atomic(tmp_path):
    p = tmp_path / "sub" / "out.json"
    write_atomic(p, "first")
    write_atomic(p, "second")
    assert p.read_text() == "second"
    assert [q.name for q in p.parent.iterdir()] == ["out.json"]
