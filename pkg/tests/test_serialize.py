import json
import math

import numpy as np

from klinf.serialize import fmt, parse_float, to_json


def test_fmt_round_trip():
    for x in [0.1, 1 / 3, 1e-300, 2.0**60, -7.25, np.float64(0.020135513550688863)]:
        assert float(fmt(x)) == x
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(math.inf) == "+inf" and fmt(-math.inf) == "-inf" and fmt(math.nan) == "nan"
    assert fmt(None) == "" and fmt(True) == "true" and fmt(np.int64(3)) == "3"


def test_to_json_parses():
    obj = {"a": 0.1, "b": [1, 2.5, None], "c": {"d": math.inf, "e": True}, "f": "x"}
    back = json.loads(to_json(obj))
    assert back["a"] == 0.1 and back["b"] == [1, 2.5, None]
    assert back["c"] == {"d": "+inf", "e": True}
    assert parse_float(back["c"]["d"]) == math.inf
    assert to_json({}) == "{}" and to_json([]) == "[]"
