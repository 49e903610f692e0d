import json

import numpy as np
import pytest

from fibersys.errors import ParseError, ValidationError
from fibersys.scenarios import BUILTINS, builtin_dict, load_scenario, scenario_from_dict


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_load(name):
    sc = load_scenario(name)
    assert sc.name == name
    assert len(sc.splitting.polys) == len(sc.system.base.charts)


def test_file_round_trip(tmp_path):
    path = tmp_path / "so3.json"
    path.write_text(json.dumps(builtin_dict("so3-sphere")))
    a, b = load_scenario(path), load_scenario("so3-sphere")
    x = np.array([0.3, -0.7])
    assert np.allclose(a.splitting.matrix(0, x), b.splitting.matrix(0, x))
    assert set(a.curves) == set(b.curves)


def test_wrong_schema():
    d = builtin_dict("trivial")
    d["schema"] = "fibersys/0"
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    assert info.value.invariant == "schema"


def test_missing_key():
    d = builtin_dict("trivial")
    del d["system"]["fiber"]
    with pytest.raises(ValidationError):
        scenario_from_dict(d)


def test_bad_json_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": "fibersys/1",\n  oops}')
    with pytest.raises(ParseError) as info:
        load_scenario(path)
    assert info.value.location == f"{path}:2:3"


def test_unknown_reference():
    with pytest.raises(ParseError):
        load_scenario("no-such-scenario")


def test_jacobi_failure_rejected():
    c = np.zeros((3, 3, 3))
    c[0, 1, 2], c[1, 0, 2] = 1.0, -1.0
    c[1, 2, 0], c[2, 1, 0] = 1.0, -1.0
    c[0, 2, 0], c[2, 0, 0] = 1.0, -1.0
    d = builtin_dict("trivial")
    d["system"] = {"base": d["system"]["base"], "fiber": {"kind": "euclidean", "dim": 1},
                   "structure_constants": c.tolist(), "action": "trivial"}
    d["splitting"] = "zero"
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    assert info.value.invariant == "jacobi"


def test_transition_outside_group():
    d = builtin_dict("circle-base-winding")
    d["system"]["transitions"][0]["matrix"] = [[2.0, 0.0], [0.0, 1.0]]
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    assert info.value.invariant == "transition-membership"


def test_incompatible_splitting_rejected():
    d = builtin_dict("circle-base-winding")
    d["splitting"]["charts"][1] = [{"exp": [0], "coef": [[0.5]]}]
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    assert info.value.invariant == "splitting-compatibility"


def test_tolerance_lookup():
    sc = load_scenario("abelian-area")
    sc.raw["tolerances"] = {}
    assert sc.tol("missing", 1e-6, 10.0) == pytest.approx(1e-5)
