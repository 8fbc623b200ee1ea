import json

import numpy as np
import pytest

from delaystack.scenario_io import ScenarioError, builtin_document, load_scenario, scenario_from_dict, with_parameter
from delaystack.scenarios import neutral_difference
from delaystack.solver import solve_coupled

INLINE_1_8 = {
    "system": {"kind": "coupled", "n1": 1, "n2": 1, "r1": 0, "r2": 1.0, "tau": "r",
               "f1": ["a"], "f2": ["x1_0 + b"], "taps": {"a": "x2_0(-r)", "b": "x2_0(-2*r)"},
               "params": {"r": 0.5}},
    "initial": {"x1": 1.0, "x2": 0.0},
    "run": {"horizon": 2.0, "substeps_per_step": 16},
}


def test_builtin_reference_matches_hard_coded_system():
    scn = scenario_from_dict({"system": "example_1_8", "r": 0.5, "run": {"horizon": 2.0, "substeps_per_step": 16}})
    a = solve_coupled(scn.system, **scn.solve_kwargs())
    b = solve_coupled(neutral_difference(0.5), 1.0, 0.0, horizon=2.0, substeps_per_step=16)
    assert a.to_csv() == b.to_csv()


def test_inline_definition_matches_built_in():
    scn = scenario_from_dict(INLINE_1_8)
    a = solve_coupled(scn.system, **scn.solve_kwargs())
    b = solve_coupled(neutral_difference(0.5), 1.0, 0.0, horizon=2.0, substeps_per_step=16)
    Ta, X1a, X2a, _ = a.table()
    Tb, X1b, X2b, _ = b.table()
    assert np.array_equal(Ta, Tb)
    assert np.max(np.abs(X1a - X1b)) < 1e-12 and np.max(np.abs(X2a - X2b)) < 1e-12


def test_load_from_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(INLINE_1_8))
    assert load_scenario(p).horizon == 2.0


@pytest.mark.parametrize("doc, path, fragment", [
    ({"system": {k: v for k, v in INLINE_1_8["system"].items()}}, "run.horizon", "horizon"),
    ({"system": "example_1_8", "run": {"horizon": -1}}, "run.horizon", "minimum"),
    ({"system": "nope"}, "system", "nope"),
    ({"system": "example_4_1", "c": "x"}, "c", "numbers"),
])
def test_document_errors_name_the_field(doc, path, fragment):
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.path == path and fragment in str(exc.value)


def test_unbound_identifier_lists_free_variables():
    doc = with_parameter(INLINE_1_8, "system.f1", ["a + z"])
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.path == "system.f1.0"
    assert "'z'" in str(exc.value) and "free variables" in str(exc.value)


def test_syntax_error_reports_offset():
    doc = with_parameter(INLINE_1_8, "system.f1", ["a + "])
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert "offset 4" in str(exc.value)


def test_unreadable_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ScenarioError, match="line 1"):
        load_scenario(bad)


def test_with_parameter_does_not_mutate():
    doc = builtin_document("example_4_1", c=3.0)
    out = with_parameter(doc, "c", 1.5)
    assert doc["c"] == 3.0 and out["c"] == 1.5
    assert with_parameter(INLINE_1_8, "r", 0.25)["system"]["params"]["r"] == 0.25
    with pytest.raises(ScenarioError):
        with_parameter(INLINE_1_8, "run.nothing.here", 1.0)
