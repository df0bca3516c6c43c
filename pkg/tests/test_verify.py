from __future__ import annotations

import json
from importlib import resources

import jsonschema
import pytest

from diffmean import verify
from diffmean.verify import CheckReport, ConfigError

SMALL = {
    "L3": {"mc_samples": 20_000},
    "L5": {"ns": [4, 8], "count": 1000, "chains": 4, "min_ess": 100},
    "L6": {"ns": [4, 8], "count": 1000, "chains": 4, "min_ess": 100},
    "L7": {"N": 2000, "m": 64},
    "L8": {"N": 200, "m": 64, "c4_samples": 2000},
    "T3": {"ns": [2, 4], "Nx": 4, "Nphi": 2, "m": 32},
    "RN": {"N": 2000, "m": 64},
    "GLUE": {"draws": 50},
}


def _schema():
    text = resources.files("diffmean").joinpath("schemas/check_report.schema.json").read_text()
    return json.loads(text)


def test_evaluate_rules():
    assert verify.evaluate({"a": 1.0, "b": 5}, {"a.max": 1.0, "b.min": 5})
    assert not verify.evaluate({"a": 1.1}, {"a.max": 1.0})
    assert not verify.evaluate({"a": None}, {"a.max": 1.0})
    with pytest.raises(ValueError):
        verify.evaluate({"a": 1.0}, {"a.lt": 2.0})


def test_unknown_id_and_params():
    with pytest.raises(ConfigError):
        verify.run_check("L99")
    with pytest.raises(ConfigError):
        verify.resolve_params("L7", {"bogus": 1})
    with pytest.raises(ConfigError, match="minimum"):
        verify.resolve_params("L7", {"N": 10})


@pytest.mark.parametrize("cid", ["L1", "L2", "L4", "L9", "GLUE"])
def test_fast_checks_pass(cid):
    rep = verify.run_check(cid, SMALL.get(cid), seed=1)
    assert rep.passed, rep.statistics
    jsonschema.validate(rep.to_dict(), _schema())
    assert rep.passed == verify.evaluate(rep.statistics, rep.bounds)


@pytest.mark.parametrize("cid", ["L3", "L5", "L6", "L7", "L8", "T3", "RN"])
def test_small_budget_checks_run_and_validate(cid):
    rep = verify.run_check(cid, SMALL[cid], seed=2)
    jsonschema.validate(rep.to_dict(), _schema())
    assert rep.passed == verify.evaluate(rep.statistics, rep.bounds)


def test_report_roundtrip_and_determinism():
    a = verify.run_check("GLUE", SMALL["GLUE"], seed=5)
    b = verify.run_check("GLUE", SMALL["GLUE"], seed=5)
    assert a.canonical() == b.canonical()
    back = CheckReport.from_json(a.to_json())
    assert back.to_json() == a.to_json()
    assert "wall_time_ms" not in json.loads(a.canonical())


def test_l9_alternating_scaling():
    g = verify.diffeo.make_bump(0.5)
    s1, t1, _ = verify.alternating_deviation(g, 1e-2, 801)
    s2, t2, _ = verify.alternating_deviation(g, 1e-8, 801)
    assert t2 > t1 and abs(s2) < abs(s1)
    s0, _, _ = verify.alternating_deviation(verify.diffeo.identity(), 1e-3, 100)
    assert abs(s0) < 1e-12


def test_summary_flags_duplicates():
    r = verify.run_check("L2", seed=0)
    text = verify.summary_csv([r, r])
    rows = text.strip().splitlines()
    assert rows[0].split(",") == verify.SUMMARY_FIELDS
    assert rows[1].split(",")[3] == "true"
    assert rows[-1].startswith("ALL,,true")


def test_suite_order_is_independent_of_threads():
    ids = ["L2", "L9", "GLUE"]
    one = verify.suite(3, ids, SMALL)
    two = verify.suite(3, ids, SMALL, threads=2)
    assert [r.canonical() for r in one] == [r.canonical() for r in two]
