import math

from geomflow import selftest

def test_tolerance_per_case():
    assert set(selftest.TOLERANCES) == set(selftest.CASES)
    assert all(t >= 0 for t in selftest.TOLERANCES.values())

def test_all_cases_pass():
    results = selftest.run_all()
    failed = [r.name for r in results if not r.passed]
    assert not failed, failed
    assert len(results) == len(selftest.CASES)

def test_only_filter():
    name = next(iter(selftest.CASES))
    results = selftest.run_all(only={name})
    assert [r.name for r in results] == [name]

def test_crashing_case_fails(monkeypatch):
    def boom():
        raise RuntimeError("broken")

    monkeypatch.setitem(selftest.CASES, "boom", boom)
    monkeypatch.setitem(selftest.TOLERANCES, "boom", 1.0)
    (res,) = selftest.run_all(only={"boom"})
    assert math.isnan(res.error) and not res.passed and "RuntimeError" in res.detail

def test_override_tolerance():
    name = next(iter(selftest.CASES))
    (res,) = selftest.run_all(tolerances={name: -1.0}, only={name})
    assert not res.passed

def test_format_table_summary():
    rows = [selftest.CaseResult("a", 0.0, 0.0), selftest.CaseResult("b", 2.0, 1.0)]
    lines = selftest.format_table(rows)
    assert lines[0].startswith("PASS") and lines[1].startswith("FAIL")
    assert lines[-1] == "1/2 cases passed"
