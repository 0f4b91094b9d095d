import math

import numpy as np
import pytest

from qcap import adaptive
from qcap.adaptive import (
    AdaptiveConfig,
    DegenerateControlError,
    DiagonalElement,
    FrobeniusNorm,
    RefineAll,
    RefineTopP,
    Status,
    control_scalar,
    default_tol,
    parse_control,
    parse_method,
    run_adaptive,
)
from qcap.system import memory_bytes

C = np.array([[3.0, -1.0], [-1.0, 2.0]])


def test_control_scalar_examples():
    assert control_scalar(C, DiagonalElement(0)) == 3.0
    assert control_scalar(C, DiagonalElement(1)) == 2.0
    assert control_scalar(C, FrobeniusNorm()) == pytest.approx(math.sqrt(15.0))
    with pytest.raises(IndexError):
        control_scalar(C, DiagonalElement(2))


@pytest.mark.parametrize("text, expected", [("all", RefineAll()), ("top:25", RefineTopP(25)), (" top:0.5 ", RefineTopP(0.5))])
def test_parse_method(text, expected):
    assert parse_method(text) == expected


@pytest.mark.parametrize("text", ["some", "top:0", "top:101", "top:x"])
def test_parse_method_rejects(text):
    with pytest.raises(ValueError):
        parse_method(text)


def test_parse_control():
    assert parse_control("fro") == FrobeniusNorm()
    assert parse_control("diag:1") == DiagonalElement(1)
    for bad in ("diag:-1", "max", "diag:"):
        with pytest.raises(ValueError):
            parse_control(bad)


def test_defaults():
    assert default_tol(RefineAll()) == 1e-2
    assert default_tol(RefineTopP(10)) == 1e-3
    cfg = AdaptiveConfig()
    assert cfg.max_iters == 30 and isinstance(cfg.method, RefineAll)


@pytest.mark.parametrize(
    "kwargs", [{"tol": 0}, {"max_iters": 0}, {"initial_l_max": -1}, {"method": "all"}, {"control": 0}]
)
def test_config_validation(kwargs):
    with pytest.raises((ValueError, TypeError)):
        AdaptiveConfig(**kwargs)


def test_huge_tolerance_stops_after_first_refinement(mtl2_rg):
    run = run_adaptive(mtl2_rg, AdaptiveConfig(tol=1e9, initial_l_max=1e-4))
    assert run.trace.status is Status.CONVERGED
    assert [r.iteration for r in run.trace.records] == [0, 1]
    assert math.isnan(run.trace.records[0].delta_rel)


def test_max_iters_status(mtl2_rg, caplog):
    run = run_adaptive(mtl2_rg, AdaptiveConfig(tol=1e-12, max_iters=2, initial_l_max=1e-4))
    assert run.trace.status is Status.MAX_ITERS
    assert len(run.trace) == 3
    assert "max_iters" in caplog.text


def test_refine_all_doubles_each_iteration(mtl2_rg):
    run = run_adaptive(mtl2_rg, AdaptiveConfig(tol=1e-3, max_iters=4, initial_l_max=1e-4))
    n0 = run.trace.records[0].n
    for r in run.trace.records:
        assert r.n == n0 * 2**r.iteration
        assert r.memory_bytes == memory_bytes(r.n, 2)


def test_trace_invariants(mtl2_rg):
    seen = []
    cfg = AdaptiveConfig(RefineTopP(20), tol=1e-3, max_iters=12, initial_l_max=1e-4)
    run = run_adaptive(mtl2_rg, cfg, callback=seen.append)
    recs = run.trace.records
    assert seen == recs
    assert [r.iteration for r in recs] == list(range(len(recs)))
    assert all(b.n > a.n for a, b in zip(recs, recs[1:]))
    for prev, cur in zip(recs, recs[1:]):
        assert cur.delta_rel == pytest.approx(abs(cur.control - prev.control) / abs(prev.control), rel=1e-15)
    if run.trace.status is Status.CONVERGED:
        assert recs[-1].delta_rel <= cfg.tol
        assert all(r.delta_rel > cfg.tol for r in recs[1:-1])
    assert recs[-1].control == run.capacitance.C[0, 0]
    assert len(run.mesh) == recs[-1].n


def test_top_100_matches_refine_all(mtl2_rg):
    a = run_adaptive(mtl2_rg, AdaptiveConfig(RefineAll(), 1e-2, 6, 1e-4))
    b = run_adaptive(mtl2_rg, AdaptiveConfig(RefineTopP(100), 1e-2, 6, 1e-4))
    assert [r.n for r in a.trace.records] == [r.n for r in b.trace.records]
    np.testing.assert_allclose(b.capacitance.C, a.capacitance.C, rtol=1e-12)


def test_control_index_out_of_range(mtl2_rg):
    with pytest.raises(IndexError):
        run_adaptive(mtl2_rg, AdaptiveConfig(control=DiagonalElement(5)))


def test_degenerate_control(mtl2_rg, monkeypatch):
    monkeypatch.setattr(adaptive, "control_scalar", lambda cap, control: 0.0)
    with pytest.raises(DegenerateControlError):
        run_adaptive(mtl2_rg, AdaptiveConfig(initial_l_max=1e-4))


def test_trace_csv(mtl2_rg):
    run = run_adaptive(mtl2_rg, AdaptiveConfig(tol=1e9, initial_l_max=1e-4))
    lines = run.trace.to_csv().splitlines()
    assert lines[0] == "iter,N,control,delta_rel,mem_bytes,seconds,status"
    assert lines[1].split(",")[3] == "" and lines[2].endswith(",converged")


def test_control_scalar_one_by_one():
    assert control_scalar([[-2.0]], DiagonalElement(0)) == -2.0
    assert control_scalar([[-2.0]], FrobeniusNorm()) == 2.0
    assert control_scalar([[2.0, -1.0], [-1.0, 2.0]], FrobeniusNorm()) == pytest.approx(3.1623, abs=1e-4)


def test_refinement_changes_shrink(mtl2_rg):
    run = run_adaptive(mtl2_rg, AdaptiveConfig(tol=1e-12, max_iters=6, initial_l_max=1e-4))
    deltas = [abs(r.delta_rel) for r in run.trace.records[1:]]
    assert all(b < a for a, b in zip(deltas[2:], deltas[3:]))
