import json
import math

import numpy as np
import pytest

from bmlr.errors import ConfigError
from bmlr.model import ModelParameters
from bmlr.simulation import (
    CSV_COLUMNS,
    CoverageReport,
    ErrorRecord,
    SweepSpec,
    TrialConfig,
    aggregate_errors,
    emit_coverage,
    emit_results,
    read_results,
    run_sweep,
    run_trial,
    trial_seed,
    verify_bound_coverage,
)

SMALL = TrialConfig(n=4, m=3, p=3, q=2, T=40)


def record(errA, errB, value=1, status="ok"):
    norms = {"frobenius_sq": errA, "operator": errA, "max": errA}
    normsB = {"frobenius_sq": errB, "operator": errB, "max": errB}
    return ErrorRecord({}, 0, 0, norms, normsB, 0, status=status, param_name="T",
                       param_value=value)


def test_noiseless_trial_is_exact():
    rec = run_trial(SMALL.replace(sigma_r=0.0), 3)
    assert rec.ok
    assert rec.errA["frobenius_sq"] <= 1e-16
    assert rec.errB["frobenius_sq"] <= 1e-16


def test_trial_determinism():
    assert run_trial(SMALL, 11) == run_trial(SMALL, 11)
    assert run_trial(SMALL, 11).errB != run_trial(SMALL, 12).errB


def test_trial_errors_nonnegative_finite():
    rec = run_trial(SMALL, 5)
    vals = list(rec.errA.values()) + list(rec.errB.values())
    assert all(math.isfinite(v) and v >= 0 for v in vals)
    assert rec.errA["operator"] ** 2 <= rec.errA["frobenius_sq"] * (1 + 1e-12)


def test_failed_trial_is_recorded():
    rec = run_trial(SMALL.replace(T=3), 0)
    assert not rec.ok and rec.status.startswith("failed")
    assert math.isnan(rec.errB["frobenius_sq"])


def test_sparse_metrics_present():
    rec = run_trial(SMALL.replace(delta=0.1, design="orthogonal"), 2)
    for key in ("A_support_true", "B_support_est", "B_support_match", "errA_sparse_frob_sq",
                "tau_A", "t_delta"):
        assert key in rec.sparse


def test_sweep_order_seeds_and_failures():
    spec = SweepSpec(SMALL, "T", (3, 40), trials=3, seed=9)
    recs = run_sweep(spec)
    assert [(r.param_value, r.trial) for r in recs] == [(3, 0), (3, 1), (3, 2),
                                                        (40, 0), (40, 1), (40, 2)]
    assert all(not r.ok for r in recs[:3]) and all(r.ok for r in recs[3:])
    assert recs[4].seed == trial_seed(9, 1, 1)
    rows = aggregate_errors(recs)
    failed = [r for r in rows if r["param_value"] == 3]
    assert all(r["all_failed"] and math.isnan(r["mean"]) and r["failures"] == 3 for r in failed)


def test_sweep_csv_is_byte_identical_across_jobs(tmp_path):
    spec = SweepSpec(SMALL, "n", (3, 5), trials=4, seed=1)
    a = emit_results(run_sweep(spec, jobs=1), tmp_path / "a.csv", metadata={"seed": 1})
    b = emit_results(run_sweep(spec, jobs=4), tmp_path / "b.csv", metadata={"seed": 1})
    assert a.read_bytes() == b.read_bytes()


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(SMALL, "design", (1,))
    with pytest.raises(ConfigError):
        SweepSpec(SMALL, "T", (10,), trials=0)
    with pytest.raises(ConfigError):
        SweepSpec(SMALL, "T", (0,))
    spec = SweepSpec(SMALL, "sigma_r", (0.5,))
    assert spec.config_at(0.5).sigma_r == 0.5


def test_aggregate_single_and_pair():
    rows = aggregate_errors([record(2.5, 1.0)])
    row = next(r for r in rows if r["metric"] == "errA_frob_sq")
    assert row["mean"] == 2.5 and row["std"] == 0.0 and row["count"] == 1
    rows = aggregate_errors([record(1.0, 0.0), record(3.0, 0.0)])
    row = next(r for r in rows if r["metric"] == "errA_frob_sq")
    assert row["mean"] == 2.0 and row["std"] == 1.0


def test_aggregate_matches_streaming_oracle():
    recs = run_sweep(SweepSpec(SMALL, "T", (40,), trials=200, seed=4))
    rows = aggregate_errors(recs)
    row = next(r for r in rows if r["metric"] == "errB_frob_sq")
    # Welford one-pass update, independent of the batch numpy path
    count, mean, m2 = 0, 0.0, 0.0
    for r in recs:
        x = r.errB["frobenius_sq"]
        count += 1
        d = x - mean
        mean += d / count
        m2 += d * (x - mean)
    assert abs(row["mean"] - mean) <= 1e-12 * max(1.0, mean)
    assert abs(row["std"] - math.sqrt(m2 / count)) <= 1e-12 * max(1.0, mean)


def test_aggregate_empty():
    with pytest.raises(ConfigError):
        aggregate_errors([])


def test_emit_empty_is_header_only(tmp_path):
    path = emit_results([], tmp_path / "e.csv")
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_emit_golden_line(tmp_path):
    rec = ErrorRecord({}, 7, 123, {"frobenius_sq": 0.5, "operator": 0.25, "max": 0.125},
                      {"frobenius_sq": 1.5, "operator": 1.0, "max": 0.75}, 2,
                      param_name="T", param_value=1000)
    path = emit_results([rec], tmp_path / "g.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ("param_name,param_value,trial,seed,errA_frob_sq,errB_frob_sq,errA_op,"
                        "errB_op,errA_max,errB_max,clip_count,status")
    assert lines[1] == "T,1000,7,123,0.5,1.5,0.25,1.0,0.125,0.75,2,ok"


def test_emit_roundtrip_csv_and_json(tmp_path):
    recs = run_sweep(SweepSpec(SMALL, "T", (40,), trials=3, seed=2))
    meta = {"command": "sweep", "seed": 2}
    path = emit_results(recs, tmp_path / "r.csv", metadata=meta)
    got_meta, rows = read_results(path)
    assert got_meta == meta
    for rec, row in zip(recs, rows):
        for key, val in rec.csv_row().items():
            if isinstance(val, float):
                assert float(row[key]) == val
            else:
                assert row[key] == str(val)
    jpath = emit_results(recs, tmp_path / "r.json", fmt="json", metadata=meta)
    doc = json.loads(jpath.read_text())
    assert doc["metadata"] == meta
    assert doc["rows"][1]["errB"] == recs[1].errB


def test_emit_errors(tmp_path):
    with pytest.raises(ConfigError):
        emit_results([], tmp_path / "x", fmt="xml")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_results([], blocker / "sub" / "x.csv")


def test_coverage_report_limits():
    rep = CoverageReport("B_frob", {}, 0.1, 220, 2000, {})
    assert rep.frequency == pytest.approx(0.11)
    assert rep.limit == pytest.approx(0.1 + 2 * math.sqrt(0.09 / 2000))
    assert rep.passed
    assert not CoverageReport("B_frob", {}, 0.1, 300, 2000, {}).passed


def test_gauss_coverage_small():
    (rep,) = verify_bound_coverage("gauss_max_tail", [TrialConfig(n=100)], 2000, 0.1, seed=3)
    assert 0 <= rep.frequency <= 1
    assert rep.passed


def test_dense_coverage_small(tmp_path):
    cfg = TrialConfig(n=4, m=3, p=3, q=4, T=60, sigma_r=0.3)
    reps = verify_bound_coverage(["B_frob", "B_op"], [cfg], 300, 0.1, seed=1)
    assert [r.bound for r in reps] == ["B_frob", "B_op"]
    assert all(r.passed for r in reps)
    assert all(r.params["design"] == "orthogonal" for r in reps)
    path = emit_coverage(reps, tmp_path / "c.csv", metadata={"seed": 1})
    _, rows = read_results(path)
    assert rows[0]["bound"] == "B_frob" and rows[0]["passed"] in ("true", "false")


def test_coverage_assumption_errors():
    cfg = TrialConfig(n=3, m=2, p=2, q=2, T=20, sigma_r=0.5)
    bad_beta = ModelParameters(np.full((3, 2), 0.5), -np.ones((2, 2)), 0.5)
    with pytest.raises(ConfigError, match="beta"):
        verify_bound_coverage("A_max", [(cfg, bad_beta)], 10, 0.1)
    with pytest.raises(ConfigError, match="n >= 2"):
        verify_bound_coverage("A_max", [cfg.replace(n=1)], 10, 0.1)
    dense = ModelParameters(np.full((3, 2), 0.5), np.full((2, 2), 1e-3), 0.5)
    with pytest.raises(ConfigError, match="3 tau"):
        verify_bound_coverage("B_sparse_support", [(cfg, dense)], 10, 0.1)
    with pytest.raises(ConfigError, match="unknown bound"):
        verify_bound_coverage("C_max", [cfg], 10, 0.1)
