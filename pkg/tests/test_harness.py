import csv
import json
import math
from dataclasses import replace

import pytest

from ccregion import harness
from ccregion.exceptions import DomainError, CCRError
from ccregion.harness import (
    ExperimentFailure,
    ExperimentSpec,
    TrialRecord,
    default_spec,
    read_trials,
    run_experiment,
    run_trial,
    summarize,
    trial_seeds,
    trials_csv_text,
)


def small(name, **over):
    return replace(default_spec(name), **over)


def test_trial_seeds():
    assert trial_seeds(7, 3) == trial_seeds(7, 3)
    assert trial_seeds(7, 3) != trial_seeds(7, 4)
    assert trial_seeds(7, 3) != trial_seeds(8, 3)
    assert len(set(trial_seeds(0, 0))) == 5


def test_spec_validation():
    with pytest.raises(DomainError):
        ExperimentSpec("nope")
    with pytest.raises(DomainError):
        small("coverage_table", trials=0)
    with pytest.raises(DomainError):
        ExperimentSpec("coverage_table", methods=("bogus",))
    spec = small("coverage_table", seed=4)
    assert ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_coverage_records_consistent(tmp_path):
    spec = small("coverage_table", trials=5, out=str(tmp_path))
    res = run_experiment(spec)
    assert len(res.records) == 5 * 4 * 4
    for r in res.records:
        assert r.covered == (r.votes >= r.k)
    rows = read_trials(tmp_path / "trials.csv")
    assert summarize(spec.name, rows, spec.box) == res.summary
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["experiment"]["trials"] == 5 and "version" in meta


def test_workers_do_not_change_trials(tmp_path):
    a = run_experiment(small("coverage_table", trials=6, workers=1, out=str(tmp_path / "a")))
    b = run_experiment(small("coverage_table", trials=6, workers=2, out=str(tmp_path / "b")))
    assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()
    assert a.summary == b.summary


def test_paired_methods_share_scenario():
    recs = run_trial(small("coverage_table"), 0)
    by_setting = {}
    for r in recs:
        by_setting.setdefault(r.noise, set()).add(r.votes)
    assert all(len(v) == 1 for v in by_setting.values())


def test_near_vacuous_beta():
    spec = small("coverage_table", trials=40, beta=0.999, methods=("split",))
    res = run_experiment(spec)
    assert all(r.k == 30 for r in res.records)
    assert all(row["coverage"] == 1.0 for row in res.summary)


def test_width_table_small(tmp_path):
    res = run_experiment(small("width_table", trials=1, out=str(tmp_path)))
    split = [r for r in res.records if r.method == "split"][0]
    assert split.status == "ok" and len(split.widths) == 3
    assert (tmp_path / "timings.csv").exists() and (tmp_path / "timing_summary.csv").exists()
    assert "solve_time" not in (tmp_path / "trials.csv").read_text()
    rows = read_trials(tmp_path / "trials.csv")
    assert summarize("width_table", rows) == res.summary


def test_width_shrinks_without_noise():
    base = small("width_table", trials=1, methods=("split",))
    widths = []
    for n in (10, 40):
        spec = replace(base, scenario=replace(base.scenario, n=n, noise_scale=0.01))
        res = run_experiment(spec)
        widths.append(sum(res.records[0].widths))
    assert widths[1] < widths[0]


def test_rejection_columns():
    res = run_experiment(small("rejection_test", trials=2))
    settings = {(r.metrics["setting"], r.method) for r in res.records}
    assert settings == {(s, m) for s in ("sine", "linear") for m in ("split", "worst_case")}
    assert {row["setting"] for row in res.summary} == {"sine", "linear"}


def test_noise_free_run():
    res = run_experiment(small("noise_free_vs_noisy", trials=3, test_size=300))
    assert len(res.records) == 3 * 2 * 2
    for row in res.summary:
        assert row["mean_cov_noise_free"] >= row["mean_cov_noisy"]


def test_curve_outputs(tmp_path):
    res = run_experiment(small("coverage_curve", out=str(tmp_path)))
    with open(tmp_path / "curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    by_method = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append((int(r["k"]), float(r["coverage"])))
    for pts in by_method.values():
        pts.sort()
        assert pts[0] == (0, 1.0)
        assert all(a[1] >= b[1] - 1e-12 for a, b in zip(pts, pts[1:]))
    assert (tmp_path / "pac_delta.csv").exists() and res.summary


def test_abstention_outputs(tmp_path):
    res = run_experiment(small("abstention_sweep", trials=3, test_size=300, out=str(tmp_path)))
    assert res.summary[0]["bound"] == pytest.approx(0.7)
    assert (tmp_path / "sweep.csv").read_text().startswith("threshold,rejection_rate,mse_accepted")


def test_errors_are_recorded(monkeypatch):
    def boom(spec, idx, seeds):
        raise CCRError("synthetic failure")
    monkeypatch.setitem(harness._TRIAL_FNS, "coverage_table", boom)
    recs = run_trial(small("coverage_table"), 0)
    assert recs[0].status == "error:CCRError"
    with pytest.raises(ExperimentFailure):
        run_experiment(small("coverage_table", trials=3))


def test_indeterminate_threshold():
    spec = small("rejection_test", trials=10)
    recs = [TrialRecord(i, 0, "aG", 3, "split", status="optimal") for i in range(18)]
    recs += [TrialRecord(i, 0, "aG", 3, "split", status="indeterminate") for i in range(2)]
    with pytest.raises(ExperimentFailure):
        harness._check_failures(spec, recs)
    ok = [TrialRecord(i, 0, "aG", 3, "split", status="optimal") for i in range(19)]
    harness._check_failures(spec, ok + recs[-1:])


def test_csv_text_formats():
    recs = [TrialRecord(0, 1, "aG", 3, "split", 5, True, 7, (1.5, math.inf), metrics={"x": 0.25})]
    text = trials_csv_text(recs)
    assert text.splitlines()[1] == "0,1,aG,3,split,5,1,7,1.5;inf,0,ok,0.25"
