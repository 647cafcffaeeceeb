"""Seeded Monte Carlo experiment runner.

Each experiment is a list of independent trials.  Trial ``i`` derives all of its
randomness from ``SeedSequence([master_seed, i])``, so results do not depend on
how trials are spread over worker processes.  Outputs:

* ``trials.csv``: one row per (trial, setting, method), deterministic;
* ``summary.csv``: a pure fold over the trial rows;
* ``timings.csv`` and ``timing_summary.csv``: wall-clock solve times (not deterministic);
* ``meta.json``: the resolved experiment spec and package version.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .abstain import abstention_bound, abstention_sweep, error_bound_check, write_sweep_csv
from .bounds import METHODS, NoiseAssumption, coverage_curve, pac_delta_curve, select_k, write_curve_csv
from .conformal import intervals_for, split_calibrate
from .exceptions import CCRError, DomainError
from .region import (
    IndeterminateError,
    EmptyRegionError,
    build_region,
    coordinate_intervals,
    count_votes,
    is_empty,
)
from .synthetic import NoiseKind, ScenarioConfig, augmented_features, make_rng, sample_scenario

EXPERIMENTS = ("coverage_table", "width_table", "rejection_test", "noise_free_vs_noisy",
               "coverage_curve", "abstention_sweep")
MAX_ERROR_RATE = 0.01
MAX_INDETERMINATE_RATE = 0.05


class ExperimentFailure(CCRError, RuntimeError):
    """Too many trials failed or stayed indeterminate."""


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    methods: tuple = ("split", "worst_case")
    noises: tuple = ()
    dims: tuple = ()
    alpha: float = 0.1
    beta: float = 0.1
    delta: float = 0.1
    b: float = 0.5
    assumption3: bool = True
    pac_refined: bool = False
    trials: int = 100
    workers: int = 1
    seed: int = 0
    out: str | None = None
    split_fraction: float = 0.5
    box: float = 100.0
    test_size: int = 1000
    train_sizes: tuple = ()
    thresholds: tuple = ()
    deltas: tuple = (0.01, 0.05, 0.1, 0.2, 0.5)
    node_limit: int = 100_000

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if self.trials < 1 or self.workers < 1:
            raise DomainError("trials and workers must be at least 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise DomainError(f"unknown methods {bad}")
        for key in ("methods", "noises", "dims", "train_sizes", "thresholds", "deltas"):
            object.__setattr__(self, key, tuple(getattr(self, key)))
        object.__setattr__(self, "noises", tuple(NoiseKind.parse(v).short for v in self.noises))

    @property
    def noise(self) -> NoiseAssumption:
        return NoiseAssumption(self.b, self.assumption3)

    def settings(self) -> list[tuple[str, int]]:
        noises = self.noises or (self.scenario.noise.short,)
        dims = self.dims or (self.scenario.d,)
        return [(nz, d) for d in dims for nz in noises]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scenario"] = self.scenario.to_dict()
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        doc = dict(doc)
        base = default_spec(doc["name"])
        scen = base.scenario.to_dict()
        scen.update(doc.pop("scenario", {}) or {})
        return replace(base, scenario=ScenarioConfig(**scen), **doc)


def default_spec(name: str) -> ExperimentSpec:
    """Desk-scale defaults for each experiment."""
    if name == "coverage_table":
        return ExperimentSpec(name, ScenarioConfig(d=3, n_obs=100, n=30), methods=METHODS,
                              noises=("aG", "mG", "O", "D"), trials=300)
    if name == "width_table":
        return ExperimentSpec(name, ScenarioConfig(d=3, n_obs=40, n=30), methods=("split", "markov"),
                              trials=50)
    if name == "rejection_test":
        return ExperimentSpec(name, ScenarioConfig(d=3, n_obs=100, n=30, nonlinear=True),
                              methods=("split", "worst_case"), trials=100)
    if name == "noise_free_vs_noisy":
        return ExperimentSpec(name, ScenarioConfig(d=10, n_obs=200, n=30), methods=(),
                              noises=("aG", "O"), train_sizes=(40, 100), trials=200)
    if name == "coverage_curve":
        return ExperimentSpec(name, ScenarioConfig(d=3, n_obs=100, n=30), methods=METHODS, trials=1)
    if name == "abstention_sweep":
        return ExperimentSpec(name, ScenarioConfig(d=3, n_obs=100, n=30), methods=(), trials=200,
                              test_size=2000, thresholds=tuple(np.round(np.linspace(0.0, 4.0, 41), 10)))
    raise DomainError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")


@dataclass
class TrialRecord:
    trial: int
    seed: int
    noise: str
    d: int
    method: str
    k: int | None = None
    covered: bool | None = None
    votes: int | None = None
    widths: tuple = ()
    nodes: int = 0
    status: str = "ok"
    metrics: dict = field(default_factory=dict)
    solve_time: float = 0.0

    def row(self) -> dict:
        out = {"trial": self.trial, "seed": self.seed, "noise": self.noise, "d": self.d,
               "method": self.method, "k": self.k, "covered": self.covered, "votes": self.votes,
               "widths": self.widths, "nodes": self.nodes, "status": self.status}
        out.update(self.metrics)
        return out


BASE_COLUMNS = ("trial", "seed", "noise", "d", "method", "k", "covered", "votes", "widths", "nodes", "status")


def trial_seeds(master: int, trial: int) -> tuple[int, ...]:
    """(record seed, theta seed, data seed, split seed, aux seed) for one trial."""
    words = np.random.SeedSequence([master, trial]).generate_state(5, dtype=np.uint32)
    return tuple(int(w) for w in words)


def _scenario_for(spec: ExperimentSpec, noise: str, d: int, seeds, **over) -> ScenarioConfig:
    cfg = replace(spec.scenario, noise=NoiseKind.parse(noise), d=d, theta_seed=seeds[1], data_seed=seeds[2])
    return replace(cfg, **over) if over else cfg


# -- per-trial work ----------------------------------------------------------------

def _trial_coverage(spec, idx, seeds):
    out = []
    for noise, d in spec.settings():
        sc = sample_scenario(_scenario_for(spec, noise, d, seeds))
        cal = split_calibrate(sc.labelled, spec.alpha, spec.split_fraction, seed=seeds[3])
        lower, upper = cal.bands(sc.unlabelled.inputs)
        votes = count_votes(sc.unlabelled.inputs, lower, upper, sc.theta_star)
        for method in spec.methods:
            sel = select_k(method, n=sc.unlabelled.n, n_cal=cal.n_cal, alpha=spec.alpha, beta=spec.beta,
                           noise=spec.noise, delta=spec.delta, seed=seeds[4], refined=spec.pac_refined)
            out.append(TrialRecord(idx, seeds[0], noise, d, method, sel.k, votes >= sel.k, votes))
    return out


def _trial_widths(spec, idx, seeds):
    out = []
    for noise, d in spec.settings():
        sc = sample_scenario(_scenario_for(spec, noise, d, seeds))
        cal = split_calibrate(sc.labelled, spec.alpha, spec.split_fraction, seed=seeds[3])
        ivs = intervals_for(cal, sc.unlabelled)
        lower, upper = cal.bands(sc.unlabelled.inputs)
        votes = count_votes(sc.unlabelled.inputs, lower, upper, sc.theta_star)
        for method in spec.methods:
            sel = select_k(method, n=sc.unlabelled.n, n_cal=cal.n_cal, alpha=spec.alpha, beta=spec.beta,
                           noise=spec.noise, delta=spec.delta, seed=seeds[4], refined=spec.pac_refined)
            region = build_region(ivs, sc.unlabelled, sel, spec.box)
            t0 = time.perf_counter()
            status, widths = "ok", ()
            try:
                cis = coordinate_intervals(region, spec.node_limit)
                widths = tuple(ci.width for ci in cis)
                if not all(ci.finite for ci in cis):
                    status = "clamped"
            except EmptyRegionError:
                status = "empty"
            except IndeterminateError:
                status = "indeterminate"
            rec = TrialRecord(idx, seeds[0], noise, d, method, sel.k, votes >= sel.k, votes, widths,
                              status=status, solve_time=time.perf_counter() - t0)
            out.append(rec)
    return out


def _trial_rejection(spec, idx, seeds):
    out = []
    for noise, d in spec.settings():
        for setting, nonlinear in (("sine", True), ("linear", False)):
            sc = sample_scenario(_scenario_for(spec, noise, d, seeds, nonlinear=nonlinear))
            cal = split_calibrate(sc.labelled, spec.alpha, spec.split_fraction, seed=seeds[3],
                                  features=augmented_features)
            ivs = intervals_for(cal, sc.unlabelled)
            lower, upper = cal.bands(sc.unlabelled.inputs)
            votes = count_votes(sc.unlabelled.inputs, lower, upper, sc.theta_star)
            for method in spec.methods:
                sel = select_k(method, n=sc.unlabelled.n, n_cal=cal.n_cal, alpha=spec.alpha,
                               beta=spec.beta, noise=spec.noise, delta=spec.delta, seed=seeds[4],
                               refined=spec.pac_refined)
                region = build_region(ivs, sc.unlabelled, sel, spec.box)
                t0 = time.perf_counter()
                res = is_empty(region, spec.node_limit)
                rejected = "" if res.empty is None else int(res.empty)
                out.append(TrialRecord(idx, seeds[0], noise, d, method, sel.k, votes >= sel.k, votes,
                                       nodes=res.node_count, status=res.status,
                                       metrics={"setting": setting, "rejected": rejected},
                                       solve_time=time.perf_counter() - t0))
    return out


def _trial_noise_free(spec, idx, seeds):
    out = []
    sizes = spec.train_sizes or (int(round(spec.scenario.n_obs * spec.split_fraction)),)
    for noise, d in spec.settings():
        for n_train in sizes:
            n_obs = int(round(n_train / spec.split_fraction))
            sc = sample_scenario(_scenario_for(spec, noise, d, seeds, n_obs=n_obs))
            cal = split_calibrate(sc.labelled, spec.alpha, spec.split_fraction, seed=seeds[3])
            test, clean = sc.draw_labelled(spec.test_size, make_rng(seeds[4]))
            lower, upper = cal.bands(test.inputs)
            cov_y = float(np.mean((lower <= test.outputs) & (test.outputs <= upper)))
            cov_f = float(np.mean((lower <= clean) & (clean <= upper)))
            out.append(TrialRecord(idx, seeds[0], noise, d, "split_cp",
                                   metrics={"train_size": n_train, "cov_noisy": cov_y,
                                            "cov_noise_free": cov_f, "loss": int(cov_y > cov_f)}))
    return out


def _trial_abstention(spec, idx, seeds):
    out = []
    for noise, d in spec.settings():
        sc = sample_scenario(_scenario_for(spec, noise, d, seeds))
        cal = split_calibrate(sc.labelled, spec.alpha, spec.split_fraction, seed=seeds[3])
        test, clean = sc.draw_labelled(spec.test_size, make_rng(seeds[4]))
        rate = error_bound_check(cal, spec.noise, test, clean)
        out.append(TrialRecord(idx, seeds[0], noise, d, "split_cp",
                               metrics={"rate": rate, "bound": abstention_bound(spec.alpha, spec.noise)}))
    return out


_TRIAL_FNS = {
    "coverage_table": _trial_coverage,
    "width_table": _trial_widths,
    "rejection_test": _trial_rejection,
    "noise_free_vs_noisy": _trial_noise_free,
    "abstention_sweep": _trial_abstention,
}


def run_trial(spec: ExperimentSpec, idx: int) -> list[TrialRecord]:
    """One trial; module errors are recorded in ``status`` rather than raised."""
    seeds = trial_seeds(spec.seed, idx)
    try:
        return _TRIAL_FNS[spec.name](spec, idx, seeds)
    except CCRError as exc:
        return [TrialRecord(idx, seeds[0], "", 0, "", status=f"error:{type(exc).__name__}")]


def _run_chunk(args):
    spec_doc, indices, backend = args
    if kernels.BACKEND != backend:
        kernels.use_backend(backend)
    spec = ExperimentSpec.from_dict(spec_doc)
    return [rec for i in indices for rec in run_trial(spec, i)]


def run_trials(spec: ExperimentSpec) -> list[TrialRecord]:
    indices = list(range(spec.trials))
    if spec.workers == 1:
        records = [rec for i in indices for rec in run_trial(spec, i)]
    else:
        chunks = [indices[w::spec.workers] for w in range(spec.workers)]
        doc = spec.to_dict()
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            parts = pool.map(_run_chunk, [(doc, c, kernels.BACKEND) for c in chunks if c])
            records = [rec for part in parts for rec in part]
    order = {m: i for i, m in enumerate(spec.methods)}
    records.sort(key=lambda r: (r.trial, r.d, r.noise, str(r.metrics.get("setting", "")),
                                r.metrics.get("train_size", 0), order.get(r.method, -1)))
    return records


# -- serialisation -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, tuple):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _columns(rows) -> list[str]:
    extra = sorted({k for r in rows for k in r} - set(BASE_COLUMNS))
    return list(BASE_COLUMNS) + extra


def trials_csv_text(records) -> str:
    rows = [r.row() for r in records]
    cols = _columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _parse(col: str, text: str):
    if text == "":
        return None
    if col == "widths":
        return tuple(float(x) for x in text.split(";"))
    if col in ("trial", "seed", "d", "k", "votes", "nodes", "train_size", "loss", "rejected"):
        return int(text)
    if col == "covered":
        return bool(int(text))
    if col in ("noise", "method", "status", "setting"):
        return text
    return float(text)


def read_trials(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse(k, v) for k, v in row.items()} for row in reader]


def _write_rows(path, rows) -> None:
    cols = list(rows[0].keys()) if rows else []
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])


# -- summaries ---------------------------------------------------------------------

def _se(p: float, m: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / m) if m else math.nan


def _mean(xs) -> float:
    xs = list(xs)
    return float(np.mean(xs)) if xs else math.nan


def summarize(name: str, rows: list[dict], box: float = 100.0) -> list[dict]:
    """Aggregate trial rows (from :meth:`TrialRecord.row` or :func:`read_trials`)."""
    groups = defaultdict(list)
    for r in rows:
        if str(r.get("status", "")).startswith("error"):
            continue
        key = (r["noise"], r["d"], r["method"], r.get("setting"), r.get("train_size"))
        groups[key].append(r)
    out = []
    for (noise, d, method, setting, train), rs in groups.items():
        m = len(rs)
        row = {"noise": noise, "d": d, "method": method}
        if name == "coverage_table":
            p = _mean(float(r["covered"]) for r in rs)
            row.update(trials=m, coverage=p, se=_se(p, m), mean_k=_mean(r["k"] for r in rs))
        elif name == "width_table":
            finite = [r for r in rs if r["status"] == "ok"]
            boxed = [_mean(min(w, 2 * box) for w in r["widths"]) for r in rs if r["widths"]]
            p = _mean(float(r["covered"]) for r in rs)
            row.update(trials=m, mean_k=_mean(r["k"] for r in rs),
                       mean_width=_mean(_mean(r["widths"]) for r in finite),
                       mean_width_boxed=_mean(boxed),
                       clamp_rate=sum(r["status"] == "clamped" for r in rs) / m,
                       empty_rate=sum(r["status"] == "empty" for r in rs) / m,
                       indeterminate_rate=sum(r["status"] == "indeterminate" for r in rs) / m,
                       coverage=p)
        elif name == "rejection_test":
            decided = [r for r in rs if r["rejected"] is not None]
            p = _mean(float(r["rejected"]) for r in decided)
            row.update(setting=setting, trials=m, rejection_rate=p, se=_se(p, len(decided)),
                       indeterminate_rate=(m - len(decided)) / m, mean_k=_mean(r["k"] for r in rs),
                       mean_nodes=_mean(r["nodes"] for r in rs))
        elif name == "noise_free_vs_noisy":
            row.update(train_size=train, trials=m,
                       mean_cov_noisy=_mean(r["cov_noisy"] for r in rs),
                       mean_cov_noise_free=_mean(r["cov_noise_free"] for r in rs),
                       losses=sum(r["loss"] for r in rs))
        elif name == "abstention_sweep":
            rates = [r["rate"] for r in rs]
            row.update(trials=m, bound=rs[0]["bound"], mean_rate=_mean(rates),
                       se=float(np.std(rates, ddof=1) / math.sqrt(m)) if m > 1 else math.nan)
        out.append(row)
    return out


def timing_summary(records) -> list[dict]:
    """Mean wall-clock solve time per (noise, d, method); kept apart from the deterministic summary."""
    groups = defaultdict(list)
    for r in records:
        if r.solve_time:
            groups[(r.noise, r.d, r.method)].append(r.solve_time)
    return [{"noise": nz, "d": d, "method": m, "trials": len(ts), "mean_solve_time": _mean(ts)}
            for (nz, d, m), ts in groups.items()]


def _check_failures(spec: ExperimentSpec, records) -> None:
    trials_with_error = {r.trial for r in records if r.status.startswith("error")}
    if len(trials_with_error) > MAX_ERROR_RATE * spec.trials:
        raise ExperimentFailure(f"{len(trials_with_error)} of {spec.trials} trials failed")
    if spec.name == "rejection_test":
        solved = [r for r in records if not r.status.startswith("error")]
        indet = sum(r.status == "indeterminate" for r in solved)
        if solved and indet > MAX_INDETERMINATE_RATE * len(solved):
            raise ExperimentFailure(f"{indet} of {len(solved)} emptiness checks were indeterminate")


# -- entry points ------------------------------------------------------------------

@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list
    summary: list
    files: dict = field(default_factory=dict)


def _write_meta(spec: ExperimentSpec, out: Path) -> Path:
    meta = {"experiment": spec.to_dict(), "version": __version__, "backend": kernels.BACKEND}
    path = out / "meta.json"
    path.write_text(json.dumps(meta, indent=1, sort_keys=True))
    return path


def _finish(spec: ExperimentSpec, records, emit: str = "csv") -> ExperimentResult:
    summary = summarize(spec.name, [r.row() for r in records], spec.box)
    res = ExperimentResult(spec, records, summary)
    if spec.out is not None:
        out = Path(spec.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials.csv").write_text(trials_csv_text(records))
        res.files["trials"] = out / "trials.csv"
        if emit == "json":
            (out / "summary.json").write_text(json.dumps(summary, indent=1, default=float))
            res.files["summary"] = out / "summary.json"
        else:
            _write_rows(out / "summary.csv", summary)
            res.files["summary"] = out / "summary.csv"
        timed = [{"trial": r.trial, "noise": r.noise, "d": r.d, "method": r.method,
                  "solve_time": r.solve_time} for r in records if r.solve_time]
        if timed:
            _write_rows(out / "timings.csv", timed)
            res.files["timings"] = out / "timings.csv"
            _write_rows(out / "timing_summary.csv", timing_summary(records))
            res.files["timing_summary"] = out / "timing_summary.csv"
        res.files["meta"] = _write_meta(spec, out)
    _check_failures(spec, records)
    return res


def run_coverage_table(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    return _finish(spec, run_trials(spec), emit)


def run_width_table(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    return _finish(spec, run_trials(spec), emit)


def run_rejection_test(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    return _finish(spec, run_trials(spec), emit)


def run_noise_free_vs_noisy(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    return _finish(spec, run_trials(spec), emit)


def run_coverage_curve(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    """Guaranteed coverage against k for each method, plus the PAC delta sweep.

    ``curve.csv`` columns: method, k, coverage.  ``pac_delta.csv`` columns:
    delta (or ``H`` for the split bound), k, coverage.
    """
    n = spec.scenario.n
    n_cal = spec.scenario.n_obs - int(round(spec.split_fraction * spec.scenario.n_obs))
    rows = coverage_curve(n, n_cal, spec.alpha, spec.noise, spec.methods, spec.delta, spec.pac_refined)
    pac_rows = pac_delta_curve(n, n_cal, spec.alpha, spec.noise, spec.deltas, spec.pac_refined)
    summary = [{"method": m, "k": k, "coverage": c} for m, k, c in rows]
    res = ExperimentResult(spec, [], summary)
    if spec.out is not None:
        out = Path(spec.out)
        out.mkdir(parents=True, exist_ok=True)
        write_curve_csv(rows, out / "curve.csv")
        write_curve_csv(pac_rows, out / "pac_delta.csv", header=("delta", "k", "coverage"))
        if emit == "json":
            (out / "summary.json").write_text(json.dumps(summary, indent=1))
            res.files["summary"] = out / "summary.json"
        else:
            _write_rows(out / "summary.csv", summary)
            res.files["summary"] = out / "summary.csv"
        res.files.update(curve=out / "curve.csv", pac_delta=out / "pac_delta.csv",
                         meta=_write_meta(spec, out))
    return res


def run_abstention_sweep(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    """Error-bound check per trial on the linear scenario plus the sine-model sweep.

    ``sweep.csv`` columns: threshold, rejection_rate, mse_accepted.
    """
    res = _finish(spec, run_trials(spec), emit)
    thresholds = spec.thresholds or tuple(np.linspace(0.0, 4.0, 41))
    rows = abstention_sweep(thresholds, repetitions=min(spec.trials, 50), alpha=spec.alpha, seed=spec.seed)
    if spec.out is not None:
        write_sweep_csv(rows, Path(spec.out) / "sweep.csv")
        res.files["sweep"] = Path(spec.out) / "sweep.csv"
    return res


RUNNERS = {
    "coverage_table": run_coverage_table,
    "width_table": run_width_table,
    "rejection_test": run_rejection_test,
    "noise_free_vs_noisy": run_noise_free_vs_noisy,
    "coverage_curve": run_coverage_curve,
    "abstention_sweep": run_abstention_sweep,
}


def run_experiment(spec: ExperimentSpec, emit: str = "csv") -> ExperimentResult:
    return RUNNERS[spec.name](spec, emit)
