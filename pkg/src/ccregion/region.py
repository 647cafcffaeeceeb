"""Voting regions Theta_k for linear models as big-M MILPs.

theta is in Theta_k when at least k of the n constraints A_i <= theta^T x_i <= B_i
hold.  Binary a_i switches constraint i on:

    A_i - M (1 - a_i) <= theta^T x_i <= B_i + M (1 - a_i),   sum_i a_i >= k.

All optimisation happens inside a finite reference box.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import milp
from .bounds import KSelection
from .conformal import PredictionInterval, UnlabelledDataset
from .exceptions import AuditError, CCRError, DimensionError, DomainError

DEFAULT_BOX = 100.0
BIG_M_SAFETY = 1.1
AUDIT_TOL = 1e-7
NODE_LIMIT = 100_000
CLAMP_EXPAND = 2.0


class EmptyRegionError(CCRError):
    """Raised when coordinate bounds are requested for an empty region."""


class IndeterminateError(CCRError):
    """The MILP hit its node limit before proving a verdict."""


@dataclass(frozen=True)
class RegionSpec:
    inputs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k: int
    big_m: float
    box_lower: np.ndarray
    box_upper: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        lo = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        up = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        blo = np.asarray(self.box_lower, dtype=np.float64).reshape(-1)
        bup = np.asarray(self.box_upper, dtype=np.float64).reshape(-1)
        for name, val in (("inputs", x), ("lower", lo), ("upper", up), ("box_lower", blo), ("box_upper", bup)):
            object.__setattr__(self, name, val)
        if x.shape[0] != lo.size or lo.size != up.size:
            raise DimensionError("inputs, lower and upper must have one entry per constraint")
        if blo.size != x.shape[1] or bup.size != x.shape[1]:
            raise DimensionError("reference box dimension must match the inputs")
        if np.any(lo > up):
            raise DomainError("every interval needs lower <= upper")
        if np.any(blo >= bup) or not (np.all(np.isfinite(blo)) and np.all(np.isfinite(bup))):
            raise DomainError("reference box must be finite with lower < upper")
        if not 0 <= self.k <= lo.size:
            raise DomainError(f"k must lie in [0, {lo.size}], got {self.k}")
        if not self.big_m > 0.0:
            raise DomainError("big_m must be positive")

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def constraints(self) -> list:
        return [(self.inputs[i], float(self.lower[i]), float(self.upper[i])) for i in range(self.n)]

    def with_k(self, k: int) -> "RegionSpec":
        return RegionSpec(self.inputs, self.lower, self.upper, k, self.big_m, self.box_lower, self.box_upper)

    def to_json(self) -> str:
        doc = {
            "k": int(self.k),
            "big_m": float(self.big_m),
            "box": {"lower": self.box_lower.tolist(), "upper": self.box_upper.tolist()},
            "constraints": [{"x": self.inputs[i].tolist(), "lower": float(self.lower[i]),
                             "upper": float(self.upper[i])} for i in range(self.n)],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RegionSpec":
        doc = json.loads(text)
        cons = doc["constraints"]
        d = len(doc["box"]["lower"])
        inputs = np.array([c["x"] for c in cons], dtype=np.float64).reshape(len(cons), d)
        return cls(inputs, [c["lower"] for c in cons], [c["upper"] for c in cons], doc["k"],
                   doc["big_m"], doc["box"]["lower"], doc["box"]["upper"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "RegionSpec":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class CoordinateInterval:
    coordinate: int
    lower: float
    upper: float

    def __post_init__(self):
        if math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower > self.upper:
            raise DomainError("coordinate interval has lower > upper")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)


@dataclass(frozen=True)
class EmptinessResult:
    empty: bool | None
    status: str  # "empty", "nonempty" or "indeterminate"
    witness: np.ndarray | None
    node_count: int


@dataclass(frozen=True)
class OptimizeResult:
    value: float
    theta: np.ndarray | None
    status: str  # "optimal", "empty", "box_clamped" or "indeterminate"
    node_count: int


def _box_abs_sup(x: np.ndarray, blo: np.ndarray, bup: np.ndarray) -> np.ndarray:
    """max over the box of |theta^T x_i| for each row."""
    hi = np.maximum(x * blo, x * bup).sum(axis=1)
    lo = np.minimum(x * blo, x * bup).sum(axis=1)
    return np.maximum(np.abs(hi), np.abs(lo))


def big_m_for(inputs, lower, upper, box_lower, box_upper) -> float:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    bound = np.maximum(np.abs(lower), np.abs(upper))
    m = float(np.max(_box_abs_sup(x, np.asarray(box_lower, float), np.asarray(box_upper, float)) + bound))
    return max(m * BIG_M_SAFETY, 1.0)


def _box_arrays(box, d):
    if box is None:
        return np.full(d, -DEFAULT_BOX), np.full(d, DEFAULT_BOX)
    if np.isscalar(box):
        return np.full(d, -float(box)), np.full(d, float(box))
    lo, up = box
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (d,)).copy()
    up = np.broadcast_to(np.asarray(up, dtype=np.float64), (d,)).copy()
    return lo, up


def build_region(intervals, inputs, selection, reference_box=None) -> RegionSpec:
    """Region from per-input prediction intervals.

    ``selection`` is a :class:`KSelection` or a plain integer k.  ``reference_box``
    is a half-width, a ``(lower, upper)`` pair, or None for [-100, 100]^d.
    """
    intervals = list(intervals)
    if not intervals:
        raise DomainError("at least one prediction interval is required")
    x = inputs.inputs if isinstance(inputs, UnlabelledDataset) else np.atleast_2d(np.asarray(inputs, float))
    if x.shape[0] != len(intervals):
        raise DimensionError(f"{len(intervals)} intervals for {x.shape[0]} inputs")
    k = selection.k if isinstance(selection, KSelection) else int(selection)
    if k > len(intervals):
        raise DomainError(f"k = {k} exceeds the number of constraints {len(intervals)}")
    lo = np.array([iv.lower if isinstance(iv, PredictionInterval) else iv[0] for iv in intervals], float)
    up = np.array([iv.upper if isinstance(iv, PredictionInterval) else iv[1] for iv in intervals], float)
    blo, bup = _box_arrays(reference_box, x.shape[1])
    return RegionSpec(x, lo, up, k, big_m_for(x, lo, up, blo, bup), blo, bup)


def region_from_bands(inputs, lower, upper, k: int, reference_box=None) -> RegionSpec:
    x = np.atleast_2d(np.asarray(inputs, float))
    lo = np.asarray(lower, float)
    up = np.asarray(upper, float)
    blo, bup = _box_arrays(reference_box, x.shape[1])
    return RegionSpec(x, lo, up, int(k), big_m_for(x, lo, up, blo, bup), blo, bup)


# -- membership ----------------------------------------------------------------------

def _exact_dot(x_row, theta_q) -> Fraction:
    return sum((Fraction(float(a)) * t for a, t in zip(x_row, theta_q)), Fraction(0))


def vote_vector(spec: RegionSpec, theta, tol: float = 0.0) -> np.ndarray:
    """Boolean votes, computed in exact rational arithmetic.

    With ``tol > 0`` each bound is relaxed by ``tol * (1 + |bound|)``.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != spec.dim:
        raise DimensionError(f"theta has dimension {theta.size}, region has {spec.dim}")
    theta_q = [Fraction(float(t)) for t in theta]
    tol_q = Fraction(tol)
    out = np.zeros(spec.n, dtype=bool)
    for i in range(spec.n):
        v = _exact_dot(spec.inputs[i], theta_q)
        a = Fraction(float(spec.lower[i]))
        b = Fraction(float(spec.upper[i]))
        out[i] = a - tol_q * (1 + abs(a)) <= v <= b + tol_q * (1 + abs(b))
    return out


def membership(spec: RegionSpec, theta, tol: float = 0.0) -> tuple[bool, int]:
    """(member, votes) with closed intervals."""
    votes = int(vote_vector(spec, theta, tol).sum())
    return votes >= spec.k, votes


def count_votes(inputs, lower, upper, theta) -> int:
    """Fast floating-point vote count for bulk Monte Carlo use."""
    v = np.atleast_2d(inputs) @ np.asarray(theta, float)
    return int(np.count_nonzero((lower <= v) & (v <= upper)))


# -- MILP encoding --------------------------------------------------------------------

def to_milp(spec: RegionSpec, objective=None, sense: str = "max", require_k: bool = True) -> milp.MilpProblem:
    """Encode the region; ``objective`` covers theta only (binaries get zero cost)."""
    d, n, M = spec.dim, spec.n, spec.big_m
    rows, rels, rhs = [], [], []
    for i in range(n):
        r = np.zeros(d + n)
        r[:d] = spec.inputs[i]
        r[d + i] = M
        rows.append(r)
        rels.append("<=")
        rhs.append(spec.upper[i] + M)
        r = np.zeros(d + n)
        r[:d] = spec.inputs[i]
        r[d + i] = -M
        rows.append(r)
        rels.append(">=")
        rhs.append(spec.lower[i] - M)
    if require_k and spec.k > 0:
        r = np.zeros(d + n)
        r[d:] = 1.0
        rows.append(r)
        rels.append(">=")
        rhs.append(float(spec.k))
    c = np.zeros(d + n)
    if objective is not None:
        c[:d] = np.asarray(objective, dtype=np.float64)
    return milp.MilpProblem(c, sense, spec.box_lower, spec.box_upper, n, np.array(rows), tuple(rels), np.array(rhs))


def to_lp_text(spec: RegionSpec, objective=None, sense: str = "max") -> str:
    return milp.to_lp_text(to_milp(spec, objective, sense))


def _vote_heuristic(spec: RegionSpec, need: int):
    """Round an LP point by counting which intervals its theta actually hits."""
    def guess(x):
        v = spec.inputs @ x[:spec.dim]
        slack = 1e-9 * (1.0 + np.maximum(np.abs(spec.lower), np.abs(spec.upper)))
        hits = (spec.lower - slack <= v) & (v <= spec.upper + slack)
        return hits.astype(np.float64) if hits.sum() >= need else None
    return guess


def _audit(spec: RegionSpec, sol: milp.MilpSolution, need: int) -> np.ndarray:
    """Recheck a solver point against the interval votes; raise if big-M misled the solver."""
    theta = sol.assignment[:spec.dim]
    active = np.round(sol.assignment[spec.dim:]).astype(bool)
    votes = vote_vector(spec, theta, AUDIT_TOL)
    if np.any(active & ~votes) or votes.sum() < need:
        raise AuditError("solver point fails the vote recount; big-M constant too small or solver fault")
    return active


def _interior_point(spec: RegionSpec, active: np.ndarray):
    """Point of the active intersection maximising the smallest interval slack."""
    idx = np.flatnonzero(active)
    d = spec.dim
    if idx.size == 0:
        return 0.5 * (spec.box_lower + spec.box_upper)
    cap = float(np.max(spec.upper[idx] - spec.lower[idx])) / 2.0 + 1.0
    rows, rels, rhs = [], [], []
    for i in idx:
        rows.append(np.append(spec.inputs[i], 1.0))
        rels.append("<=")
        rhs.append(spec.upper[i])
        rows.append(np.append(spec.inputs[i], -1.0))
        rels.append(">=")
        rhs.append(spec.lower[i])
    c = np.zeros(d + 1)
    c[d] = 1.0
    prob = milp.MilpProblem(c, "max", np.append(spec.box_lower, 0.0), np.append(spec.box_upper, cap),
                            0, np.array(rows), tuple(rels), np.array(rhs))
    res = milp.solve_lp(prob)
    return res.x[:d] if res.status == "optimal" else None


def is_empty(spec: RegionSpec, node_limit: int = NODE_LIMIT) -> EmptinessResult:
    """Decide whether Theta_k (within the box) is empty.

    Solved as a feasibility MILP with sum(a) >= k, which is equivalent to
    asking whether max sum(a) reaches k but stops at the first feasible point.
    """
    if spec.k == 0:
        centre = 0.5 * (spec.box_lower + spec.box_upper)
        return EmptinessResult(False, "nonempty", centre, 0)
    sol = milp.solve_milp(to_milp(spec), node_limit=node_limit, heuristic=_vote_heuristic(spec, spec.k))
    if sol.status == "infeasible":
        return EmptinessResult(True, "empty", None, sol.node_count)
    if sol.assignment is None:
        return EmptinessResult(None, "indeterminate", None, sol.node_count)
    active = _audit(spec, sol, spec.k)
    witness = _interior_point(spec, active)
    if witness is None or not membership(spec, witness)[0]:
        witness = sol.assignment[:spec.dim]
    return EmptinessResult(False, "nonempty", witness, sol.node_count)


def max_votes(spec: RegionSpec, node_limit: int = NODE_LIMIT) -> tuple[int, np.ndarray | None, str]:
    """Largest number of simultaneously satisfiable constraints inside the box."""
    prob = to_milp(spec, require_k=False)
    c = np.zeros(prob.n_vars)
    c[spec.dim:] = 1.0
    prob = milp.MilpProblem(c, "max", prob.lower, prob.upper, prob.n_binary, prob.A, prob.relations, prob.rhs)
    sol = milp.solve_milp(prob, node_limit=node_limit, heuristic=_vote_heuristic(spec, 0))
    if sol.assignment is None:
        return -1, None, "indeterminate"
    _audit(spec, sol, 0)
    status = "optimal" if sol.status == "optimal" else "indeterminate"
    return int(round(sol.value)), sol.assignment[:spec.dim], status


def _solve_objective(spec, c, sense, node_limit, cutoff=None):
    sol = milp.solve_milp(to_milp(spec, c, sense), node_limit=node_limit,
                           heuristic=_vote_heuristic(spec, spec.k), cutoff=cutoff)
    if sol.status in ("infeasible", "cutoff"):
        return None, sol
    if sol.status != "optimal":
        return "indeterminate", sol
    _audit(spec, sol, spec.k)
    return "optimal", sol


def optimize(spec: RegionSpec, c, sense: str = "max", node_limit: int = NODE_LIMIT) -> OptimizeResult:
    """Optimise c^T theta over Theta_k intersected with the reference box.

    The problem is re-solved in a box twice as large.  If the optimum moves,
    the reference box is what bounds the answer and the status is
    ``box_clamped``.  The re-solve is unconditional because the region is a
    union of polytopes: a piece cut off by the box in one coordinate can
    overtake an interior optimum once the box grows.
    """
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if c.size != spec.dim:
        raise DimensionError(f"cost vector has dimension {c.size}, region has {spec.dim}")
    if not np.any(c != 0.0):
        raise DomainError("cost vector must not be all zero")
    if sense not in ("min", "max"):
        raise DomainError(f"sense must be 'min' or 'max', got {sense!r}")
    status, sol = _solve_objective(spec, c, sense, node_limit)
    if status is None:
        return OptimizeResult(math.nan, None, "empty", sol.node_count)
    if status == "indeterminate":
        return OptimizeResult(math.nan, None, "indeterminate", sol.node_count)
    theta = sol.assignment[:spec.dim]
    nodes = sol.node_count
    centre = 0.5 * (spec.box_lower + spec.box_upper)
    half = 0.5 * (spec.box_upper - spec.box_lower) * CLAMP_EXPAND
    wide = region_from_bands(spec.inputs, spec.lower, spec.upper, spec.k, (centre - half, centre + half))
    # only a strictly better point in the wider box matters, so prune at the current optimum
    slack = 1e-7 * (1.0 + abs(sol.value))
    wstatus, wsol = _solve_objective(wide, c, sense, node_limit,
                                     cutoff=sol.value + slack if sense == "max" else sol.value - slack)
    nodes += wsol.node_count
    if wstatus == "indeterminate":
        return OptimizeResult(sol.value, theta, "indeterminate", nodes)
    if wstatus == "optimal":
        return OptimizeResult(sol.value, theta, "box_clamped", nodes)
    return OptimizeResult(sol.value, theta, "optimal", nodes)


def coordinate_intervals(spec: RegionSpec, node_limit: int = NODE_LIMIT) -> list[CoordinateInterval]:
    """Per-coordinate [min, max] of theta over the region; clamped ends become -inf / +inf."""
    out = []
    for j in range(spec.dim):
        e = np.zeros(spec.dim)
        e[j] = 1.0
        ends = []
        for sense in ("min", "max"):
            res = optimize(spec, e, sense, node_limit)
            if res.status == "empty":
                raise EmptyRegionError("region is empty; no coordinate bounds exist")
            if res.status == "indeterminate":
                raise IndeterminateError(f"node limit reached bounding coordinate {j}")
            if res.status == "box_clamped":
                ends.append(-math.inf if sense == "min" else math.inf)
            else:
                ends.append(res.value)
        out.append(CoordinateInterval(j, ends[0], ends[1]))
    return out
