"""Small dense MILP solver: bounded-variable primal simplex + branch-and-bound.

Variables are ``d`` bounded continuous variables followed by ``n`` binaries.
The simplex inner loop lives in :mod:`ccregion.kernels`.
"""
from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .exceptions import DimensionError, DomainError

RELATIONS = ("<=", ">=", "=")


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    integrality: float = 1e-7
    pruning: float = 1e-9
    pivot: float = 1e-9
    optimality: float = 1e-9
    lp_residual: float = 1e-9


TOL = Tolerances()


@dataclass(frozen=True)
class MilpProblem:
    """min/max c^T z subject to rows ``A z (rel) rhs``, z = (continuous, binary)."""
    objective: np.ndarray
    sense: str
    lower: np.ndarray
    upper: np.ndarray
    n_binary: int
    A: np.ndarray
    relations: tuple
    rhs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=np.float64)
        lo = np.asarray(self.lower, dtype=np.float64)
        up = np.asarray(self.upper, dtype=np.float64)
        A = np.asarray(self.A, dtype=np.float64).reshape(-1, c.size)
        rhs = np.asarray(self.rhs, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "relations", tuple(self.relations))
        if self.sense not in ("min", "max"):
            raise DomainError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if lo.size != up.size or lo.size + self.n_binary != c.size:
            raise DimensionError("objective length must equal continuous + binary variable count")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise DomainError("continuous variables need finite bounds")
        if np.any(lo > up):
            raise DomainError("a lower bound exceeds its upper bound")
        if A.shape[0] != rhs.size or len(self.relations) != rhs.size:
            raise DimensionError("constraint rows, relations and rhs disagree in length")
        if any(r not in RELATIONS for r in self.relations):
            raise DomainError(f"relations must be in {RELATIONS}")

    @property
    def n_continuous(self) -> int:
        return self.lower.size

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def variable_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([self.lower, np.zeros(self.n_binary)])
        up = np.concatenate([self.upper, np.ones(self.n_binary)])
        return lo, up


@dataclass
class LpResult:
    status: str
    value: float
    x: np.ndarray | None
    iterations: int = 0
    # final simplex state, reusable as a warm start: (basis, state, T, beta, dj, z)
    warm: tuple | None = field(default=None, repr=False)


@dataclass
class MilpSolution:
    status: str
    value: float
    assignment: np.ndarray | None
    node_count: int
    bound_gap: float
    lp_iterations: int = 0
    root_bound: float = math.nan


class _LpModel:
    """Equality form [A | S] z' = rhs with slacks, reused across node solves."""

    def __init__(self, A, relations, rhs):
        m, nv = A.shape
        slack_rows = [i for i, r in enumerate(relations) if r != "="]
        S = np.zeros((m, len(slack_rows)))
        for col, i in enumerate(slack_rows):
            S[i, col] = 1.0 if relations[i] == "<=" else -1.0
        self.m = m
        self.nv = nv
        self.ns = len(slack_rows)
        self.A = np.hstack([A, S])
        self.full = np.hstack([self.A, np.eye(m)])
        self.rhs = rhs.astype(np.float64)
        self.rhs_scale = 1.0 + (float(np.max(np.abs(rhs))) if rhs.size else 0.0)

    def solve(self, c, lo, up, tol: Tolerances = TOL) -> LpResult:
        m, nv, ns = self.m, self.nv, self.ns
        ntot = nv + ns
        if np.any(lo > up + tol.feasibility):
            return LpResult("infeasible", math.nan, None)
        if m == 0:
            x = np.where(c >= 0, lo, up)
            return LpResult("optimal", float(c @ x), x)
        lo_all = np.concatenate([lo, np.zeros(ns), np.zeros(m)])
        up_all = np.concatenate([up, np.full(ns, np.inf), np.full(m, np.inf)])
        start = lo_all[:ntot]
        resid = self.rhs - self.A @ start
        sign = np.where(resid >= 0.0, 1.0, -1.0)
        T = np.ascontiguousarray(np.hstack([sign[:, None] * self.A, np.eye(m)]))
        beta = np.abs(resid)
        basis = np.arange(ntot, ntot + m, dtype=np.int64)
        state = np.full(ntot + m, kernels.AT_LOWER, dtype=np.int8)
        state[ntot:] = kernels.BASIC
        cols = ntot + m
        max_iter = 50 * (cols + m) + 1000
        bland_after = 10 * (cols + m)

        # phase 1: drive the artificials to zero
        dj = -T.sum(axis=0)
        dj[ntot:] = 0.0
        status, it1, bland = kernels.simplex_iterate(
            T, beta, dj, basis, state, lo_all, up_all, tol.pivot, tol.optimality,
            max_iter, bland_after, False)
        if status != kernels.OPTIMAL:
            return LpResult("iteration_limit", math.nan, None, it1)
        infeas = float(np.sum(beta[basis >= ntot]))
        if infeas > tol.feasibility * self.rhs_scale:
            return LpResult("infeasible", math.nan, None, it1)

        # phase 2: artificials pinned at zero
        up_all[ntot:] = 0.0
        cost = np.concatenate([c, np.zeros(ns + m)])
        dj = cost - cost[basis] @ T
        dj[basis] = 0.0
        status, it2, _ = kernels.simplex_iterate(
            T, beta, dj, basis, state, lo_all, up_all, tol.pivot, tol.optimality,
            max_iter, bland_after, bland)
        if status == kernels.UNBOUNDED:
            return LpResult("unbounded", -math.inf, None, it1 + it2)
        if status != kernels.OPTIMAL:
            return LpResult("iteration_limit", math.nan, None, it1 + it2)

        return self._result(c, lo, up, lo_all, up_all, T, beta, dj, basis, state, sign, it1 + it2)

    def _result(self, c, lo, up, lo_all, up_all, T, beta, dj, basis, state, sign, iterations,
                polish=True):
        z = np.where(state == kernels.AT_UPPER, up_all, lo_all)
        z[basis] = 0.0
        warm = (basis, state, T, beta, dj, z)
        z = z.copy()
        z[basis] = beta
        if polish:
            z = self._polish(z, basis, sign)
        x = np.clip(z[:self.nv], lo, up)
        return LpResult("optimal", float(c @ x), x, iterations, warm)

    def solve_from(self, c, lo, up, warm, tol: Tolerances = TOL) -> LpResult:
        """Re-solve after bound changes, starting from a previously optimal basis.

        ``warm`` is the ``warm`` field of an earlier result, or just its
        ``(basis, state)`` pair, in which case the basis is refactorised.
        Primal feasibility is restored with the dual simplex and the primal
        simplex finishes.  Falls back to :meth:`solve` when the warm start
        cannot be used.  Basic values are not polished.
        """
        m, ns = self.m, self.ns
        ntot = self.nv + ns
        if m == 0 or warm is None or np.any(lo > up + tol.feasibility):
            return self.solve(c, lo, up, tol)
        lo_all = np.concatenate([lo, np.zeros(ns + m)])
        up_all = np.concatenate([up, np.full(ns, np.inf), np.zeros(m)])
        basis = warm[0].copy()
        state = warm[1].copy()
        z = np.where(state == kernels.AT_UPPER, up_all, lo_all)
        z[basis] = 0.0
        if len(warm) > 2:
            T = warm[2].copy()
            dj = warm[4].copy()
            beta = warm[3] - T @ (z - warm[5])
        else:
            try:
                sol = np.linalg.solve(self.full[:, basis], np.column_stack([self.full, self.rhs]))
            except np.linalg.LinAlgError:
                return self.solve(c, lo, up, tol)
            if not np.all(np.isfinite(sol)):
                return self.solve(c, lo, up, tol)
            T = np.ascontiguousarray(sol[:, :-1])
            beta = sol[:, -1] - T @ z
            cost = np.concatenate([c, np.zeros(ns + m)])
            dj = cost - cost[basis] @ T
            dj[basis] = 0.0
        cols = ntot + m
        max_iter = 50 * (cols + m) + 1000
        status, it1 = kernels.dual_simplex_iterate(
            T, beta, dj, basis, state, lo_all, up_all, tol.pivot, 1e-9, max_iter)
        if status == kernels.INFEASIBLE:
            return LpResult("infeasible", math.nan, None, it1)
        if status != kernels.OPTIMAL:
            return self.solve(c, lo, up, tol)
        status, it2, _ = kernels.simplex_iterate(
            T, beta, dj, basis, state, lo_all, up_all, tol.pivot, tol.optimality,
            max_iter, 10 * (cols + m), False)
        if status != kernels.OPTIMAL:
            return self.solve(c, lo, up, tol)
        return self._result(c, lo, up, lo_all, up_all, T, beta, dj, basis, state, None,
                            it1 + it2, polish=False)

    def _polish(self, z, basis, sign):
        # recompute basic values from the original rows to shed pivoting drift
        full = np.hstack([self.A, np.diag(sign)])
        nonbasic = np.ones(full.shape[1], dtype=bool)
        nonbasic[basis] = False
        rhs = self.rhs - full[:, nonbasic] @ z[nonbasic]
        try:
            zb = np.linalg.solve(full[:, basis], rhs)
        except np.linalg.LinAlgError:
            return z
        if np.all(np.isfinite(zb)) and np.max(np.abs(zb - z[basis])) < 1e-6 * (1.0 + np.max(np.abs(zb))):
            z = z.copy()
            z[basis] = zb
        return z


def _internal_cost(problem: MilpProblem) -> np.ndarray:
    return problem.objective if problem.sense == "min" else -problem.objective


def solve_lp(problem: MilpProblem, lower=None, upper=None, tol: Tolerances = TOL) -> LpResult:
    """LP relaxation (binaries relaxed to [0, 1], or the given variable bounds)."""
    lo, up = problem.variable_bounds()
    if lower is not None:
        lo = np.asarray(lower, dtype=np.float64)
    if upper is not None:
        up = np.asarray(upper, dtype=np.float64)
    model = _LpModel(problem.A, problem.relations, problem.rhs)
    res = model.solve(_internal_cost(problem), lo, up, tol)
    if res.status == "optimal" and problem.sense == "max":
        res.value = -res.value
    return res


def constraint_violation(problem: MilpProblem, x) -> float:
    """Largest violation of rows and bounds, scaled by 1 + |rhs|."""
    x = np.asarray(x, dtype=np.float64)
    lo, up = problem.variable_bounds()
    worst = float(max(np.max(lo - x, initial=0.0), np.max(x - up, initial=0.0)))
    if problem.rhs.size:
        lhs = problem.A @ x
        scale = 1.0 + np.abs(problem.rhs)
        for rel, a, b, s in zip(problem.relations, lhs, problem.rhs, scale):
            v = (a - b) if rel == "<=" else (b - a) if rel == ">=" else abs(a - b)
            worst = max(worst, v / s)
    return worst


def verify_exact(problem: MilpProblem, x, tol: float = TOL.feasibility) -> bool:
    """Check rows, bounds and integrality in exact rational arithmetic."""
    xs = [Fraction(float(v)) for v in x]
    lo, up = problem.variable_bounds()
    tol_q = Fraction(tol)
    for j, v in enumerate(xs):
        if v < Fraction(float(lo[j])) - tol_q or v > Fraction(float(up[j])) + tol_q:
            return False
    for j in range(problem.n_continuous, problem.n_vars):
        if xs[j] not in (0, 1):
            return False
    for row, rel, b in zip(problem.A, problem.relations, problem.rhs):
        lhs = sum((Fraction(float(a)) * v for a, v in zip(row, xs) if a != 0.0), Fraction(0))
        rhs = Fraction(float(b))
        slack = tol_q * (1 + abs(rhs))
        if rel == "<=" and lhs > rhs + slack:
            return False
        if rel == ">=" and lhs < rhs - slack:
            return False
        if rel == "=" and abs(lhs - rhs) > slack:
            return False
    return True


WARM_TABLEAU_CAP = 2000


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lo: np.ndarray = field(compare=False)
    up: np.ndarray = field(compare=False)
    depth: int = field(compare=False, default=0)
    warm: tuple | None = field(compare=False, default=None)


def solve_milp(problem: MilpProblem, node_limit: int = 200_000, tol: Tolerances = TOL,
               heuristic=None, cutoff: float | None = None) -> MilpSolution:
    """Branch-and-bound over the binaries.

    Depth-first plunge (up-branch first) until an incumbent exists, then
    best-bound selection.  Branches on the most fractional binary, ties to the
    lowest index.  Every incumbent is re-solved with its binaries fixed and
    re-verified in exact arithmetic before it is accepted.

    ``heuristic(x)`` may map a fractional LP point to a 0/1 vector for the
    binaries; each distinct pattern is tried once as an incumbent candidate.

    With ``cutoff`` only solutions strictly better than that objective value
    are sought; if none exists the status is ``"cutoff"``.
    """
    c = _internal_cost(problem)
    sign = 1.0 if problem.sense == "min" else -1.0
    model = _LpModel(problem.A, problem.relations, problem.rhs)
    d = problem.n_continuous
    lo0, up0 = problem.variable_bounds()

    incumbent = None
    inc_val = math.inf if cutoff is None else sign * cutoff
    nodes = 0
    lp_iters = 0
    seq = 0
    stack = [_Node(-math.inf, seq, lo0, up0)]
    heap: list[_Node] = []
    root_bound = math.nan

    tried: set = set()

    def try_pattern(rounded, lo, up):
        nonlocal lp_iters
        key = rounded.tobytes()
        if key in tried:
            return
        tried.add(key)
        lo_f, up_f = lo.copy(), up.copy()
        lo_f[d:] = np.maximum(lo[d:], rounded)
        up_f[d:] = np.minimum(up[d:], rounded)
        if np.any(lo_f[d:] != rounded) or np.any(up_f[d:] != rounded):
            return
        pol = model.solve(c, lo_f, up_f, tol)
        lp_iters += pol.iterations
        if pol.status == "optimal":
            x = pol.x.copy()
            x[d:] = rounded
            accept(x, pol.value)

    def accept(x, value):
        nonlocal incumbent, inc_val
        if value < inc_val - tol.pruning and verify_exact(problem, x, tol.feasibility):
            incumbent, inc_val = x, value
            return True
        return False

    while stack or heap:
        if nodes >= node_limit:
            break
        node = stack.pop() if incumbent is None and stack else None
        if node is None:
            if stack:
                for s in stack:
                    heapq.heappush(heap, s)
                stack = []
            node = heapq.heappop(heap)
        if node.bound >= inc_val - tol.pruning:
            continue
        res = model.solve_from(c, node.lo, node.up, node.warm, tol)
        nodes += 1
        lp_iters += res.iterations
        if res.status == "iteration_limit":
            raise RuntimeError("simplex iteration limit reached inside branch-and-bound")
        if res.status != "optimal":
            if nodes == 1:
                root_bound = math.inf
            continue
        if nodes == 1:
            root_bound = res.value
        if res.value >= inc_val - tol.pruning:
            continue
        xb = res.x[d:]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        frac = np.where(np.abs(xb - np.round(xb)) <= tol.integrality, 0.0, frac)
        if not np.any(frac > 0.0):
            rounded = np.round(xb)
            before = inc_val
            try_pattern(rounded, node.lo, node.up)
            if inc_val == before:
                x = res.x.copy()
                x[d:] = rounded
                accept(x, float(c @ x))
            continue
        if heuristic is not None:
            guess = heuristic(res.x)
            if guess is not None:
                try_pattern(np.asarray(guess, dtype=np.float64), lo0, up0)
                if res.value >= inc_val - tol.pruning:
                    continue
        j = int(np.argmax(frac))
        down_lo, down_up = node.lo.copy(), node.up.copy()
        down_up[d + j] = 0.0
        up_lo, up_up = node.lo.copy(), node.up.copy()
        up_lo[d + j] = 1.0
        seq += 1
        # full tableaux are shared by both children; past the cap only the basis is kept
        warm = res.warm if len(heap) < WARM_TABLEAU_CAP else res.warm[:2]
        down = _Node(res.value, seq, down_lo, down_up, node.depth + 1, warm)
        seq += 1
        up = _Node(res.value, seq, up_lo, up_up, node.depth + 1, warm)
        if incumbent is None:
            stack.append(down)
            stack.append(up)
        else:
            heapq.heappush(heap, down)
            heapq.heappush(heap, up)

    open_nodes = [n for n in stack + heap if n.bound < inc_val - tol.pruning]
    exhausted = not open_nodes
    if exhausted:
        if incumbent is None:
            status = "infeasible" if cutoff is None else "cutoff"
            return MilpSolution(status, math.nan, None, nodes, 0.0, lp_iters, sign * root_bound)
        return MilpSolution("optimal", sign * inc_val, incumbent, nodes, 0.0, lp_iters, sign * root_bound)
    best_open = min(n.bound for n in open_nodes)
    gap = inc_val - best_open if incumbent is not None else math.inf
    value = sign * inc_val if incumbent is not None else math.nan
    return MilpSolution("node_limit", value, incumbent, nodes, gap, lp_iters, sign * root_bound)


# -- LP text format ----------------------------------------------------------------

def _var_names(problem: MilpProblem) -> list[str]:
    return [f"x{j}" for j in range(problem.n_continuous)] + [f"a{i}" for i in range(problem.n_binary)]


def _expr(coefs, names) -> str:
    parts = []
    for a, name in zip(coefs, names):
        if a == 0.0:
            continue
        parts.append(f"{'-' if a < 0 else '+'} {float(abs(a))!r} {name}")
    return " ".join(parts) if parts else "0 x0"


def to_lp_text(problem: MilpProblem) -> str:
    """CPLEX-style LP text; coefficients are written with ``repr`` so they round-trip exactly."""
    names = _var_names(problem)
    lines = ["\\ ccregion MILP", "Maximize" if problem.sense == "max" else "Minimize",
             f" obj: {_expr(problem.objective, names)}", "Subject To"]
    for i, (row, rel, b) in enumerate(zip(problem.A, problem.relations, problem.rhs)):
        lines.append(f" c{i}: {_expr(row, names)} {rel} {float(b)!r}")
    lines.append("Bounds")
    for j in range(problem.n_continuous):
        lines.append(f" {float(problem.lower[j])!r} <= x{j} <= {float(problem.upper[j])!r}")
    lines.append("Binaries")
    if problem.n_binary:
        lines.append(" " + " ".join(names[problem.n_continuous:]))
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM = re.compile(r"([+-])\s*([0-9.eE+\-]+|inf|nan)\s+([xa]\d+)")


def _parse_expr(text, index, width):
    row = np.zeros(width)
    for sgn, val, name in _TERM.findall(text):
        v = float(val)
        row[index[name]] = -v if sgn == "-" else v
    return row


def from_lp_text(text: str) -> MilpProblem:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("\\")]
    sense = "max" if lines[0].lower().startswith("max") else "min"
    sections: dict[str, list[str]] = {}
    current = None
    for ln in lines[1:]:
        key = ln.lower()
        if key in ("subject to", "bounds", "binaries", "end"):
            current = key
            sections[current] = []
            continue
        if current is None:
            sections.setdefault("objective", []).append(ln)
        else:
            sections[current].append(ln)
    bounds = sections.get("bounds", [])
    binaries = " ".join(sections.get("binaries", [])).split()
    d = len(bounds)
    n = len(binaries)
    names = [f"x{j}" for j in range(d)] + [f"a{i}" for i in range(n)]
    index = {name: i for i, name in enumerate(names)}
    obj_text = " ".join(sections.get("objective", [])).split(":", 1)[1]
    objective = _parse_expr(obj_text, index, d + n)
    rows, rels, rhs = [], [], []
    for ln in sections.get("subject to", []):
        body = ln.split(":", 1)[1]
        m = re.match(r"(.*)\s(<=|>=|=)\s*(\S+)$", body)
        if m is None:
            raise DomainError(f"cannot parse constraint line {ln!r}")
        rows.append(_parse_expr(m.group(1), index, d + n))
        rels.append(m.group(2))
        rhs.append(float(m.group(3)))
    lower = np.empty(d)
    upper = np.empty(d)
    for ln in bounds:
        lo_s, name, up_s = re.match(r"(\S+)\s*<=\s*(x\d+)\s*<=\s*(\S+)", ln).groups()
        j = index[name]
        lower[j] = float(lo_s)
        upper[j] = float(up_s)
    A = np.array(rows).reshape(len(rows), d + n)
    return MilpProblem(objective, sense, lower, upper, n, A, tuple(rels), np.array(rhs))
