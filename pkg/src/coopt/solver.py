"""Cooperative optimization: agents repeatedly minimize their own sub-objective
blended with the soft decisions their neighbors published one step earlier.

Three update rules are provided:

* ``basic``:      Psi_i <- min ((1 - lam) E_i + lam * sum_j w_ij Psi_j)
* ``canonical``:  Psi_i <- min (E_i + lam * sum_j w_ij Psi_j)
* ``simple``:     Psi_i <- offset(min (E_i + alpha * sum_{j in X_i} Psi_j))

where ``min`` runs over every variable of the sub-objective except ``x_i``
and ``offset`` shifts each table so its minimum is zero. All agents read the
previous snapshot only (Jacobi style), so results do not depend on the order
or the number of worker threads.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .decomposition import Decomposition
from .errors import (
    ConfigInvalid,
    ConsensusNotStable,
    DimensionMismatch,
    Disconnected,
    LambdaOutOfRange,
)
from .problem import Problem, evaluate_energy, is_connected
from .propagation import PropagationMatrix
from .schedule import LambdaSchedule, schedule_divergent, schedule_product
from .treedp import TreePlan

FORMS = ("basic", "canonical", "simple")


@dataclass(frozen=True)
class SolverConfig:
    form: str = "basic"
    schedule: LambdaSchedule = field(default_factory=lambda: LambdaSchedule.constant(0.5))
    alpha: float = 0.16
    max_iter: int = 50
    equilibrium_tol: float = 1e-9
    consensus_tol: float = 1e-9
    consensus_required_repeats: int = 3
    threads: int = 1

    def check(self) -> None:
        if self.form not in FORMS:
            raise ConfigInvalid(f"form must be one of {FORMS}, got {self.form!r}")
        if self.max_iter < 1:
            raise ConfigInvalid("max_iter must be positive")
        if self.form == "simple" and not self.alpha >= 0:
            raise ConfigInvalid("alpha must be nonnegative")
        if self.threads < 1:
            raise ConfigInvalid("threads must be positive")
        if self.consensus_required_repeats < 1:
            raise ConfigInvalid("consensus_required_repeats must be positive")

    def describe(self) -> str:
        return (
            f"form={self.form} lambda={self.schedule.describe()} alpha={self.alpha!r} "
            f"max_iter={self.max_iter} tol={self.equilibrium_tol!r} "
            f"repeats={self.consensus_required_repeats} threads={self.threads}"
        )


@dataclass(frozen=True)
class SolverState:
    """Soft decisions after iteration ``k``.

    ``raw_min[i]`` is the unshifted minimum of agent i's modified
    sub-objective, which is what consensus is measured against.
    """

    psi: tuple[np.ndarray, ...]
    k: int = 0
    raw_min: np.ndarray | None = None

    @classmethod
    def zeros(cls, p: Problem) -> "SolverState":
        return cls(tuple(np.zeros(s) for s in p.domain_sizes), 0)

    @classmethod
    def from_tables(cls, tables: Sequence[Sequence[float]]) -> "SolverState":
        return cls(tuple(np.array(t, dtype=float) for t in tables), 0)


def extract_solution(state: SolverState) -> np.ndarray:
    """Per-variable argmin; ties go to the lowest label."""
    return np.array([int(np.argmin(t)) for t in state.psi], dtype=np.int64)


def lower_bound(state: SolverState) -> float:
    """Sum over agents of the smallest soft-decision value."""
    return float(sum(t.min() for t in state.psi))


def delta_inf(a: SolverState, b: SolverState) -> float:
    """Max-norm distance; matching infinities count as equal."""
    worst = 0.0
    for x, y in zip(a.psi, b.psi):
        same = x == y
        with np.errstate(invalid="ignore"):
            d = np.where(same, 0.0, np.abs(x - y))
        if d.size:
            worst = max(worst, float(d.max()))
    return worst


def psi_norm(state: SolverState) -> float:
    vals = [np.abs(t[np.isfinite(t)]).max() for t in state.psi if np.isfinite(t).any()]
    return float(max(vals, default=0.0))


def detect_equilibrium(state_k: SolverState, state_prev: SolverState, tol: float) -> bool:
    return delta_inf(state_k, state_prev) <= tol


class CooperativeSolver:
    """Compiled agents for one problem/decomposition/propagation triple."""

    def __init__(
        self,
        p: Problem,
        decomp: Decomposition,
        w: PropagationMatrix | None = None,
        config: SolverConfig | None = None,
    ):
        self.p = p
        self.d = decomp
        self.w = w
        self.config = config or SolverConfig()
        self.config.check()
        if decomp.n != p.n or decomp.m != p.n:
            raise DimensionMismatch(
                f"need one sub-objective per variable: n={p.n}, m={decomp.m}"
            )
        if self.config.form in ("basic", "canonical"):
            if w is None:
                raise ConfigInvalid(f"{self.config.form} form needs a propagation matrix")
            if w.n != p.n:
                raise ConfigInvalid(f"propagation matrix is {w.n}x{w.n} for {p.n} agents")
        self.plans = [
            [TreePlan(p, part, i) for part in decomp.parts[i]] for i in range(p.n)
        ]
        self.scopes = [decomp.scope(i) for i in range(p.n)]
        # how many parts of agent i carry variable j: the coupling term is split evenly
        self._share = []
        for i in range(p.n):
            count: dict[int, int] = {}
            for part in decomp.parts[i]:
                for v in part.variables:
                    count[v] = count.get(v, 0) + 1
            self._share.append(count)
        self._weights = [self._coupling_weights(i) for i in range(p.n)]

    def _coupling_weights(self, i: int) -> dict[int, float]:
        if self.config.form == "simple":
            return {j: 1.0 for j in self.scopes[i]}
        row = self.w.row(i)
        outside = sorted(set(row) - set(self.scopes[i]))
        if outside:
            raise ConfigInvalid(
                f"agent {i} receives messages from {outside}, which its sub-objective does not contain"
            )
        return row

    def coefficients(self, k: int) -> tuple[float, float]:
        """``(scale on E_i, factor on the coupling weights)`` at iteration k."""
        form = self.config.form
        if form == "simple":
            return 1.0, self.config.alpha
        lam = self.config.schedule(k)
        if form == "basic":
            if not 0.0 <= lam < 1.0:
                raise LambdaOutOfRange(f"basic form needs 0 <= lambda < 1, got {lam!r} at k={k}")
            return 1.0 - lam, lam
        if lam < 0:
            raise LambdaOutOfRange(f"canonical form needs lambda >= 0, got {lam!r} at k={k}")
        return 1.0, lam

    def _extras(self, i: int, prev: SolverState, factor: float) -> list[dict[int, np.ndarray]]:
        share = self._share[i]
        out = []
        for part in self.d.parts[i]:
            ex = {}
            for j in part.variables:
                wt = self._weights[i].get(j, 0.0)
                if wt and factor:
                    ex[j] = (factor * wt / share[j]) * prev.psi[j]
            out.append(ex)
        return out

    def _agent(self, i: int, prev: SolverState, scale: float, factor: float) -> np.ndarray:
        extras = self._extras(i, prev, factor)
        prof = None
        for plan, ex in zip(self.plans[i], extras):
            pr = plan.profile(ex, scale)
            prof = pr if prof is None else prof + pr
        return prof

    def step(self, prev: SolverState, k: int | None = None) -> SolverState:
        k = prev.k + 1 if k is None else k
        scale, factor = self.coefficients(k)
        agents = range(self.p.n)
        if self.config.threads > 1:
            with ThreadPoolExecutor(self.config.threads) as pool:
                profiles = list(pool.map(lambda i: self._agent(i, prev, scale, factor), agents))
        else:
            profiles = [self._agent(i, prev, scale, factor) for i in agents]
        raw_min = np.array([pr.min() for pr in profiles])
        if self.config.form == "simple":
            profiles = [offset(pr) for pr in profiles]
        return SolverState(tuple(profiles), k, raw_min)

    def modified_value(self, i: int, prev: SolverState, labels, k: int) -> float:
        scale, factor = self.coefficients(k)
        extras = self._extras(i, prev, factor)
        return sum(plan.value(labels, ex, scale) for plan, ex in zip(self.plans[i], extras))

    def consensus(self, prev: SolverState, state: SolverState) -> tuple[bool, np.ndarray]:
        """Whether the extracted solution attains every agent's unclamped minimum.

        For multi-part agents the sum of part minima bounds the true minimum
        from below, so attaining it is still sufficient.
        """
        labels = extract_solution(state)
        if state.raw_min is None:
            return False, labels
        for i in range(self.p.n):
            val = self.modified_value(i, prev, labels, state.k)
            lo = state.raw_min[i]
            if not np.isfinite(val) or val - lo > self.config.consensus_tol:
                return False, labels
        return True, labels


def offset(table: np.ndarray) -> np.ndarray:
    """Shift a table so its minimum is exactly zero (left alone if no finite entry)."""
    m = table.min()
    return table - m if np.isfinite(m) else table.copy()


def iterate_basic(state, problem, decomp, w, lam) -> SolverState:
    cfg = SolverConfig("basic", LambdaSchedule.constant(lam))
    return CooperativeSolver(problem, decomp, w, cfg).step(state)


def iterate_canonical(state, problem, decomp, w, lam) -> SolverState:
    cfg = SolverConfig("canonical", LambdaSchedule.constant(lam))
    return CooperativeSolver(problem, decomp, w, cfg).step(state)


def iterate_simple(state, problem, decomp, alpha) -> SolverState:
    cfg = SolverConfig("simple", alpha=alpha)
    return CooperativeSolver(problem, decomp, None, cfg).step(state)


def detect_consensus(state, prev, problem, decomp, w, lam=None, form="basic", alpha=0.16):
    """Consensus check for ``state`` produced from ``prev`` by one update."""
    cfg = SolverConfig(form, LambdaSchedule.constant(0.0 if lam is None else lam), alpha)
    return CooperativeSolver(problem, decomp, w if form != "simple" else None, cfg).consensus(prev, state)


# --- run loop, traces, certificates ----------------------------------------


@dataclass(frozen=True)
class TraceRow:
    iter: int
    solution: tuple[int, ...]
    energy: float
    lower_bound: float
    consensus: bool
    delta_inf: float
    equilibrium: bool
    certified: bool
    lam: float


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)
    initial_lower_bound: float = 0.0
    lower_bound_valid: bool = False

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, k: int) -> TraceRow:
        return self.rows[k - 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["iter", "energy", "lower_bound", "consensus", "delta_inf", "certified"])
        for r in self.rows:
            out.writerow(
                [r.iter, repr(r.energy), repr(r.lower_bound), int(r.consensus),
                 repr(r.delta_inf), int(r.certified)]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class Certificate:
    iteration: int
    kind: str
    solution: tuple[int, ...]
    energy: float
    lambdas: tuple[float, ...]


@dataclass
class RunResult:
    trace: RunTrace
    assignment: tuple[int, ...]
    energy: float
    certificate: Certificate | None
    state: SolverState
    config: SolverConfig


def _constant_lambda(cfg: SolverConfig) -> float | None:
    s = cfg.schedule
    if s.kind == "constant" and 0.0 <= s.value < 1.0:
        return s.value
    return None


def lower_bound_is_valid(p: Problem, cfg: SolverConfig, zero_init: bool) -> bool:
    """The soft-decision sum bounds the optimum from below only for the basic
    form (or the canonical form with constant lambda < 1, its rescaling), and
    only if it starts below the energy: either every table is nonnegative with
    a zero start, or ``lambda_1 = 0`` wipes the start out."""
    if cfg.form == "simple":
        return False
    if cfg.form == "canonical" and _constant_lambda(cfg) is None:
        return False
    if cfg.schedule(1) == 0.0:
        return True
    nonneg = all((u >= 0).all() for u in p.unary) and all((t >= 0).all() for t in p.binary.values())
    return zero_init and nonneg


def _certificate_at(rows: list[TraceRow], idx: int, cfg: SolverConfig) -> str | None:
    r = rows[idx]
    if cfg.form == "simple" or not r.consensus:
        return None
    if cfg.form == "canonical" and _constant_lambda(cfg) is None:
        return None
    if _constant_lambda(cfg) is not None and r.equilibrium:
        return "equilibrium-consensus"
    if schedule_divergent(cfg.schedule):
        need = cfg.consensus_required_repeats
        if idx + 1 >= need and all(
            rows[j].consensus and rows[j].solution == r.solution
            for j in range(idx - need + 1, idx + 1)
        ):
            return "divergent-schedule"
    return None


def run(
    p: Problem,
    decomp: Decomposition,
    w: PropagationMatrix | None = None,
    config: SolverConfig | None = None,
    init: SolverState | None = None,
    stop_on_certificate: bool = True,
) -> RunResult:
    """Iterate until a global-optimality certificate or ``max_iter``.

    Returns the certified solution if one was earned, otherwise the
    lowest-energy iterate seen (earliest on ties).
    """
    cfg = config or SolverConfig()
    if not is_connected(p):
        raise Disconnected("the solver needs a connected problem graph")
    solver = CooperativeSolver(p, decomp, w, cfg)
    state = init or SolverState.zeros(p)
    zero_init = all((t == 0).all() for t in state.psi)
    lam_c = _constant_lambda(cfg)
    lb_scale = (1.0 - lam_c) if cfg.form == "canonical" and lam_c is not None else 1.0
    trace = RunTrace(
        initial_lower_bound=lb_scale * lower_bound(state),
        lower_bound_valid=lower_bound_is_valid(p, cfg, zero_init),
    )
    best: tuple[float, tuple[int, ...]] | None = None
    certificate = None
    for k in range(1, cfg.max_iter + 1):
        new = solver.step(state, k)
        cons, labels = solver.consensus(state, new)
        sol = tuple(int(x) for x in labels)
        energy = evaluate_energy(p, sol)
        delta = delta_inf(new, state)
        eq = delta <= cfg.equilibrium_tol * (1.0 + psi_norm(new))
        lam = cfg.schedule(k) if cfg.form != "simple" else cfg.alpha
        trace.rows.append(
            TraceRow(k, sol, energy, lb_scale * lower_bound(new), cons, delta, eq, False, lam)
        )
        kind = _certificate_at(trace.rows, k - 1, cfg)
        if kind is not None:
            trace.rows[-1] = replace(trace.rows[-1], certified=True)
            if certificate is None:
                lams = tuple(r.lam for r in trace.rows)
                certificate = Certificate(k, kind, sol, energy, lams)
        if best is None or energy < best[0]:
            best = (energy, sol)
        state = new
        if certificate is not None and stop_on_certificate:
            break
    if certificate is not None:
        assignment, energy = certificate.solution, certificate.energy
    else:
        energy, assignment = best
    return RunResult(trace, assignment, energy, certificate, state, cfg)


def certify_global_optimum(result: RunResult) -> Certificate | None:
    """First certificate earned anywhere in a finished run's trace."""
    rows = result.trace.rows
    for idx in range(len(rows)):
        kind = _certificate_at(rows, idx, result.config)
        if kind is not None:
            r = rows[idx]
            return Certificate(r.iter, kind, r.solution, r.energy, tuple(x.lam for x in rows[: idx + 1]))
    return None


@dataclass(frozen=True)
class ClosenessBounds:
    bound_a: float
    bound_b: float
    heuristic: bool


def closeness_bounds(
    result: RunResult, k1: int, k2: int, e_star: float | None = None
) -> ClosenessBounds:
    """Upper bounds on ``E(x) - E*`` for a consensus solution held from k1 to k2.

    ``bound_a = P (E(x) - LB_{k1-1})`` and
    ``bound_b = P / (1 - P) (E* - LB_{k1-1})`` with ``P`` the product of the
    cooperation strengths over ``k1..k2``. Without ``e_star`` the best energy in
    the trace stands in for ``E*`` and ``bound_b`` is flagged heuristic.
    """
    tr = result.trace
    if not 1 <= k1 <= k2 <= len(tr):
        raise ConsensusNotStable(f"iterations {k1}..{k2} not in trace of length {len(tr)}")
    sol = tr.row(k1).solution
    for k in range(k1, k2 + 1):
        r = tr.row(k)
        if not r.consensus or r.solution != sol:
            raise ConsensusNotStable(f"consensus on {sol} broken at iteration {k}")
    lb = tr.initial_lower_bound if k1 == 1 else tr.row(k1 - 1).lower_bound
    prod = schedule_product(result.config.schedule, k1, k2)
    energy = tr.row(k1).energy
    bound_a = prod * (energy - lb)
    heuristic = e_star is None
    if heuristic:
        e_star = min(r.energy for r in tr.rows)
    bound_b = np.inf if prod >= 1.0 else prod / (1.0 - prod) * (e_star - lb)
    return ClosenessBounds(float(bound_a), float(bound_b), heuristic)
