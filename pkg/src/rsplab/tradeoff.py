"""Entropic cbit/ebit and cbit/qubit trade-off curves.

Three curve kinds share one optimisation over classical channels
``p(j|i)`` with ``m + 1`` outputs:

``Q_star``       min S(A:B|C)  s.t. S(A:C)  <= R   (visible compression)
``E_star``       min S(A:B|C)  s.t. S(A:BC) <= R   (remote preparation)
``entangled_N``  min S(B|C)    s.t. S(X:BC) <= R   (entangled ensembles)
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .qmath import (LabeledState, cond_entropy, cond_mutual_info, mutual_info, shannon_entropy, von_neumann_entropy)

KINDS = ("E_star", "Q_star", "entangled_N")
KIND_ALIASES = {"rsp": "E_star", "qct": "Q_star", "entangled": "entangled_N",
                "E_star": "E_star", "Q_star": "Q_star", "entangled_N": "entangled_N"}


class OracleBudgetExceeded(RuntimeError):
    pass


def canonical_kind(kind: str) -> str:
    try:
        return KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown curve kind {kind!r}") from None


# --------------------------------------------------------------------------
# data types


@dataclass
class Ensemble:
    """Pure-state ensemble ``{p_i, |psi_i>}`` on ``C^d``."""

    probs: np.ndarray
    states: np.ndarray  # (m, d)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        if self.states.shape[0] != self.probs.size:
            raise ValueError("one state per probability")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        norms = np.linalg.norm(self.states, axis=1)
        if np.max(np.abs(norms - 1)) > 1e-10:
            raise ValueError("ensemble states must be normalized")

    @property
    def m(self) -> int:
        return self.probs.size

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def b_states(self) -> np.ndarray:
        return np.einsum("ia,ib->iab", self.states, self.states.conj())

    def average(self) -> np.ndarray:
        return np.einsum("i,iab->ab", self.probs, self.b_states())


@dataclass
class BipartiteEnsemble:
    """Pure states ``|phi_i>^{AB}`` with the cut ``(dA, dB)``."""

    probs: np.ndarray
    states: np.ndarray  # (m, dA*dB)
    cut: tuple[int, int]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        self.cut = (int(self.cut[0]), int(self.cut[1]))
        if self.states.shape != (self.probs.size, self.cut[0] * self.cut[1]):
            raise ValueError("states must have shape (m, dA*dB)")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if np.max(np.abs(np.linalg.norm(self.states, axis=1) - 1)) > 1e-10:
            raise ValueError("ensemble states must be normalized")

    @property
    def m(self) -> int:
        return self.probs.size

    def b_states(self) -> np.ndarray:
        """Receiver reductions ``phi_i^B``."""
        dA, dB = self.cut
        c = self.states.reshape(-1, dA, dB)
        return np.einsum("iab,iac->ibc", c, c.conj())

    def average_b(self) -> np.ndarray:
        return np.einsum("i,iab->ab", self.probs, self.b_states())


@dataclass
class ClassicalChannel:
    matrix: np.ndarray  # rows i, columns j

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if np.any(self.matrix < -1e-12) or np.max(np.abs(self.matrix.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("channel rows must be probability vectors")

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    def digest(self) -> str:
        return hashlib.sha1(np.round(self.matrix, 12).tobytes()).hexdigest()[:12]


def trivial_channel(m: int, J: int | None = None) -> ClassicalChannel:
    J = m + 1 if J is None else J
    mat = np.zeros((m, J))
    mat[:, 0] = 1
    return ClassicalChannel(mat)


def identity_channel(m: int, J: int | None = None) -> ClassicalChannel:
    J = m + 1 if J is None else J
    mat = np.zeros((m, J))
    mat[np.arange(m), np.arange(m)] = 1
    return ClassicalChannel(mat)


@dataclass
class TradeoffPoint:
    R: float
    value: float
    channel: ClassicalChannel | None
    kind: str
    constraint: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


# --------------------------------------------------------------------------
# the state omega and its entropic quantities


def assemble_omega(ens, channel: ClassicalChannel) -> LabeledState:
    """``sum_i p_i |i><i| (x) state_i (x) sum_j p(j|i) |j><j|``.

    Registers are ``A, B, C`` for an :class:`Ensemble` and ``X, A, B, C``
    for a :class:`BipartiteEnsemble`.
    """
    P = channel.matrix
    if P.shape[0] != ens.m:
        raise ValueError(f"channel has {P.shape[0]} rows for {ens.m} ensemble members")
    J = P.shape[1]
    m = ens.m
    if isinstance(ens, BipartiteEnsemble):
        parts = (("X", m), ("A", ens.cut[0]), ("B", ens.cut[1]), ("C", J))
        middle = np.einsum("ia,ib->iab", ens.states, ens.states.conj())
        classical = {"X", "C"}
    else:
        parts = (("A", m), ("B", ens.d), ("C", J))
        middle = ens.b_states()
        classical = {"A", "C"}
    dm = middle.shape[1]
    total = m * dm * J
    mat = np.zeros((total, total), dtype=complex)
    for i in range(m):
        for j in range(J):
            w = ens.probs[i] * P[i, j]
            if w == 0:
                continue
            block = np.zeros((m, m))
            block[i, i] = 1
            cj = np.zeros((J, J))
            cj[j, j] = 1
            mat += w * np.kron(np.kron(block, middle[i]), cj)
    return LabeledState(parts, mat, frozenset(classical))


def eval_qct_point(ens: Ensemble, channel: ClassicalChannel) -> tuple[float, float]:
    """``(S(A:C), S(A:B|C))`` on omega."""
    om = assemble_omega(ens, channel)
    return mutual_info(om, {"A"}, {"C"}), cond_mutual_info(om, {"A"}, {"B"}, {"C"})


def eval_rsp_point(ens: Ensemble, channel: ClassicalChannel) -> tuple[float, float]:
    """``(S(A:BC), S(A:B|C))`` on omega."""
    om = assemble_omega(ens, channel)
    return mutual_info(om, {"A"}, {"B", "C"}), cond_mutual_info(om, {"A"}, {"B"}, {"C"})


def eval_entangled_point(ens: BipartiteEnsemble, channel: ClassicalChannel) -> tuple[float, float]:
    """``(S(X:BC), S(B|C))`` on the four-register omega."""
    om = assemble_omega(ens, channel)
    return mutual_info(om, {"X"}, {"B", "C"}), cond_entropy(om, {"B"}, {"C"})


def eval_point(ens, channel: ClassicalChannel, kind: str) -> tuple[float, float]:
    kind = canonical_kind(kind)
    if kind == "entangled_N":
        if not isinstance(ens, BipartiteEnsemble):
            ens = as_bipartite(ens)
        return eval_entangled_point(ens, channel)
    if isinstance(ens, BipartiteEnsemble):
        raise TypeError("E_star/Q_star curves take a pure-state Ensemble")
    return eval_qct_point(ens, channel) if kind == "Q_star" else eval_rsp_point(ens, channel)


def as_bipartite(ens: Ensemble) -> BipartiteEnsemble:
    """View a pure ensemble as product states with a trivial sender register."""
    return BipartiteEnsemble(ens.probs, ens.states, (1, ens.d))


# --------------------------------------------------------------------------
# fast block evaluation used by the solver


def _entropy_stack(mats: np.ndarray) -> np.ndarray:
    """``-tr(M log2 M)`` for a stack of PSD (not necessarily normalized) matrices."""
    w = np.clip(np.linalg.eigvalsh(mats), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(w > 1e-15, -w * np.log2(w), 0.0)
    return t.sum(axis=-1)


def _xlogx(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 1e-15, x * np.log2(x), 0.0)


class FastEvaluator:
    """Evaluate ``(constraint, value)`` from the block structure of omega.

    With ``q_j = sum_i p_i p(j|i)`` and ``M_j = sum_i p_i p(j|i) rho_i``:
    ``S(B|C) = sum_j [S(M_j) + q_j log q_j]`` (unnormalized entropies),
    ``S(A:B|C) = S(B|C) - sum_i p_i S(rho_i)`` and
    ``S(A:C) = H(p) + H(q) - H(joint)``.
    """

    def __init__(self, ens, kind: str):
        self.kind = canonical_kind(kind)
        if isinstance(ens, BipartiteEnsemble):
            if self.kind != "entangled_N":
                raise TypeError("E_star/Q_star curves take a pure-state Ensemble")
            rhos = ens.b_states()
        else:
            rhos = ens.b_states()
        self.ens = ens
        self.p = ens.probs
        self.rhos = rhos
        self.hp = shannon_entropy(self.p)
        self.avg_s = float(sum(pi * von_neumann_entropy(r) for pi, r in zip(self.p, rhos)))

    def __call__(self, P: np.ndarray) -> tuple[float, float]:
        joint = self.p[:, None] * P
        q = joint.sum(axis=0)
        M = np.einsum("ij,iab->jab", joint, self.rhos)
        s_b_given_c = float(np.sum(_entropy_stack(M) + _xlogx(q)))
        i_ac = self.hp - float(np.sum(_xlogx(q))) + float(np.sum(_xlogx(joint)))
        i_ab_c = s_b_given_c - self.avg_s
        if self.kind == "Q_star":
            return i_ac, i_ab_c
        if self.kind == "E_star":
            return i_ac + i_ab_c, i_ab_c
        return i_ac + i_ab_c, s_b_given_c


# --------------------------------------------------------------------------
# solver


@dataclass
class SolverParams:
    starts: int = 32
    seed: int = 0
    tol: float = 1e-3
    maxiter: int = 200
    polish_steps: tuple[float, ...] = (0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 5e-4, 2e-4, 1e-4)
    n_outputs: int | None = None


def _normalize_rows(P: np.ndarray) -> np.ndarray:
    P = np.clip(P, 0.0, None)
    s = P.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return P / s


def _repair(f, P: np.ndarray, triv: np.ndarray, R: float) -> np.ndarray | None:
    """Mix ``P`` with the trivial channel until the constraint holds.

    Mixing cq-channels is convex for the constrained information quantity,
    so the constraint decreases toward its trivial-channel minimum.
    """
    if f(P)[0] <= R + 1e-12:
        return P
    if f(triv)[0] > R + 1e-12:
        return None
    lo, hi = 0.0, 1.0  # weight on trivial; hi is feasible
    for _ in range(60):
        mid = (lo + hi) / 2
        if f((1 - mid) * P + mid * triv)[0] <= R + 1e-12:
            hi = mid
        else:
            lo = mid
    return (1 - hi) * P + hi * triv


def _pattern_polish(f, P: np.ndarray, R: float, steps: Sequence[float]) -> tuple[np.ndarray, float]:
    """Move probability mass between entries of one row at a time."""
    m, J = P.shape
    best = f(P)[1]
    for h in steps:
        improved = True
        while improved:
            improved = False
            for i in range(m):
                for a in range(J):
                    if P[i, a] <= 0:
                        continue
                    for b in range(J):
                        if a == b:
                            continue
                        t = min(h, P[i, a])
                        Q = P.copy()
                        Q[i, a] -= t
                        Q[i, b] += t
                        con, val = f(Q)
                        if con <= R + 1e-12 and val < best - 1e-13:
                            P, best, improved = Q, val, True
    return P, best


def solve_curve(ens, R: float, kind: str, params: SolverParams | None = None) -> TradeoffPoint:
    """Minimum of the curve's value quantity subject to ``constraint <= R``.

    Returns ``value = inf`` when ``R`` is below the smallest attainable
    constraint (reached by the trivial channel).
    """
    params = params or SolverParams()
    kind = canonical_kind(kind)
    if R < 0:
        raise ValueError("R must be >= 0")
    if kind == "entangled_N" and isinstance(ens, Ensemble):
        ens = as_bipartite(ens)
    f = FastEvaluator(ens, kind)
    m = ens.m
    J = params.n_outputs or m + 1
    triv = trivial_channel(m, J).matrix
    ident = identity_channel(m, J).matrix if J >= m else None

    con_triv, val_triv = f(triv)
    if R < con_triv - 1e-9:
        return TradeoffPoint(R, math.inf, None, kind, con_triv)
    # the identity channel attains the global lower bound of the value
    if ident is not None:
        con_id, val_id = f(ident)
        if con_id <= R + 1e-12:
            return TradeoffPoint(R, max(val_id, 0.0) if kind != "entangled_N" else val_id,
                                 ClassicalChannel(ident), kind, con_id)

    rng = np.random.default_rng(params.seed)
    candidates = [triv]
    if ident is not None:
        rep = _repair(f, ident, triv, R)
        if rep is not None:
            candidates.append(rep)
    starts = [rng.dirichlet(np.ones(J), size=m) for _ in range(params.starts)]
    if ident is not None:
        starts.append(0.5 * ident + 0.5 * triv)

    cons = [
        {"type": "eq", "fun": lambda x, i=i: x.reshape(m, J)[i].sum() - 1.0} for i in range(m)
    ]
    cons.append({"type": "ineq", "fun": lambda x: R - f(_normalize_rows(x.reshape(m, J)))[0]})

    def objective(x):
        return f(_normalize_rows(x.reshape(m, J)))[1]

    for P0 in starts:
        try:
            res = minimize(objective, P0.reshape(-1), method="SLSQP", bounds=[(0.0, 1.0)] * (m * J),
                           constraints=cons, options={"maxiter": params.maxiter, "ftol": 1e-12})
            P = _normalize_rows(res.x.reshape(m, J))
        except (ValueError, np.linalg.LinAlgError):
            continue
        rep = _repair(f, P, triv, R)
        if rep is not None:
            candidates.append(rep)

    scored = sorted(candidates, key=lambda P: f(P)[1])
    best_P, best_val = None, math.inf
    for P in scored[:4]:
        P2, v2 = _pattern_polish(f, P, R, params.polish_steps)
        if v2 < best_val:
            best_P, best_val = P2, v2
    con, val = f(best_P)
    return TradeoffPoint(R, val, ClassicalChannel(_normalize_rows(best_P)), kind, con)


def curve_sweep(ens, kind: str, rs: Sequence[float], params: SolverParams | None = None,
                threads: int = 1) -> list[TradeoffPoint]:
    params = params or SolverParams()

    def one(idx_r):
        idx, r = idx_r
        p = SolverParams(**{**params.__dict__, "seed": params.seed + idx})
        return solve_curve(ens, float(r), kind, p)

    items = list(enumerate(rs))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, items))
    return [one(it) for it in items]


def qct_to_rsp(point: tuple[float, float]) -> tuple[float, float]:
    """``(R, Q) -> (R + Q, Q)``: a q.c.t. point turned into an r.s.p. point."""
    r, q = point
    return r + q, q


# --------------------------------------------------------------------------
# brute-force oracle


def _compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    out = []
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        row = []
        for c in cuts:
            row.append(c - prev - 1)
            prev = c
        row.append(total + parts - 2 - prev)
        out.append(row)
    return np.array(out, dtype=np.int64)


def oracle_channel_count(m: int, grid_step: float) -> int:
    N = int(round(1 / grid_step))
    return math.comb(N + m, m) ** m


def brute_force_oracle(ens, R: float, kind: str, grid_step: float = 0.05, budget: float = 5e7,
                       return_channel: bool = False):
    """Exhaustive minimum over all channels with entries on a ``grid_step`` lattice.

    Every channel has ``m + 1`` outputs.  Value and constraint are sums of
    per-output-column terms, which are tabulated once over the lattice of
    possible columns.
    """
    kind = canonical_kind(kind)
    if kind == "entangled_N" and isinstance(ens, Ensemble):
        ens = as_bipartite(ens)
    m = ens.m
    if m > 3:
        raise OracleBudgetExceeded("oracle supports at most 3 ensemble members")
    N = int(round(1 / grid_step))
    if abs(N * grid_step - 1) > 1e-9:
        raise ValueError("grid_step must divide 1")
    J = m + 1
    count = oracle_channel_count(m, grid_step)
    if count > budget:
        raise OracleBudgetExceeded(f"{count} channels exceed budget {budget:g}")

    p = ens.probs
    rhos = ens.b_states()
    avg_s = sum(pi * von_neumann_entropy(r) for pi, r in zip(p, rhos))
    hp = shannon_entropy(p)

    # column tables indexed by the lattice coordinates (c_1..c_m), c_i in 0..N
    grid = np.stack(np.meshgrid(*[np.arange(N + 1)] * m, indexing="ij"), axis=-1).reshape(-1, m)
    joint = grid * (p / N)[None, :]  # p_i p(j|i) for this column
    qcol = joint.sum(axis=1)
    mats = np.einsum("ki,iab->kab", joint, rhos)
    w = np.clip(np.linalg.eigvalsh(mats), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_unnorm = np.where(w > 0, -w * np.log2(w), 0.0).sum(axis=1)
        qlogq = np.where(qcol > 0, qcol * np.log2(qcol), 0.0)
        jlogj = np.where(joint > 0, joint * np.log2(joint), 0.0).sum(axis=1)
    sbc_col = s_unnorm + qlogq  # contributes to S(B|C)
    iac_col = -qlogq + jlogj  # contributes to I(A;C) - H(p)
    if kind == "Q_star":
        con_tab, con_const = iac_col, hp
        val_tab, val_const = sbc_col, -avg_s
    else:
        con_tab, con_const = iac_col + sbc_col, hp - avg_s
        val_tab, val_const = sbc_col, (-avg_s if kind == "E_star" else 0.0)
    shape = (N + 1,) * m
    con_tab = con_tab.reshape(shape)
    val_tab = val_tab.reshape(shape)

    rows = _compositions(N, J)  # (nrows, J)
    best = math.inf
    best_arg = None
    for prefix in itertools.product(range(len(rows)), repeat=m - 1):
        fixed = [rows[k] for k in prefix]
        con = np.zeros(len(rows))
        val = np.zeros(len(rows))
        for j in range(J):
            idx = tuple(np.full(len(rows), r[j]) for r in fixed) + (rows[:, j],)
            con += con_tab[idx]
            val += val_tab[idx]
        con += con_const
        val += val_const
        ok = con <= R + 1e-12
        if np.any(ok):
            k = int(np.argmin(np.where(ok, val, np.inf)))
            if val[k] < best:
                best = float(val[k])
                best_arg = [rows[i] for i in prefix] + [rows[k]]
    if return_channel:
        ch = None if best_arg is None else ClassicalChannel(np.array(best_arg, dtype=float) / N)
        return best, ch
    return best


# --------------------------------------------------------------------------
# structural checks


def product_ensemble(e1, e2):
    probs = np.kron(e1.probs, e2.probs)
    if isinstance(e1, BipartiteEnsemble) and isinstance(e2, BipartiteEnsemble):
        (a1, b1), (a2, b2) = e1.cut, e2.cut
        states = []
        for s1 in e1.states:
            for s2 in e2.states:
                t = np.multiply.outer(s1.reshape(a1, b1), s2.reshape(a2, b2))  # a1 b1 a2 b2
                states.append(t.transpose(0, 2, 1, 3).reshape(-1))
        return BipartiteEnsemble(probs, np.array(states), (a1 * a2, b1 * b2))
    states = np.array([np.kron(s1, s2) for s1 in e1.states for s2 in e2.states])
    return Ensemble(probs, states)


def product_channel(c1: ClassicalChannel, c2: ClassicalChannel) -> ClassicalChannel:
    return ClassicalChannel(np.kron(c1.matrix, c2.matrix))


@dataclass
class AdditivityReport:
    R: float
    lhs_solver: float
    lhs: float
    rhs: float
    best_split: tuple[float, float]
    product_value: float
    product_constraint: float
    upper_ok: bool  # product channel realizes N1+N2 within 1e-9 and is feasible
    equality_ok: bool


def additivity_check(e1, e2, R: float, kind: str, splits: int = 21, params: SolverParams | None = None,
                     tol: float = 1e-3) -> AdditivityReport:
    """Compare ``N(E1 x E2, R)`` with ``min_{R1+R2=R} N(E1,R1) + N(E2,R2)``."""
    params = params or SolverParams()
    kind = canonical_kind(kind)
    prod = product_ensemble(e1, e2)
    if prod.m > 9:
        raise OracleBudgetExceeded("product ensemble too large")
    best = (math.inf, None, None, 0.0)
    for r1 in np.linspace(0.0, R, splits):
        a = solve_curve(e1, float(r1), kind, params)
        b = solve_curve(e2, float(R - r1), kind, params)
        if a.value + b.value < best[0]:
            best = (a.value + b.value, a, b, float(r1))
    rhs, a, b, r1 = best
    if not math.isfinite(rhs):
        lhs = solve_curve(prod, R, kind, params).value
        return AdditivityReport(R, lhs, lhs, rhs, (r1, R - r1), math.inf, math.nan, True, not math.isfinite(lhs))
    pc = product_channel(a.channel, b.channel)
    p_con, p_val = eval_point(prod, pc, kind)
    upper_ok = abs(p_val - rhs) <= 1e-9 and p_con <= R + 1e-9
    lhs_solver = solve_curve(prod, R, kind, params).value
    lhs = min(lhs_solver, p_val)
    return AdditivityReport(R, lhs_solver, lhs, rhs, (r1, R - r1), p_val, p_con, upper_ok,
                            abs(lhs - rhs) <= tol)


def _same_ray(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and abs(abs(np.vdot(a, b)) - 1) < 1e-12


def mixture_ensemble(ensembles: Sequence[Ensemble], weights: Sequence[float]) -> Ensemble:
    """Convex combination of ensembles, merging states equal up to phase."""
    states: list[np.ndarray] = []
    probs: list[float] = []
    for w, e in zip(weights, ensembles):
        for p, s in zip(e.probs, e.states):
            if w * p == 0:
                continue
            for k, t in enumerate(states):
                if _same_ray(s, t):
                    probs[k] += w * p
                    break
            else:
                states.append(s)
                probs.append(w * p)
    probs_arr = np.array(probs)
    return Ensemble(probs_arr / probs_arr.sum(), np.array(states))


def simplex_grid(k: int, step: float) -> np.ndarray:
    N = int(round(1 / step))
    return _compositions(N, k) / N


def avs_curve(ensembles: Sequence[Ensemble], weight_step: float, R: float, kind: str,
              params: SolverParams | None = None) -> tuple[float, np.ndarray]:
    """``sup`` over the weight grid of the curve of the mixed ensemble."""
    if weight_step <= 0:
        raise ValueError("weight_step must be > 0")
    best, arg = -math.inf, None
    for w in simplex_grid(len(ensembles), weight_step):
        v = solve_curve(mixture_ensemble(ensembles, w), R, kind, params).value
        if v > best:
            best, arg = v, w
    return best, arg


def holevo_quantity(probs, states) -> float:
    avg = np.einsum("i,iab->ab", probs, states)
    return von_neumann_entropy(avg) - float(sum(p * von_neumann_entropy(s) for p, s in zip(probs, states)))


def entangled_endpoints(bip: BipartiteEnsemble) -> dict:
    """Start and floor of the entangled-ensemble curve."""
    rb = bip.b_states()
    return {
        "R_start": holevo_quantity(bip.probs, rb),
        "E_start": von_neumann_entropy(bip.average_b()),
        "E_floor": float(sum(p * von_neumann_entropy(s) for p, s in zip(bip.probs, rb))),
        "R_floor": shannon_entropy(bip.probs),
    }


def causality_bound(D: int, F: float) -> float:
    """``log2 D + log2 F`` cbits."""
    if not 0 < F <= 1:
        raise ValueError("need 0 < F <= 1")
    return math.log2(D) + math.log2(F)


# --------------------------------------------------------------------------
# ensemble files


def ensemble_from_json(obj: dict):
    probs = np.asarray(obj["probs"], dtype=float)
    states = np.array([np.asarray(s["re"], float) + 1j * np.asarray(s["im"], float) for s in obj["states"]])
    if obj.get("cut"):
        return BipartiteEnsemble(probs, states, tuple(obj["cut"]))
    return Ensemble(probs, states)


def ensemble_to_json(ens) -> dict:
    out = {
        "dims": [int(ens.states.shape[1])],
        "probs": ens.probs.tolist(),
        "states": [{"re": s.real.tolist(), "im": s.imag.tolist()} for s in ens.states],
    }
    if isinstance(ens, BipartiteEnsemble):
        out["cut"] = list(ens.cut)
        out["dims"] = list(ens.cut)
    return out
