"""Method of types, typical projectors and operator concentration checks.

Typicality is entropy typicality on exact eigenvalue products: a product
eigenvector ``e_{s_1} x ... x e_{s_n}`` is typical when
``|-(1/n) log2 prod_k lambda_{s_k} - H| <= delta``.  Everything is built by
exhaustive enumeration, so ``d**n`` must stay small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .qmath import shannon_entropy, trace_norm, von_neumann_entropy

MAX_DIM = 4096


class BudgetExceeded(RuntimeError):
    pass


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class TypeVector:
    alphabet_size: int
    counts: tuple[int, ...]
    n: int

    def __post_init__(self):
        if len(self.counts) != self.alphabet_size:
            raise ValueError("counts must have one entry per letter")
        if sum(self.counts) != self.n:
            raise ValueError("counts must sum to n")

    @property
    def distribution(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n

    def entropy(self) -> float:
        return shannon_entropy(self.distribution)


def type_of(letters: Sequence[int], alphabet_size: int | None = None) -> TypeVector:
    letters = [int(x) for x in letters]
    if any(x < 0 for x in letters):
        raise ValueError("letters must be non-negative")
    size = (max(letters) + 1 if letters else 1) if alphabet_size is None else alphabet_size
    if letters and max(letters) >= size:
        raise ValueError("letter outside the alphabet")
    counts = [0] * size
    for x in letters:
        counts[x] += 1
    return TypeVector(size, tuple(counts), len(letters))


def type_class_size(t: TypeVector) -> int:
    """Multinomial coefficient ``n! / prod_x c_x!``."""
    out = math.factorial(t.n)
    for c in t.counts:
        out //= math.factorial(c)
    return out


def all_types(alphabet_size: int, n: int):
    """Yield every TypeVector of length ``n`` over the alphabet."""
    def rec(prefix, left, slots):
        if slots == 1:
            yield prefix + [left]
            return
        for c in range(left, -1, -1):
            yield from rec(prefix + [c], left - c, slots - 1)

    for counts in rec([], n, alphabet_size):
        yield TypeVector(alphabet_size, tuple(counts), n)


def type_class_sandwich(t: TypeVector) -> tuple[bool, bool]:
    """Exact integer check of ``(n+1)^-|X| 2^{nH} <= |T| <= 2^{nH}``.

    ``2^{nH(P)} = prod_x (n/c_x)^{c_x}``, so both sides are compared after
    clearing denominators.
    """
    size = type_class_size(t)
    n = t.n
    prod_cc = 1
    for c in t.counts:
        prod_cc *= c ** c  # 0**0 == 1
    upper_ok = size * prod_cc <= n ** n
    lower_ok = n ** n <= (n + 1) ** t.alphabet_size * size * prod_cc
    return upper_ok, lower_ok


def type_from_distribution(p: Sequence[float], n: int) -> TypeVector | None:
    """The type with counts ``n p`` if those are integers, else None."""
    counts = []
    for x in p:
        c = Fraction(x).limit_denominator(10_000) * n
        if c.denominator != 1:
            return None
        counts.append(int(c))
    if sum(counts) != n:
        return None
    return TypeVector(len(counts), tuple(counts), n)


def string_of_type(t: TypeVector) -> list[int]:
    out = []
    for x, c in enumerate(t.counts):
        out.extend([x] * c)
    return out


def l1_distance(p, q) -> float:
    return float(np.sum(np.abs(np.asarray(p, float) - np.asarray(q, float))))


# --------------------------------------------------------------------------
# eigen-sequence enumeration


def sorted_eigh(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs sorted by decreasing eigenvalue with a deterministic gauge.

    Each eigenvector gets its first significant entry real positive; ties
    in the eigenvalue are broken lexicographically on the gauged entries.
    """
    w, v = np.linalg.eigh(np.asarray(rho, dtype=complex))
    for j in range(v.shape[1]):
        col = v[:, j]
        i = int(np.argmax(np.abs(col) > 1e-9))
        v[:, j] = col * (abs(col[i]) / col[i])
    keys = [(-round(w[j], 12),) + tuple(np.round(np.r_[v[:, j].real, v[:, j].imag], 12)) for j in range(len(w))]
    order = sorted(range(len(w)), key=lambda j: keys[j])
    return np.clip(w[order], 0.0, 1.0), v[:, order]


def _log_products(logs: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened ``sum_k logs[k][s_k]`` over all index sequences (row-major)."""
    out = np.zeros(1)
    for lg in logs:
        out = np.add.outer(out, lg).reshape(-1)
    return out


def _value_products(vals: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1)
    for v in vals:
        out = np.multiply.outer(out, v).reshape(-1)
    return out


def _kron_columns(bases: Sequence[np.ndarray], cols: np.ndarray) -> np.ndarray:
    """Columns ``cols`` of ``kron(bases[0], ..., bases[-1])`` without forming it."""
    dims = [b.shape[1] for b in bases]
    idx = np.unravel_index(cols, dims)
    out = np.ones((1, len(cols)), dtype=complex)
    for b, ix in zip(bases, idx):
        sel = b[:, ix]  # (d_k, r)
        out = (out[:, None, :] * sel[None, :, :]).reshape(out.shape[0] * b.shape[0], len(cols))
    return out


def _check_budget(dims: Sequence[int], max_dim: int):
    total = int(np.prod(dims, dtype=np.int64))
    if total > max_dim:
        raise BudgetExceeded(f"dimension {total} exceeds budget {max_dim}")


@dataclass
class TypicalProjector:
    matrix: np.ndarray
    basis: np.ndarray  # orthonormal columns spanning the typical subspace
    rank: int
    probability: float  # tr(source Pi)
    entropy: float  # H in the typicality window
    delta: float
    n: int
    source: str = "state"
    extra: dict = field(default_factory=dict)


def typical_set_stats(rho: np.ndarray, n: int, delta: float) -> tuple[int, float]:
    """Rank and probability of the typical projector, by enumeration only."""
    w, _ = sorted_eigh(rho)
    h = shannon_entropy(w)
    with np.errstate(divide="ignore"):
        lg = np.log2(w)
    logs = _log_products([lg] * n)
    mask = np.abs(-logs / n - h) <= delta + 1e-12
    probs = np.exp2(logs[mask])
    return int(mask.sum()), float(probs.sum())


def typical_projector(rho: np.ndarray, n: int, delta: float, max_dim: int = MAX_DIM,
                      build_matrix: bool = True) -> TypicalProjector:
    """``Pi^n_{rho,delta}`` on ``(C^d)^{x n}``."""
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    _check_budget([d] * n, max_dim)
    w, v = sorted_eigh(rho)
    h = shannon_entropy(w)
    with np.errstate(divide="ignore"):
        lg = np.log2(w)
    logs = _log_products([lg] * n)
    cols = np.flatnonzero(np.abs(-logs / n - h) <= delta + 1e-12)
    basis = _kron_columns([v] * n, cols)
    mat = basis @ basis.conj().T if build_matrix else None
    prob = float(np.exp2(logs[cols]).sum())
    return TypicalProjector(mat, basis, len(cols), prob, h, delta, n, "state")


def cond_typical_projector(channel_states: Sequence[np.ndarray], letters: Sequence[int], delta: float,
                           max_dim: int = MAX_DIM, build_matrix: bool = True) -> TypicalProjector:
    """Conditional typical projector ``Pi^n_{W,delta}(x^n)``.

    ``channel_states[x]`` is the output state ``W_x``; the window is centred
    on ``H(W|P) = sum_x P(x) S(W_x)`` with ``P`` the type of ``letters``.
    """
    letters = [int(x) for x in letters]
    n = len(letters)
    dims = [np.asarray(channel_states[x]).shape[0] for x in letters]
    _check_budget(dims, max_dim)
    eig = [sorted_eigh(np.asarray(w, dtype=complex)) for w in channel_states]
    h = sum(shannon_entropy(eig[x][0]) for x in letters) / n
    with np.errstate(divide="ignore"):
        logs = _log_products([np.log2(eig[x][0]) for x in letters])
    cols = np.flatnonzero(np.abs(-logs / n - h) <= delta + 1e-12)
    basis = _kron_columns([eig[x][1] for x in letters], cols)
    mat = basis @ basis.conj().T if build_matrix else None
    prob = float(np.exp2(logs[cols]).sum())
    return TypicalProjector(mat, basis, len(cols), prob, h, delta, n, "channel",
                            {"letters": letters})


def product_state(states: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for s in states:
        out = np.kron(out, s)
    return out


# --------------------------------------------------------------------------
# typicality bounds and thresholds


@dataclass
class TypicalBounds:
    n: int
    rank: int
    probability: float
    upper: float  # 2^{n(S+delta)}
    lower: float  # (1-eps) 2^{n(S-delta)}
    prob_ok: bool
    upper_ok: bool
    lower_ok: bool


def typical_bounds(rho: np.ndarray, n: int, delta: float, eps: float) -> TypicalBounds:
    rank, prob = typical_set_stats(rho, n, delta)
    s = von_neumann_entropy(rho)
    upper = 2.0 ** (n * (s + delta))
    lower = (1.0 - eps) * 2.0 ** (n * (s - delta))
    return TypicalBounds(n, rank, prob, upper, lower, prob >= 1 - eps, rank <= upper * (1 + 1e-12),
                         rank >= lower * (1 - 1e-12))


def typicality_threshold(rho: np.ndarray, delta: float, eps: float, n_max: int) -> int | None:
    """Smallest ``n0`` such that probability and rank bounds hold for all
    ``n0 <= n <= n_max``; None if there is no such ``n0``."""
    ok = [False] * (n_max + 1)
    for n in range(1, n_max + 1):
        b = typical_bounds(rho, n, delta, eps)
        ok[n] = b.prob_ok and b.lower_ok and b.upper_ok
    n0 = None
    for n in range(n_max, 0, -1):
        if not ok[n]:
            break
        n0 = n
    return n0


# --------------------------------------------------------------------------
# operator law of large numbers


def lln_trace(channel_states: Sequence[np.ndarray], letters: Sequence[int], delta: float,
              rho: np.ndarray | None = None) -> float:
    """``tr(W_{x^n} Pi^n_{rho,delta})`` with ``rho`` the type-average state.

    Uses that the typical projector is diagonal in the product eigenbasis of
    ``rho``: only the diagonal entries of each ``W_x`` in that basis matter.
    """
    letters = [int(x) for x in letters]
    n = len(letters)
    if rho is None:
        t = type_of(letters, len(channel_states))
        rho = sum(p * np.asarray(w) for p, w in zip(t.distribution, channel_states))
    w, v = sorted_eigh(rho)
    h = shannon_entropy(w)
    with np.errstate(divide="ignore"):
        logs = _log_products([np.log2(w)] * n)
    mask = np.abs(-logs / n - h) <= delta + 1e-12
    diags = [np.real(np.einsum("ai,ab,bi->i", v.conj(), np.asarray(channel_states[x]), v)) for x in letters]
    return float(_value_products(diags)[mask].sum())


@dataclass
class LLNReport:
    ns: list[int]
    traces: list[float]
    threshold: int | None
    monotone: bool


def operator_lln_check(channel_states: Sequence[np.ndarray], p: Sequence[float], ns: Sequence[int],
                       delta: float, eps: float = 0.1) -> LLNReport:
    """Trace of ``W_{x^n}`` on the typical subspace of ``sum_x P(x) W_x``
    for strings of type ``P`` at each admissible ``n``."""
    rho = sum(px * np.asarray(w, dtype=complex) for px, w in zip(p, channel_states))
    used, traces = [], []
    for n in ns:
        t = type_from_distribution(p, n)
        if t is None:
            continue
        used.append(n)
        traces.append(lln_trace(channel_states, string_of_type(t), delta, rho))
    threshold = None
    for i in range(len(used) - 1, -1, -1):
        if traces[i] < 1 - eps:
            break
        threshold = used[i]
    monotone = all(b >= a - 1e-12 for a, b in zip(traces, traces[1:]))
    return LLNReport(used, traces, threshold, monotone)


# --------------------------------------------------------------------------
# operator Chernoff bound


def operator_chernoff_bound(D: int, M: int, alpha: float, eta: float) -> float:
    """``2 D exp2(-M alpha eta^2 / (2 ln 2))``, i.e. ``2 D exp(-M alpha eta^2 / 2)``."""
    return 2.0 * D * math.exp(-M * alpha * eta * eta / 2.0)


@dataclass
class ChernoffReport:
    frequency: float
    bound: float
    sigma: float
    alpha: float
    passed: bool
    vacuous: bool


def _inv_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v / np.sqrt(w)) @ v.conj().T


def operator_chernoff_check(sampler: Callable[[np.random.Generator, int], np.ndarray], mean: np.ndarray,
                            M: int, eta: float, trials: int, rng: np.random.Generator) -> ChernoffReport:
    """Monte Carlo frequency of ``mean(X_1..X_M)`` leaving ``[(1-eta)A, (1+eta)A]``.

    ``sampler(rng, size)`` returns ``size`` i.i.d. operators with
    ``0 <= X <= 1`` and expectation ``mean``.
    """
    if not 0 < eta <= 0.5:
        raise ValueError("need 0 < eta <= 1/2")
    A = np.asarray(mean, dtype=complex)
    D = A.shape[0]
    alpha = float(np.linalg.eigvalsh(A).min())
    if alpha <= 0:
        return ChernoffReport(math.nan, math.inf, 0.0, alpha, True, True)
    a_is = _inv_sqrt(A)
    hits = 0
    for _ in range(trials):
        xs = sampler(rng, M)
        avg = xs.mean(axis=0)
        w = np.linalg.eigvalsh(a_is @ avg @ a_is)
        if w.min() < 1 - eta - 1e-12 or w.max() > 1 + eta + 1e-12:
            hits += 1
    freq = hits / trials
    bound = operator_chernoff_bound(D, M, alpha, eta)
    sigma = math.sqrt(max(min(bound, 1.0) * (1 - min(bound, 1.0)), 0.0) / trials)
    return ChernoffReport(freq, bound, sigma, alpha, freq <= bound + 4 * sigma + 1e-15, False)


def rank_one_projector_sampler(D: int):
    """Sampler of Haar-random rank-one projectors (mean ``I/D``)."""
    from .sampling import haar_state

    def sample(rng, size):
        v = haar_state(D, rng, size=size)
        return np.einsum("ka,kb->kab", v, v.conj())

    return sample


# --------------------------------------------------------------------------
# gentle measurement


def _psd_sqrt(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def gentle_measurement_check(rho: np.ndarray, X: np.ndarray) -> tuple[float, float, bool]:
    """``(||rho - sqrt(X) rho sqrt(X)||_1, sqrt(8 eps), pass)`` with
    ``eps = 1 - tr(rho X)``."""
    X = np.asarray(X, dtype=complex)
    w = np.linalg.eigvalsh(X)
    if w.min() < -1e-10 or w.max() > 1 + 1e-10:
        raise ValueError("need 0 <= X <= 1")
    eps = max(0.0, 1.0 - float(np.real(np.trace(rho @ X))))
    sx = _psd_sqrt(X)
    lhs = trace_norm(rho - sx @ rho @ sx)
    rhs = math.sqrt(8 * eps)
    return lhs, rhs, lhs <= rhs + 1e-9


# --------------------------------------------------------------------------
# the pi_I operator of the entangled-state protocol


@dataclass
class PiChain:
    pi: np.ndarray
    trace: float
    eps_cond: float  # 1 - tr(W_I Pi(I))
    eps_typ: float  # 1 - tr(W_I Pi)
    large_ok: bool  # tr pi >= 1 - 2 max(eps)
    small_ok: bool  # pi <= 2^{-n(S(W|Q) - delta)} Pi
    small_margin: float
    Pi: TypicalProjector
    Pi_cond: TypicalProjector


def pi_operator_chain(channel_states: Sequence[np.ndarray], letters: Sequence[int], delta: float,
                      max_dim: int = MAX_DIM) -> PiChain:
    """Build ``pi_I = Pi Pi(I) W_I Pi(I) Pi`` and check both operator bounds."""
    letters = [int(x) for x in letters]
    n = len(letters)
    t = type_of(letters, len(channel_states))
    rho = sum(q * np.asarray(w, dtype=complex) for q, w in zip(t.distribution, channel_states))
    big = typical_projector(rho, n, delta, max_dim)
    cond = cond_typical_projector(channel_states, letters, delta, max_dim)
    w_i = product_state([channel_states[x] for x in letters])
    x = big.matrix @ cond.matrix
    pi = x @ w_i @ x.conj().T
    pi = (pi + pi.conj().T) / 2
    tr = float(np.real(np.trace(pi)))
    eps_c = 1.0 - float(np.real(np.trace(w_i @ cond.matrix)))
    eps_t = 1.0 - float(np.real(np.trace(w_i @ big.matrix)))
    large_ok = tr >= 1 - 2 * max(eps_c, eps_t) - 1e-10
    s_cond = sum(von_neumann_entropy(channel_states[x]) for x in letters) / n
    c = 2.0 ** (-n * (s_cond - delta))
    margin = float(np.linalg.eigvalsh(c * big.matrix - pi).min())
    return PiChain(pi, tr, eps_c, eps_t, large_ok, margin >= -1e-10, margin, big, cond)
