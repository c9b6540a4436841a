"""Randomizing unitary sets, epsilon-nets and quantum-classical descriptions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qmath import fidelity, trace_distance
from .sampling import haar_state, haar_unitary, make_rng


class RandomizerError(RuntimeError):
    """No verified randomizing set could be produced."""


# --------------------------------------------------------------------------
# unitary sets


@dataclass
class UnitarySet:
    D: int
    epsilon: float
    unitaries: np.ndarray  # shape (K, D, D)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.unitaries = np.asarray(self.unitaries, dtype=complex)
        if self.unitaries.ndim != 3 or self.unitaries.shape[1:] != (self.D, self.D):
            raise ValueError(f"expected shape (K, {self.D}, {self.D}), got {self.unitaries.shape}")
        if self.K < 1:
            raise ValueError("a unitary set needs K >= 1")
        eye = np.eye(self.D)
        prod = self.unitaries @ np.conj(np.swapaxes(self.unitaries, 1, 2))
        if np.max(np.abs(prod - eye)) > 1e-10:
            raise ValueError("set contains a non-unitary matrix")

    @property
    def K(self) -> int:
        return self.unitaries.shape[0]

    def twirl(self, rho: np.ndarray) -> np.ndarray:
        """``(1/K) sum_k U_k rho U_k^*``."""
        u = self.unitaries
        return np.einsum("kab,bc,kdc->ad", u, rho, u.conj()) / self.K

    def to_json(self) -> dict:
        out = {"D": self.D, "epsilon": self.epsilon, "K": self.K, "provenance": dict(self.provenance)}
        if self.provenance.get("kind") != "haar":
            out["re"] = self.unitaries.real.tolist()
            out["im"] = self.unitaries.imag.tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "UnitarySet":
        prov = obj.get("provenance", {})
        kind = prov.get("kind")
        if kind == "haar":
            return haar_set(obj["D"], obj["K"], obj["epsilon"], prov["seed"], prov.get("stream", 0))
        if kind == "weyl":
            return weyl_set(obj["D"])
        u = np.asarray(obj["re"]) + 1j * np.asarray(obj["im"])
        return cls(obj["D"], obj["epsilon"], u, prov)


def randomizing_set_size(D: int, eps: float) -> int:
    """``ceil((10/eps)**2 * D * log2(20 D / eps))``."""
    return math.ceil((10.0 / eps) ** 2 * D * math.log2(20.0 * D / eps))


def haar_set(D: int, K: int, eps: float, seed: int, stream: int = 0) -> UnitarySet:
    rng = make_rng(seed, stream)
    u = haar_unitary(D, rng, size=K)
    return UnitarySet(D, eps, u, {"kind": "haar", "seed": int(seed), "stream": int(stream)})


def weyl_set(D: int) -> UnitarySet:
    """The D**2 generalized Pauli operators ``X**a Z**b``; an exact randomizer."""
    if D < 1:
        raise ValueError("D must be >= 1")
    x = np.roll(np.eye(D, dtype=complex), 1, axis=0)  # X|j> = |j+1>
    z = np.diag(np.exp(2j * np.pi * np.arange(D) / D))
    ops = []
    for a in range(D):
        xa = np.linalg.matrix_power(x, a)
        for b in range(D):
            ops.append(xa @ np.linalg.matrix_power(z, b))
    return UnitarySet(D, 0.0, np.array(ops), {"kind": "weyl"})


def explicit_set(unitaries, eps: float) -> UnitarySet:
    u = np.asarray(unitaries, dtype=complex)
    if u.ndim == 2:
        u = u[None]
    return UnitarySet(u.shape[1], eps, u, {"kind": "explicit"})


# --------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    dev_max: float  # sup |deviation| found
    dev_upper: float  # largest signed deviation found
    dev_min: float  # smallest signed deviation found
    threshold: float  # eps / D
    passed: bool
    heuristic: bool = True
    worst_pair: tuple | None = None

    def to_json(self) -> dict:
        return {"dev_max": self.dev_max, "dev_upper": self.dev_upper, "dev_min": self.dev_min,
                "threshold": self.threshold, "pass": self.passed, "heuristic": self.heuristic}


def _mixture_of(u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``(1/K) sum_k U_k |phi><phi| U_k^*`` for a vector ``phi``."""
    v = u @ phi  # (K, D)
    return np.einsum("ka,kb->ab", v, v.conj()) / u.shape[0]


def _extremal_pair(u: np.ndarray, phi: np.ndarray, top: bool, iters: int, tol: float = 1e-13):
    """Alternating eigenvector ascent on ``f(phi, psi) = <psi|M(phi)|psi>``.

    Each half-step maximizes (or minimizes) exactly in one argument, so the
    objective is monotone.
    """
    uh = np.conj(np.swapaxes(u, 1, 2))
    pick = -1 if top else 0
    prev = None
    for _ in range(iters):
        w, v = np.linalg.eigh(_mixture_of(u, phi))
        psi = v[:, pick]
        w2, v2 = np.linalg.eigh(_mixture_of(uh, psi))
        phi = v2[:, pick]
        val = w2[pick]
        if prev is not None and abs(val - prev) < tol:
            break
        prev = val
    return float(val), phi, psi


def pair_deviation(uset: UnitarySet, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``(1/K) sum_k |<psi|U_k|phi>|**2 - 1/D`` for stacks of vectors."""
    amps = np.einsum("...a,kab,...b->...k", psi.conj(), uset.unitaries, phi)
    return np.mean(np.abs(amps) ** 2, axis=-1) - 1.0 / uset.D


def verify_randomizing(uset: UnitarySet, probes: int = 2000, restarts: int = 16,
                       rng: np.random.Generator | None = None, iters: int = 200,
                       eps: float | None = None) -> VerificationReport:
    """Heuristic search for the worst pure pair in the randomization condition.

    Combines alternating eigenvector ascent from ``restarts`` random starts
    (for both the upper and the lower deviation) with ``probes`` random
    pairs.  A passing report is evidence, not a certificate.
    """
    if rng is None:
        rng = make_rng(0)
    eps = uset.epsilon if eps is None else eps
    D = uset.D
    u = uset.unitaries
    upper, lower = -math.inf, math.inf
    worst = None
    starts = list(haar_state(D, rng, size=max(restarts, 1)))
    # basis vectors are the natural worst case for diagonal-heavy sets
    starts.append(np.eye(D, dtype=complex)[0])
    for phi0 in starts:
        hi, phi, psi = _extremal_pair(u, phi0, True, iters)
        if hi - 1.0 / D > upper:
            upper = hi - 1.0 / D
            if upper >= -lower:
                worst = (phi, psi)
        lo, phi, psi = _extremal_pair(u, phi0, False, iters)
        if lo - 1.0 / D < lower:
            lower = lo - 1.0 / D
            if -lower > upper:
                worst = (phi, psi)
    if probes > 0:
        phis = haar_state(D, rng, size=probes)
        psis = haar_state(D, rng, size=probes)
        dev = pair_deviation(uset, phis, psis)
        upper = max(upper, float(dev.max()))
        lower = min(lower, float(dev.min()))
    dev_max = max(upper, -lower)
    thr = eps / D
    return VerificationReport(dev_max, upper, lower, thr, bool(dev_max <= thr + 1e-12), True, worst)


def build_randomizing_set(D: int, eps: float, seed: int, max_retries: int = 3,
                          probes: int = 2000, restarts: int = 16, K: int | None = None):
    """Draw a Haar set of the default cardinality and verify it.

    Each retry uses a fresh stream of the same seed.  Returns the set and
    its verification report.
    """
    if not 0 < eps <= 1:
        raise ValueError("need 0 < eps <= 1")
    if D < 2:
        raise ValueError("need D >= 2")
    K = randomizing_set_size(D, eps) if K is None else int(K)
    last = None
    for attempt in range(max_retries + 1):
        uset = haar_set(D, K, eps, seed, stream=attempt)
        report = verify_randomizing(uset, probes, restarts, make_rng(seed, 10_000 + attempt))
        if report.passed:
            uset.provenance["attempts"] = attempt + 1
            return uset, report
        last = report
    raise RandomizerError(f"no verified set after {max_retries + 1} attempts "
                          f"(best dev_max={last.dev_max:.4g}, threshold={last.threshold:.4g})")


# --------------------------------------------------------------------------
# epsilon nets


@dataclass
class EpsilonNet:
    D: int
    epsilon: float
    states: np.ndarray  # (M, D) unit vectors
    saturated: bool = True
    candidates_used: int = 0

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def nearest(self, psi: np.ndarray) -> tuple[int, float]:
        """Index and fidelity of the net point closest to ``psi``."""
        f = np.abs(self.states.conj() @ psi) ** 2
        i = int(np.argmax(f))
        return i, float(f[i])


def phase_distance(phi, psi) -> np.ndarray:
    """``min_theta || |phi> - e^{i theta}|psi> ||_2 = sqrt(2 - 2|<phi|psi>|)``."""
    ov = np.abs(np.sum(np.conj(phi) * psi, axis=-1))
    return np.sqrt(np.clip(2.0 - 2.0 * ov, 0.0, None))


def epsilon_net_size_bound(D: int, eps: float) -> float:
    return (5.0 / eps) ** (2 * D)


def epsilon_net(D: int, eps: float, rng: np.random.Generator, max_candidates: int = 500_000,
                patience: int = 50_000, batch: int = 4096) -> EpsilonNet:
    """Randomized greedy packing of pure states at radius ``eps/2``.

    A candidate joins the net when its phase-minimized Euclidean distance to
    every member is at least ``eps/2``; the packing property therefore holds
    for every choice of global phases.  Greedy growth stops after
    ``patience`` consecutive rejections (taken as saturation) or when the
    candidate budget runs out, in which case ``saturated`` is False.
    """
    if not 0 < eps <= 2:
        raise ValueError("need 0 < eps <= 2")
    r = eps / 2.0
    # |<phi|psi>| threshold equivalent to phase distance >= r
    ov_max = 1.0 - r * r / 2.0
    pts = [haar_state(D, rng)]
    used = 1
    streak = 0
    while used < max_candidates and streak < patience:
        m = min(batch, max_candidates - used)
        cand = haar_state(D, rng, size=m)
        used += m
        net = np.array(pts)
        ov = np.abs(cand.conj() @ net.T)  # (m, M)
        far = np.all(ov <= ov_max, axis=1)
        idx = np.flatnonzero(far)
        if idx.size == 0:
            streak += m
            continue
        streak = 0
        # accept sequentially; later candidates must also avoid new members
        for i in idx:
            c = cand[i]
            new = np.array(pts[len(net):]) if len(pts) > len(net) else None
            if new is not None and np.any(np.abs(new.conj() @ c) > ov_max):
                continue
            pts.append(c)
    return EpsilonNet(D, eps, np.array(pts), saturated=streak >= patience, candidates_used=used)


def covering_rate(net: EpsilonNet, samples: int, rng: np.random.Generator,
                  radius: float | None = None) -> float:
    """Fraction of random states within normalized trace distance ``radius``.

    For pure states the normalized trace distance is ``sqrt(1 - F)``.
    """
    radius = net.epsilon if radius is None else radius
    psi = haar_state(net.D, rng, size=samples)
    f = np.max(np.abs(psi.conj() @ net.states.T) ** 2, axis=1)
    td = np.sqrt(np.clip(1.0 - f, 0.0, None))
    return float(np.mean(td <= radius + 1e-12))


def net_chain(phi: np.ndarray, psi: np.ndarray) -> tuple[float, float, float]:
    """``(||phi - psi||_1, 2 sqrt(1-F), 2 || |phi> - |psi> ||_2)`` with the
    optimal relative phase applied to ``psi``."""
    ov = np.vdot(psi, phi)
    if abs(ov) > 0:
        psi = psi * ov / abs(ov)
    tn = 2.0 * trace_distance(phi, psi)
    f = fidelity(phi, psi)
    return tn, 2.0 * math.sqrt(max(0.0, 1.0 - f)), 2.0 * float(np.linalg.norm(phi - psi))


# --------------------------------------------------------------------------
# universal quantum-classical description


@dataclass
class QCCompressionScheme:
    """Block decomposition ``K = H_0 + H_1 + ... + H_K`` in the computational basis.

    ``H_1..H_K`` each span ``floor(D/K)`` consecutive basis vectors, ``H_0``
    takes the remainder.  Message ``k`` keeps the complement of ``H_k``.
    """

    D: int
    epsilon: float
    K: int
    blocks: list[np.ndarray]  # index arrays; blocks[0] is H_0

    def kept_indices(self, k: int) -> np.ndarray:
        drop = set(self.blocks[k].tolist())
        return np.array([i for i in range(self.D) if i not in drop], dtype=int)

    def projector(self, k: int) -> np.ndarray:
        p = np.zeros((self.D, self.D))
        idx = self.kept_indices(k)
        p[idx, idx] = 1.0
        return p

    @property
    def code_dim(self) -> int:
        return self.D - len(self.blocks[1])


def qc_scheme(D: int, eps: float) -> QCCompressionScheme:
    if not 0 < eps <= 1:
        raise ValueError("need 0 < eps <= 1")
    K = math.ceil(1.0 / eps)
    m = D // K
    if m < 1:
        raise ValueError(f"D={D} too small for K={K} blocks")
    blocks = [np.arange(K * m, D)] + [np.arange((k - 1) * m, k * m) for k in range(1, K + 1)]
    return QCCompressionScheme(D, eps, K, blocks)


def qc_compress(scheme: QCCompressionScheme, psi: np.ndarray) -> tuple[int, np.ndarray]:
    """Pick the message ``k`` keeping the most weight of ``psi``; return it with
    the normalized kept part in code-space coordinates."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (scheme.D,):
        raise ValueError("state dimension does not match the scheme")
    weights = [np.sum(np.abs(psi[scheme.kept_indices(k)]) ** 2) for k in range(1, scheme.K + 1)]
    k = int(np.argmax(weights)) + 1
    xi = psi[scheme.kept_indices(k)]
    return k, xi / np.linalg.norm(xi)


def qc_decompress(scheme: QCCompressionScheme, k: int, xi: np.ndarray) -> np.ndarray:
    full = np.zeros(scheme.D, dtype=complex)
    full[scheme.kept_indices(k)] = xi
    return np.outer(full, full.conj())


def universal_description_bound(D: int, S: int, F: float) -> float:
    """Lower bound on ``log2 |M|`` for a universal q-c description.

    ``q(1-q) D / 6 - 2 log2 D + log2(1 - sqrt((1-F)/(1-q)))`` with ``q = S/D``.
    """
    q = S / D
    if not q < F:
        raise ValueError(f"bound needs q = S/D < F (got q={q}, F={F})")
    if not F <= 1:
        raise ValueError("F must be <= 1")
    return q * (1 - q) * D / 6.0 - 2.0 * math.log2(D) + math.log2(1.0 - math.sqrt((1.0 - F) / (1.0 - q)))


def description_cost_floor(D: int, S: int, F: float) -> float:
    """``max(0, universal_description_bound(D, S, F))``."""
    return max(0.0, universal_description_bound(D, S, F))


def net_only_cbits(D: int, eps: float) -> float:
    """Classical cost ``(4 + log2(1/eps)) D`` of describing a state by a net point."""
    return (4.0 + math.log2(1.0 / eps)) * D
