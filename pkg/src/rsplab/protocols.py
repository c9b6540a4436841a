"""Remote state preparation protocols with exact resource bookkeeping.

Every protocol acts on explicit quantum states: the sender's measurement is
applied to her half of a maximally entangled state ``Phi_D`` and the
receiver's conditional state is obtained by a partial trace.  Complex
conjugation and transposition are taken in the computational basis that
defines ``Phi_D``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import typicality
from .qmath import (LabeledState, as_pure_state, fidelity, max_entangled, partial_trace, projector,
                    trace_distance, trace_norm, von_neumann_entropy)
from .randomize import EpsilonNet, RandomizerError, UnitarySet, epsilon_net
from .sampling import binomial_sigma, haar_unitary

FAILURE = "FAILURE"
ABORT = "ABORT"


class NotRandomizingError(RandomizerError):
    """The failure element of the preparation POVM is not PSD."""


# --------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class Transcript:
    protocol: str
    input: dict
    message: int | str
    receiver_output: np.ndarray
    success: bool
    cbits_sent: float
    ebits_consumed: float
    fidelity_to_target: float
    extra: dict = field(default_factory=dict)

    def to_json(self, include_state: bool = False) -> dict:
        out = {
            "protocol": self.protocol,
            "input": self.input,
            "message": self.message,
            "success": bool(self.success),
            "cbits_sent": float(self.cbits_sent),
            "ebits_consumed": float(self.ebits_consumed),
            "fidelity_to_target": float(self.fidelity_to_target),
        }
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str, bool)):
                out[k] = v
        if include_state:
            out["receiver_output"] = {"re": self.receiver_output.real.tolist(),
                                      "im": self.receiver_output.imag.tolist()}
        return out


def write_jsonl(transcripts: Iterable[Transcript], fh, include_state: bool = False) -> int:
    n = 0
    for t in transcripts:
        fh.write(json.dumps(t.to_json(include_state), sort_keys=True) + "\n")
        n += 1
    return n


@dataclass
class Povm:
    elements: np.ndarray  # (n, D, D)

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)
        d = self.elements.shape[-1]
        total = self.elements.sum(axis=0)
        if np.max(np.abs(total - np.eye(d))) > 1e-9:
            raise ValueError("POVM elements do not sum to the identity")
        if self.min_eigenvalue() < -1e-10:
            raise ValueError("POVM element not positive semidefinite")

    def min_eigenvalue(self) -> float:
        herm = (self.elements + np.conj(np.swapaxes(self.elements, 1, 2))) / 2
        return float(np.linalg.eigvalsh(herm).min())

    @property
    def dim(self) -> int:
        return self.elements.shape[-1]

    def __len__(self) -> int:
        return self.elements.shape[0]


def _steer(elements: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outcome probabilities and receiver states for a measurement on half of ``Phi_D``.

    Returns ``(probs, states)`` with ``states[k] = tr_A[(E_k x 1) Phi] / probs[k]``
    (zero matrices for zero-probability outcomes).
    """
    d = elements.shape[-1]
    phi = max_entangled(d)
    phi4 = np.outer(phi, phi.conj()).reshape(d, d, d, d)  # a b a' b'
    unnorm = np.einsum("kxa,abxd->kbd", elements, phi4)
    probs = np.real(np.einsum("kbb->k", unnorm))
    probs = np.clip(probs, 0.0, None)
    states = np.zeros_like(unnorm)
    nz = probs > 0
    states[nz] = unnorm[nz] / probs[nz, None, None]
    return probs, states


def steer_labeled(element: np.ndarray) -> tuple[float, np.ndarray]:
    """Same as :func:`_steer` for one element, via the generic partial trace."""
    d = element.shape[0]
    phi = LabeledState.from_pure((("A", d), ("B", d)), max_entangled(d))
    op = np.kron(element, np.eye(d))
    post = LabeledState(phi.parts, op @ phi.matrix)
    rho_b = partial_trace(post, ["B"]).matrix
    p = float(np.real(np.trace(rho_b)))
    return p, (rho_b / p if p > 0 else rho_b)


# --------------------------------------------------------------------------
# protocol Pi


def rsp_povm(psi, uset: UnitarySet) -> Povm:
    """``A_k = D/(K(1+eps)) U_k conj(psi) U_k^*`` plus the failure element."""
    psi = as_pure_state(psi)
    D, K, eps = uset.D, uset.K, uset.epsilon
    if psi.size != D:
        raise ValueError(f"state dimension {psi.size} != set dimension {D}")
    v = uset.unitaries @ psi.conj()  # (K, D)
    ak = (D / (K * (1.0 + eps))) * np.einsum("ka,kb->kab", v, v.conj())
    fail = np.eye(D) - ak.sum(axis=0)
    fail = (fail + fail.conj().T) / 2
    if np.linalg.eigvalsh(fail).min() < -1e-10:
        raise NotRandomizingError("failure element is not PSD: the unitary set does not randomize")
    return Povm(np.concatenate([ak, fail[None]], axis=0))


@dataclass
class BatchResult:
    protocol: str
    D: int
    params: dict
    messages: np.ndarray  # -1 marks failure
    success: np.ndarray
    fidelities: np.ndarray
    trace_distances: np.ndarray
    cbits: float
    ebits: float
    output_table: np.ndarray  # receiver output per message index; last row for failure
    target: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return self.messages.size

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.success))

    @property
    def sigma(self) -> float:
        return binomial_sigma(self.success_rate, self.trials)

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean(self.fidelities))

    def summary_row(self) -> dict:
        return {
            "protocol": self.protocol,
            "D": self.D,
            "params": json.dumps(self.params, sort_keys=True),
            "success_rate": self.success_rate,
            "sigma": self.sigma,
            "mean_fidelity": self.mean_fidelity,
            "cbits": self.cbits,
            "ebits": self.ebits,
        }

    def transcripts(self) -> Iterator[Transcript]:
        target = {"D": self.D, **self.params}
        for m, s, f in zip(self.messages, self.success, self.fidelities):
            msg = int(m) if s else FAILURE
            out = self.output_table[int(m)] if s else self.output_table[-1]
            yield Transcript(self.protocol, target, msg, out, bool(s), self.cbits, self.ebits, float(f))


def _trace_distances(stack: np.ndarray, target: np.ndarray) -> np.ndarray:
    diff = stack - target[None]
    diff = (diff + np.conj(np.swapaxes(diff, 1, 2))) / 2
    return 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=1)


def pi_cbits(K: int) -> float:
    """``log2(K + 1)``: K messages plus the failure flag."""
    return math.log2(K + 1)


def run_protocol_pi_batch(psi, uset: UnitarySet, trials: int, rng: np.random.Generator) -> BatchResult:
    """``trials`` independent runs of protocol Pi on the target ``psi``."""
    psi = as_pure_state(psi)
    povm = rsp_povm(psi, uset)
    probs, states = _steer(povm.elements)
    K = uset.K
    u = uset.unitaries
    decoded = np.einsum("kab,kbc,kcd->kad", np.swapaxes(u, 1, 2), states[:K], u.conj())  # U^T rho conj(U)
    target = projector(psi)
    fids = np.real(np.einsum("a,kab,b->k", psi.conj(), decoded, psi))
    tds = _trace_distances(decoded, target)
    outcomes = rng.choice(K + 1, size=trials, p=probs / probs.sum())
    ok = outcomes < K
    mixed = np.eye(uset.D) / uset.D
    table = np.concatenate([decoded, mixed[None]], axis=0)
    fid_fail = float(np.real(psi.conj() @ mixed @ psi))
    td_fail = trace_distance(mixed, target)
    fid = np.where(ok, fids[np.minimum(outcomes, K - 1)], fid_fail)
    td = np.where(ok, tds[np.minimum(outcomes, K - 1)], td_fail)
    return BatchResult("pi", uset.D, {"K": K, "epsilon": uset.epsilon}, np.where(ok, outcomes, -1), ok,
                       fid, td, pi_cbits(K), math.log2(uset.D), table, target,
                       {"p_fail": float(probs[K]), "p_fail_exact": uset.epsilon / (1 + uset.epsilon)})


def run_protocol_pi(psi, uset: UnitarySet, rng: np.random.Generator) -> Transcript:
    return next(run_protocol_pi_batch(psi, uset, 1, rng).transcripts())


def pi_rate_per_qubit(D: int, eps: float) -> dict:
    """Cbits per qubit of Pi, analytic and at the finite set size.

    ``analytic = 1 + (2 log(10/eps) + log log(20 D/eps)) / log D`` is
    ``log2 K / log2 D`` before rounding ``K`` up; ``finite`` uses
    ``log2(K+1)`` with the integer ``K``.
    """
    if D < 2:
        raise ValueError("need D >= 2")
    lg = math.log2(D)
    analytic = 1 + (2 * math.log2(10 / eps) + math.log2(math.log2(20 * D / eps))) / lg
    K = math.ceil((10 / eps) ** 2 * D * math.log2(20 * D / eps))
    return {"D": D, "epsilon": eps, "analytic": analytic, "finite": pi_cbits(K) / lg, "ebits": 1.0}


def expected_cost_pi_teleport(D: int, eps: float, K: int | None = None) -> dict:
    """Expected cost of Pi with teleportation as the fallback on failure.

    ``expected_cbits`` counts Pi at its asymptotic rate of ``log2 D`` cbits,
    which gives ``(1 + 2 eps/(1+eps)) log2 D``; ``expected_cbits_finite``
    uses the finite count ``log2(K+1)`` when ``K`` is given.
    """
    pf = eps / (1 + eps)
    lg = math.log2(D)
    out = {
        "p_fail": pf,
        "expected_cbits": lg + pf * 2 * lg,
        "expected_ebits": lg + pf * lg,
    }
    if K is not None:
        out["expected_cbits_finite"] = pi_cbits(K) + pf * 2 * lg
        out["worst_case_cbits"] = pi_cbits(K) + 2 * lg
        out["worst_case_ebits"] = 2 * lg
    return out


def run_pi_deterministic(psi, uset: UnitarySet, rng: np.random.Generator) -> Transcript:
    """Pi, falling back to teleportation of a locally prepared ``psi`` on failure."""
    psi = as_pure_state(psi)
    t = run_protocol_pi(psi, uset, rng)
    cost = expected_cost_pi_teleport(uset.D, uset.epsilon, uset.K)
    if t.success:
        out, msg, fid = t.receiver_output, t.message, t.fidelity_to_target
        branch = "pi"
    else:
        tp = teleport(LabeledState.from_pure((("S", uset.D),), psi), "S", rng)
        out, msg, fid = tp.receiver_output, f"{FAILURE}+{tp.message}", tp.fidelity_to_target
        branch = "teleport"
    return Transcript("pi+teleport", {"D": uset.D, "K": uset.K, "epsilon": uset.epsilon}, msg, out, True,
                      cost["worst_case_cbits"], cost["worst_case_ebits"], fid,
                      {"branch": branch, "expected_cbits": cost["expected_cbits"],
                       "expected_ebits": cost["expected_ebits"]})


# --------------------------------------------------------------------------
# column method


def column_copy_povm(psi) -> Povm:
    """``(conj(psi), 1 - conj(psi))`` measured on one copy of ``Phi_D``."""
    psi = as_pure_state(psi)
    pb = projector(psi.conj())
    return Povm(np.stack([pb, np.eye(psi.size) - pb]))


def column_method_batch(psi, D: int, K: int, trials: int, rng: np.random.Generator) -> BatchResult:
    """Column method without entanglement recycling.

    The sender measures every one of ``K`` copies of ``Phi_D`` and announces
    a uniformly random position among the outcomes ``0``; outcome 0 leaves
    ``psi`` in the receiver's corresponding copy.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    psi = as_pure_state(psi)
    if psi.size != D:
        raise ValueError("state dimension does not match D")
    probs, states = _steer(column_copy_povm(psi).elements)
    zeros = rng.random((trials, K)) < probs[0]
    ok = zeros.any(axis=1)
    # uniform choice among zero positions: argmax of random keys restricted to zeros
    keys = np.where(zeros, rng.random((trials, K)), -1.0)
    pos = np.argmax(keys, axis=1)
    target = projector(psi)
    mixed = np.eye(D) / D
    table = np.stack([states[0], mixed])
    f_ok = float(np.real(psi.conj() @ states[0] @ psi))
    td_ok = trace_distance(states[0], target)
    fid = np.where(ok, f_ok, float(np.real(psi.conj() @ mixed @ psi)))
    td = np.where(ok, td_ok, trace_distance(mixed, target))
    res = BatchResult("column", D, {"K": K}, np.where(ok, pos, -1), ok, fid, td, math.log2(K),
                      K * math.log2(D), table, target,
                      {"zero_frequency": float(zeros.mean()), "p_zero": float(probs[0]),
                       "p_fail_exact": (1 - 1 / D) ** K, "failed_copy_state": states[1]})
    return res


def _column_transcripts(res: BatchResult) -> Iterator[Transcript]:
    for m, s, f in zip(res.messages, res.success, res.fidelities):
        out = res.output_table[0] if s else res.output_table[1]
        yield Transcript("column", {"D": res.D, **res.params}, int(m) if s else FAILURE, out, bool(s),
                         res.cbits, res.ebits, float(f))


def column_method(psi, D: int, K: int, rng: np.random.Generator) -> Transcript:
    return next(_column_transcripts(column_method_batch(psi, D, K, 1, rng)))


# --------------------------------------------------------------------------
# teleportation


def weyl_operator(D: int, a: int, b: int) -> np.ndarray:
    X = np.roll(np.eye(D), 1, axis=0)
    Z = np.diag(np.exp(2j * np.pi * np.arange(D) / D))
    return np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)


def teleport(state: LabeledState, label: str, rng: np.random.Generator) -> Transcript:
    """Teleport register ``label`` of ``state`` through a fresh copy of ``Phi_D``.

    The sender measures ``label`` together with her half of ``Phi_D`` in the
    basis ``(W_ab x 1)|Phi>``; on outcome ``(a, b)`` the receiver applies
    ``W_ab``.  The returned transcript carries the full output state (with
    the receiver's register under the same label) in ``extra["joint_output"]``.
    """
    D = state.dim_of(label)
    k = state.index(label)
    rest = [i for i in range(len(state.parts)) if i != k]
    dr = int(np.prod([state.dims[i] for i in rest])) if rest else 1
    order = rest + [k]
    n = len(state.parts)
    t = state.matrix.reshape(state.dims * 2)
    t = t.transpose(order + [n + i for i in order]).reshape(dr, D, dr, D)  # r s r' s'
    phi = max_entangled(D).reshape(D, D)  # a b
    outcomes = [(a, b) for a in range(D) for b in range(D)]
    posts = []
    for a, b in outcomes:
        beta = (weyl_operator(D, a, b) @ phi)  # (W x 1)|Phi>, indices s a
        # <beta|_{s a} (rho_{rs} x Phi_{ab}) |beta>_{s' a'}
        kmap = np.einsum("sa,ab->bs", beta.conj(), phi)  # s -> b
        post = np.einsum("bs,rsxy,cy->rbxc", kmap, t, kmap.conj())
        posts.append(post.reshape(dr * D, dr * D))
    probs = np.array([np.real(np.trace(p)) for p in posts])
    idx = int(rng.choice(len(outcomes), p=probs / probs.sum()))
    a, b = outcomes[idx]
    w = np.kron(np.eye(dr), weyl_operator(D, a, b))
    out = w @ (posts[idx] / probs[idx]) @ w.conj().T
    # back to the original register order
    dims_order = [state.dims[i] for i in order]
    inv = np.argsort(order)
    out_t = out.reshape(dims_order * 2).transpose(list(inv) + [n + i for i in inv])
    joint = LabeledState(state.parts, out_t.reshape(state.matrix.shape), state.classical_labels)
    fid = fidelity(joint.matrix, state.matrix)
    return Transcript("teleport", {"D": D, "label": label}, idx, partial_trace(joint, [label]).matrix, True,
                      2 * math.log2(D), math.log2(D), fid,
                      {"joint_output": joint, "outcome_probs": probs})


def teleport_state(psi, rng: np.random.Generator) -> Transcript:
    psi = as_pure_state(psi)
    return teleport(LabeledState.from_pure((("S", psi.size),), psi), "S", rng)


# --------------------------------------------------------------------------
# net-only protocol (no entanglement)


def net_for_fidelity(D: int, eps_prime: float, rng: np.random.Generator, **kw) -> EpsilonNet:
    """Net at parameter ``sqrt(4 eps')``: every covered state has fidelity >= 1 - eps'."""
    if not 0 < eps_prime < 1:
        raise ValueError("need 0 < eps' < 1")
    return epsilon_net(D, 2.0 * math.sqrt(eps_prime), rng, **kw)


def net_only_protocol(psi, net: EpsilonNet, eps_prime: float | None = None) -> Transcript:
    """Send the index of the net point nearest to ``psi``.

    ``success`` is False on a covering miss (fidelity below ``1 - eps'``).
    """
    psi = as_pure_state(psi)
    if eps_prime is None:
        eps_prime = (net.epsilon / 2.0) ** 2
    i, f = net.nearest(psi)
    return Transcript("net", {"D": net.D, "net_size": net.size, "eps_prime": eps_prime}, i,
                      projector(net.states[i]), f >= 1 - eps_prime - 1e-12, math.log2(net.size), 0.0, f)


def net_only_batch(states: np.ndarray, net: EpsilonNet, eps_prime: float | None = None) -> BatchResult:
    if eps_prime is None:
        eps_prime = (net.epsilon / 2.0) ** 2
    f_all = np.abs(states.conj() @ net.states.T) ** 2
    idx = np.argmax(f_all, axis=1)
    f = f_all[np.arange(len(states)), idx]
    ok = f >= 1 - eps_prime - 1e-12
    td = np.sqrt(np.clip(1 - f, 0, None))
    table = np.einsum("ka,kb->kab", net.states, net.states.conj())
    return BatchResult("net", net.D, {"eps_prime": eps_prime, "net_size": net.size}, np.where(ok, idx, -1), ok,
                       f, td, math.log2(net.size), 0.0, table, np.eye(net.D) / net.D)


# --------------------------------------------------------------------------
# receiver obliviousness


def oblivious_simulator(psi, uset: UnitarySet) -> tuple[np.ndarray, np.ndarray]:
    """Simulated record ``sum_k (1/K)|k><k| x conj(U_k) psi U_k^T`` as ``(weights, blocks)``."""
    psi = as_pure_state(psi)
    v = uset.unitaries.conj() @ psi
    blocks = np.einsum("ka,kb->kab", v, v.conj())
    return np.full(uset.K, 1.0 / uset.K), blocks


def pi_actual_record(psi, uset: UnitarySet) -> np.ndarray:
    """Receiver's record for Pi when a failure is replaced by a uniform message.

    Returns the unnormalized blocks ``p_k rho_k + p_fail rho_fail / K`` of
    the block-diagonal state over messages, with ``rho`` the pre-decode
    receiver states.
    """
    povm = rsp_povm(psi, uset)
    probs, states = _steer(povm.elements)
    K = uset.K
    return probs[:K, None, None] * states[:K] + (probs[K] / K) * states[K][None]


@dataclass
class GapReport:
    gap: float
    sigma: float
    bound: float
    method: str
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.gap <= self.bound + 4 * self.sigma + 1e-9


def _block_trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    diff = (diff + np.conj(np.swapaxes(diff, -1, -2))) / 2
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def obliviousness_gap_pi(psi, uset: UnitarySet, trials: int = 0,
                         rng: np.random.Generator | None = None) -> GapReport:
    """Trace distance between Pi's receiver record and the simulator output.

    With ``trials == 0`` the distance is computed exactly.  Otherwise it is
    estimated by Monte Carlo: the difference of the two records is
    ``(p_fail/K) sum_k |k><k| x (rho_fail - rho_k)``, so the gap is the mean
    of ``1[failure] * 1/2 ||rho_fail - rho_k||_1`` with ``k`` the uniformly
    chosen replacement message.
    """
    bound = uset.epsilon
    _, sim = oblivious_simulator(psi, uset)
    if trials == 0:
        act = pi_actual_record(psi, uset)
        return GapReport(_block_trace_distance(act, sim / uset.K), 0.0, bound, "exact")
    if rng is None:
        raise ValueError("Monte Carlo estimate needs an rng")
    povm = rsp_povm(psi, uset)
    probs, states = _steer(povm.elements)
    K = uset.K
    outcomes = rng.choice(K + 1, size=trials, p=probs / probs.sum())
    fails = outcomes == K
    ks = rng.integers(0, K, size=int(fails.sum()))
    contrib = np.zeros(trials)
    if ks.size:
        diff = states[K][None] - states[ks]
        contrib[fails] = 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=1)
    return GapReport(float(contrib.mean()), float(contrib.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
                     bound, "monte-carlo")


def _column_record_probs(D: int, K: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classical view of the column-method record.

    All receiver states are diagonal in a common basis (``psi`` and its
    orthocomplement), so records reduce to distributions over
    ``(message, pattern)``, pattern bit 0 meaning "copy holds psi".
    Returns ``(patterns, actual, simulated)`` with arrays of shape
    ``(K, 2**K)``.
    """
    q = 1.0 / D
    pats = ((np.arange(2 ** K)[:, None] >> np.arange(K)[::-1]) & 1).astype(bool)  # True = outcome 1
    nzeros = (~pats).sum(axis=1)
    p_pat = q ** nzeros * (1 - q) ** (K - nzeros)
    eps = (1 - q) ** K
    actual = np.zeros((K, 2 ** K))
    for k in range(K):
        sel = ~pats[:, k]
        actual[k, sel] = p_pat[sel] / nzeros[sel]
    allones = nzeros == 0
    actual[:, allones] += eps / K  # failure: uniform replacement message
    sim = np.zeros((K, 2 ** K))
    sim += eps / K * p_pat[None, :]  # failure branch: maximally mixed copies
    for k in range(K):
        sel = ~pats[:, k]
        sim[k, sel] += (1 - eps) / K * p_pat[sel] / q
    return pats, actual, sim


def column_obliviousness_gap(D: int, K: int, trials: int = 0, rng: np.random.Generator | None = None,
                             psi=None, dense: bool | None = None) -> GapReport:
    """Gap between the column-method record and its simulator.

    ``trials == 0`` gives the exact value from the classical reduction and,
    when ``D**K <= 4096`` (or ``dense=True``), also from explicit density
    matrices, stored as a consistency check.

    The record includes the receiver's unselected copies.  Conditional on
    the announced position those copies are biased toward outcome 1 (the
    position is uniform among the zeros), so the gap generally exceeds the
    failure probability.  ``extra["selected_copy_gap"]`` is the gap of the
    record restricted to the message and the selected copy, which equals
    ``eps / D``.
    """
    pats, actual, sim = _column_record_probs(D, K)
    eps = (1 - 1 / D) ** K
    if trials == 0:
        gap = 0.5 * float(np.abs(actual - sim).sum())
        rep = GapReport(gap, 0.0, eps, "exact", {"selected_copy_gap": eps / D})
        if dense or (dense is None and D ** K <= 4096):
            dgap = _column_dense_gap(D, K, pats, actual, sim, psi)
            if abs(dgap - gap) > 1e-9:
                raise AssertionError(f"dense and classical gaps disagree: {dgap} vs {gap}")
        return rep
    if rng is None:
        raise ValueError("Monte Carlo estimate needs an rng")
    zeros = rng.random((trials, K)) < 1 / D
    keys = np.where(zeros, rng.random((trials, K)), -1.0)
    msg = np.where(zeros.any(axis=1), np.argmax(keys, axis=1), rng.integers(0, K, size=trials))
    code = ((~zeros).astype(np.int64) << np.arange(K)[::-1]).sum(axis=1)
    emp = np.zeros_like(actual)
    np.add.at(emp, (msg, code), 1.0 / trials)
    gap = 0.5 * float(np.abs(emp - sim).sum())
    # plug-in bias: sum_c E|emp_c - p_c| <= sqrt(cells / trials)
    sigma = math.sqrt(actual.size / trials) / 2
    return GapReport(gap, sigma, eps, "monte-carlo", {"selected_copy_gap": eps / D})


def _column_dense_gap(D, K, pats, actual, sim, psi=None) -> float:
    psi = np.eye(D)[0] if psi is None else as_pure_state(psi)
    good = projector(psi)
    bad = (np.eye(D) - good) / (D - 1) if D > 1 else np.zeros((D, D))
    total = 0.0
    for k in range(K):
        diff = np.zeros((D ** K, D ** K), dtype=complex)
        for c, pat in enumerate(pats):
            w = actual[k, c] - sim[k, c]
            if w == 0:
                continue
            m = np.ones((1, 1))
            for bit in pat:
                m = np.kron(m, bad if bit else good)
            diff += w * m
        total += 0.5 * trace_norm(diff)
    return total


# --------------------------------------------------------------------------
# causality


@dataclass
class CausalityReport:
    D: int
    K: int
    fidelity: float
    guess_frequency: float
    sigma: float

    @property
    def lower_ok(self) -> bool:
        return self.guess_frequency >= self.fidelity / self.K - 4 * self.sigma

    @property
    def upper_ok(self) -> bool:
        return self.guess_frequency <= 1 / self.D + 4 * self.sigma


def causality_check_pi(uset: UnitarySet, trials: int, rng: np.random.Generator) -> CausalityReport:
    """Send one of ``D`` basis states through Pi with the message replaced by a guess.

    Failures use the uniform replacement message, so every run yields a
    message and ``F`` is the average fidelity including failures.
    """
    D, K = uset.D, uset.K
    u = uset.unitaries
    fids, hits = [], 0
    xs = rng.integers(0, D, size=trials)
    cache = {}
    for x in range(D):
        povm = rsp_povm(np.eye(D)[x], uset)
        probs, states = _steer(povm.elements)
        cache[x] = (probs / probs.sum(), states)
    for x in xs:
        probs, states = cache[int(x)]
        k = int(rng.choice(K + 1, p=probs))
        rho = states[k]
        k_true = k if k < K else int(rng.integers(K))
        dec = u[k_true].T @ rho @ u[k_true].conj()
        fids.append(float(np.real(dec[x, x])))
        g = int(rng.integers(K))
        guess = u[g].T @ rho @ u[g].conj()
        pr = np.clip(np.real(np.diag(guess)), 0, None)
        hits += int(rng.choice(D, p=pr / pr.sum()) == x)
    freq = hits / trials
    return CausalityReport(D, K, float(np.mean(fids)), freq, binomial_sigma(max(freq, 1 / trials), trials))


# --------------------------------------------------------------------------
# entangled-ensemble round


def default_round_size(n: int, m: int, D: int, chi: float, delta: float, eps: float) -> int:
    """``(1 + n log m + log D) 2/((1-2 eps) eps^2) 2^{n (chi + 2 delta)}``."""
    lm = math.log2(m) if m > 1 else 0.0
    val = (1 + n * lm + math.log2(D)) * 2.0 / ((1 - 2 * eps) * eps ** 2) * 2.0 ** (n * (chi + 2 * delta))
    return int(math.ceil(val))


def _good_choice(us: np.ndarray, pis: Sequence[np.ndarray], eps: float) -> bool:
    Dt = us.shape[1]
    for p in pis:
        avg = np.einsum("kab,bc,kdc->ad", us, p.T, us.conj()) / us.shape[0] / np.real(np.trace(p))
        w = np.linalg.eigvalsh((avg + avg.conj().T) / 2)
        if w.min() < (1 - eps) / Dt - 1e-12 or w.max() > (1 + eps) / Dt + 1e-12:
            return False
    return True


def _pi_in_subspace(channel_states, letters, delta, basis) -> np.ndarray:
    chain = typicality.pi_operator_chain(channel_states, letters, delta)
    p = basis.conj().T @ chain.pi @ basis
    return (p + p.conj().T) / 2


def _global_state(bip, letters: Sequence[int]) -> np.ndarray:
    """Coefficient matrix of ``phi_I`` with rows ``A_1..A_n`` and columns ``B_1..B_n``."""
    dA, dB = bip.cut
    c = np.ones((1, 1), dtype=complex)
    for x in letters:
        c = np.kron(c, bip.states[x].reshape(dA, dB))
    return c


def entangled_rsp_round(letters: Sequence[int], bip, delta: float, eps: float, rng: np.random.Generator,
                        K: int | None = None, k_cap: int = 20000, max_doublings: int = 6,
                        check_type_class: int = 64) -> Transcript:
    """One block of the entangled-ensemble preparation protocol.

    The sender measures ``A_k = Dt/(K(1+eps) tr pi_I) U_k pi_I^T U_k^*`` on
    her half of the maximally entangled state of the typical subspace
    (dimension ``Dt``) with the Lüders instrument, the receiver applies
    ``U_k^T`` and the sender finishes with the Uhlmann partial isometry onto
    ``phi_I``.  Unitaries are resampled with doubled ``K`` until the
    randomization condition holds for ``I`` and up to ``check_type_class``
    other strings of the same type.
    """
    if not 0 <= eps < 0.5:
        raise ValueError("need 0 <= eps < 1/2")
    if eps == 0 and K is None:
        raise ValueError("eps = 0 needs an explicit K")
    letters = [int(x) for x in letters]
    n = len(letters)
    m = bip.m
    rb = bip.b_states()
    t = typicality.type_of(letters, m)
    q = np.array(t.distribution)
    info = {"D": bip.cut[1] ** n, "n": n, "delta": delta, "epsilon": eps, "letters": "".join(map(str, letters))}
    n_types = math.comb(n + m - 1, m - 1)
    type_bits = math.log2(n_types)
    if float(np.abs(bip.probs - q).sum()) > delta:
        return Transcript("entangled", info, ABORT, np.zeros((0, 0)), False, type_bits, 0.0, 0.0,
                          {"reason": "atypical type"})

    chain = typicality.pi_operator_chain(rb, letters, delta)
    basis = chain.Pi.basis
    Dt = basis.shape[1]
    rho_q = sum(qi * r for qi, r in zip(q, rb))
    chi = von_neumann_entropy(rho_q) - float(sum(qi * von_neumann_entropy(r) for qi, r in zip(q, rb)))
    P = basis.conj().T @ chain.pi @ basis
    P = (P + P.conj().T) / 2
    trP = float(np.real(np.trace(P)))
    if trP <= 1e-12:
        return Transcript("entangled", info, ABORT, np.zeros((0, 0)), False, type_bits, math.log2(max(Dt, 1)),
                          0.0, {"reason": "empty pi_I"})

    # strings of the same type that the unitary list must also serve
    others = [P]
    if check_type_class:
        seen = {tuple(letters)}
        for perm in _type_class_sample(letters, check_type_class, rng):
            if perm in seen:
                continue
            seen.add(perm)
            others.append(_pi_in_subspace(rb, perm, delta, basis))

    k0 = K if K is not None else min(default_round_size(n, m, Dt, chi, delta, eps), k_cap)
    k_used, us, good = k0, None, False
    for _ in range(max_doublings + 1):
        us = haar_unitary(Dt, rng, size=k_used) if Dt > 1 else np.ones((k_used, 1, 1), complex)
        if _good_choice(us, others, eps):
            good = True
            break
        k_used *= 2
    if not good:
        raise RandomizerError(f"no randomizing list found up to K={k_used // 2}")

    # measurement on Phi over the typical subspace, in subspace coordinates
    coef = np.eye(Dt) / math.sqrt(Dt)
    scale = Dt / (k_used * (1 + eps) * trP)
    ak = scale * np.einsum("kab,bc,kdc->kad", us, P.T, us.conj())
    a_fail = np.eye(Dt) - ak.sum(axis=0)
    probs = np.real(np.einsum("kaa->k", ak)) / Dt
    p_fail = max(0.0, 1.0 - probs.sum())
    outcome = int(rng.choice(k_used + 1, p=np.append(probs, p_fail) / (probs.sum() + p_fail)))

    cbits = math.log2(k_used + 1) + type_bits
    ebits = math.log2(Dt)
    extra = {"K": k_used, "Dt": Dt, "trace_pi": trP, "chi_Q": chi, "p_fail": p_fail,
             "fail_min_eig": float(np.linalg.eigvalsh((a_fail + a_fail.conj().T) / 2).min()),
             "large_ok": chain.large_ok, "small_ok": chain.small_ok,
             "rate_cbits": chi, "rate_ebits": von_neumann_entropy(rho_q)}
    if outcome == k_used:
        return Transcript("entangled", info, FAILURE, np.eye(Dt) / Dt, False, cbits, ebits, 0.0, extra)

    # Lüders update: coefficient matrix sqrt(A_k) C, receiver applies U_k^T (C -> C U_k)
    w, v = np.linalg.eigh(ak[outcome])
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    c = sq @ coef @ us[outcome]
    c = c / np.linalg.norm(c)
    rho_b_sub = (c.conj().T @ c).T
    full_b = basis @ c.T  # columns: sender basis; receiver in the full space
    c_full = full_b.T  # rows: sender's typical coordinates, cols: receiver full space
    target = _global_state(bip, letters)
    mmat = c_full @ target.conj().T
    fid = float(np.linalg.svd(mmat, compute_uv=False).sum() ** 2)
    rho_b = basis @ rho_b_sub @ basis.conj().T
    extra["receiver_fidelity"] = fidelity(rho_b, target.T @ target.conj())
    extra["pi_normalized_error"] = trace_distance(rho_b, chain.pi / np.real(np.trace(chain.pi)))
    extra["fidelity_floor"] = 1 - math.sqrt(8 * max(0.0, 1 - trP))
    return Transcript("entangled", info, outcome, rho_b, True, cbits, ebits, fid, extra)


def _type_class_sample(letters: Sequence[int], limit: int, rng: np.random.Generator):
    """Up to ``limit`` strings with the same letter counts (exhaustive when small)."""
    from itertools import permutations

    n = len(letters)
    if math.factorial(n) <= 5040:
        out = sorted(set(permutations(letters)))
        if len(out) <= limit:
            return out
        idx = rng.choice(len(out), size=limit, replace=False)
        return [out[i] for i in sorted(idx)]
    return [tuple(np.asarray(letters)[rng.permutation(n)]) for _ in range(limit)]
