"""Independent reference implementations used to cross-check the library.

These avoid the library's code paths on purpose: matrix square roots come
from ``scipy.linalg.sqrtm``, partial traces from explicit index loops,
entropies from ``scipy.stats.entropy`` and so on.
"""
import itertools
import math

import numpy as np
import scipy.linalg
import scipy.stats


def rand_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def rand_state(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def fidelity(rho, sigma):
    s = scipy.linalg.sqrtm(rho)
    return float(np.real(np.trace(scipy.linalg.sqrtm(s @ sigma @ s))) ** 2)


def trace_distance(rho, sigma):
    return 0.5 * float(np.linalg.svd(rho - sigma, compute_uv=False).sum())


def entropy(rho):
    w = np.clip(np.linalg.eigvalsh(rho), 0, None)
    return float(scipy.stats.entropy(w, base=2))


def partial_trace(rho, dims, keep):
    """Explicit-loop partial trace keeping the (sorted) subsystems ``keep``."""
    n = len(dims)
    keep = sorted(keep)
    gone = [i for i in range(n) if i not in keep]
    dk = [dims[i] for i in keep]
    dg = [dims[i] for i in gone]
    out = np.zeros((int(np.prod(dk)), int(np.prod(dk))), dtype=complex)
    t = rho.reshape(list(dims) * 2)
    for a in itertools.product(*[range(d) for d in dk]):
        for b in itertools.product(*[range(d) for d in dk]):
            s = 0
            for g in itertools.product(*[range(d) for d in dg]):
                ia, ib = [0] * n, [0] * n
                for pos, i in enumerate(keep):
                    ia[i], ib[i] = a[pos], b[pos]
                for pos, i in enumerate(gone):
                    ia[i] = ib[i] = g[pos]
                s += t[tuple(ia) + tuple(ib)]
            out[np.ravel_multi_index(a, dk), np.ravel_multi_index(b, dk)] = s
    return out


def twirl(unitaries, rho):
    acc = np.zeros_like(rho, dtype=complex)
    for u in unitaries:
        acc += u @ rho @ u.conj().T
    return acc / len(unitaries)


def omega_matrix(probs, b_states, channel):
    """``sum_ij p_i P_ij |i><i| x rho_i x |j><j|`` with explicit kron loops."""
    m, J = channel.shape
    d = b_states[0].shape[0]
    out = np.zeros((m * d * J, m * d * J), dtype=complex)
    for i in range(m):
        for j in range(J):
            ei = np.zeros((m, m))
            ei[i, i] = 1
            ej = np.zeros((J, J))
            ej[j, j] = 1
            out += probs[i] * channel[i, j] * np.kron(np.kron(ei, b_states[i]), ej)
    return out


def tradeoff_quantities(probs, b_states, channel):
    """``(S(A:C), S(A:B|C), S(A:BC), S(B|C))`` from explicit reduced states."""
    m, J = channel.shape
    d = b_states[0].shape[0]
    dims = [m, d, J]
    om = omega_matrix(probs, b_states, channel)
    S = lambda keep: entropy(partial_trace(om, dims, keep)) if keep else 0.0  # noqa: E731
    sa, sc = S([0]), S([2])
    sac, sbc, sabc = S([0, 2]), S([1, 2]), S([0, 1, 2])
    return sa + sc - sac, sac + sbc - sabc - sc, sa + sbc - sabc, sbc - sc


def grid_channels(m, J, step):
    """All ``m x J`` stochastic matrices with entries on a ``step`` lattice."""
    N = int(round(1 / step))
    rows = [c for c in itertools.product(range(N + 1), repeat=J) if sum(c) == N]
    for combo in itertools.product(rows, repeat=m):
        yield np.array(combo, dtype=float) / N


def typical_rank(eigs, n, delta):
    """Count of eigen-sequences in the entropy window, by direct products."""
    h = -sum(p * math.log2(p) for p in eigs if p > 0)
    rank, prob = 0, 0.0
    for seq in itertools.product(eigs, repeat=n):
        p = math.prod(seq)
        if p > 0 and abs(-math.log2(p) / n - h) <= delta + 1e-12:
            rank += 1
            prob += p
    return rank, prob


def multinomial(counts):
    n = sum(counts)
    out = math.factorial(n)
    for c in counts:
        out //= math.factorial(c)
    return out
