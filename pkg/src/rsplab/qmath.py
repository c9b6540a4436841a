"""Dense linear algebra and quantum-information functionals.

States are plain numpy arrays: a pure state is a complex vector, a density
operator a Hermitian matrix.  Multipartite states carry their register
layout in :class:`LabeledState`.  All entropies are in bits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-10
# eigenvalues below this are treated as exact zeros in x log x
EIG_CLAMP = 1e-12


class DimensionError(ValueError):
    pass


class LabelError(KeyError):
    pass


# --------------------------------------------------------------------------
# validation


def as_pure_state(psi, atol: float = ATOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if psi.size < 1:
        raise DimensionError("a pure state needs dimension >= 1")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > atol:
        raise ValueError(f"state vector not normalized (norm={norm!r})")
    return psi


def as_density(rho, atol: float = ATOL) -> np.ndarray:
    """Coerce to a density matrix, promoting vectors to projectors."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        psi = as_pure_state(rho, atol)
        return np.outer(psi, psi.conj())
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density operator must be square, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > atol:
        raise ValueError("density operator not Hermitian")
    if abs(np.trace(rho).real - 1.0) > atol:
        raise ValueError("density operator trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def is_unitary(u, atol: float = ATOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) <= atol)


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def _rank_one_vector(rho: np.ndarray, tol: float = 1e-12):
    """Return the unit vector of a rank-1 density operator, else None."""
    w, v = np.linalg.eigh(rho)
    if w[-1] >= 1.0 - tol and np.all(np.abs(w[:-1]) <= tol):
        return v[:, -1]
    return None


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


# --------------------------------------------------------------------------
# distance measures


def fidelity(rho, sigma) -> float:
    """Squared Uhlmann fidelity ``||sqrt(rho) sqrt(sigma)||_1**2``.

    Vectors are accepted for pure inputs; if either argument is rank one the
    overlap shortcut ``<psi|sigma|psi>`` is used.
    """
    rho_arr = np.asarray(rho, dtype=complex)
    sigma_arr = np.asarray(sigma, dtype=complex)
    d_rho = rho_arr.shape[0]
    d_sigma = sigma_arr.shape[0]
    if d_rho != d_sigma:
        raise DimensionError(f"dimension mismatch: {d_rho} vs {d_sigma}")

    if rho_arr.ndim == 1 and sigma_arr.ndim == 1:
        return float(min(1.0, abs(np.vdot(rho_arr, sigma_arr)) ** 2))
    if rho_arr.ndim == 1:
        return float(np.clip(np.real(np.vdot(rho_arr, sigma_arr @ rho_arr)), 0.0, 1.0))
    if sigma_arr.ndim == 1:
        return fidelity(sigma_arr, rho_arr)

    for a, b in ((rho_arr, sigma_arr), (sigma_arr, rho_arr)):
        vec = _rank_one_vector(a)
        if vec is not None:
            return float(np.clip(np.real(np.vdot(vec, b @ vec)), 0.0, 1.0))

    s = _psd_sqrt(rho_arr)
    inner = s @ sigma_arr @ s
    w = np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None)
    return float(np.clip(np.sum(np.sqrt(w)) ** 2, 0.0, 1.0))


def trace_norm(a) -> float:
    a = np.asarray(a, dtype=complex)
    if np.allclose(a, a.conj().T, atol=1e-13):
        return float(np.sum(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2))))
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def trace_distance(rho, sigma) -> float:
    """Normalized trace distance ``0.5 * ||rho - sigma||_1``."""
    rho_arr = np.asarray(rho, dtype=complex)
    sigma_arr = np.asarray(sigma, dtype=complex)
    if rho_arr.shape[0] != sigma_arr.shape[0]:
        raise DimensionError(f"dimension mismatch: {rho_arr.shape[0]} vs {sigma_arr.shape[0]}")
    if rho_arr.ndim == 1:
        rho_arr = projector(rho_arr)
    if sigma_arr.ndim == 1:
        sigma_arr = projector(sigma_arr)
    return float(min(1.0, 0.5 * trace_norm(rho_arr - sigma_arr)))


# --------------------------------------------------------------------------
# entropies


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    p = p[p > EIG_CLAMP]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho) -> float:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return 0.0
    w = np.clip(np.linalg.eigvalsh(rho), 0.0, 1.0)
    return shannon_entropy(w)


def binary_entropy(p: float) -> float:
    return shannon_entropy([p, 1.0 - p])


# --------------------------------------------------------------------------
# multipartite states


@dataclass(frozen=True)
class LabeledState:
    """Density operator on an ordered tensor product of named registers.

    ``classical_labels`` lists registers promised to be diagonal in the
    computational basis; the promise is checked on construction.
    """

    parts: tuple[tuple[str, int], ...]
    matrix: np.ndarray
    classical_labels: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        parts = tuple((str(lbl), int(d)) for lbl, d in self.parts)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "classical_labels", frozenset(self.classical_labels))
        labels = [lbl for lbl, _ in parts]
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate labels in {labels}")
        if any(d < 1 for _, d in parts):
            raise DimensionError("register dimensions must be >= 1")
        total = int(np.prod([d for _, d in parts], dtype=np.int64)) if parts else 1
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (total, total):
            raise DimensionError(f"matrix shape {mat.shape} does not match dims {self.dims}")
        object.__setattr__(self, "matrix", mat)
        unknown = self.classical_labels - set(labels)
        if unknown:
            raise LabelError(f"classical labels not among parts: {sorted(unknown)}")
        for lbl in self.classical_labels:
            if _coherence(mat, self.dims, self.index(lbl)) > ATOL:
                raise ValueError(f"register {lbl!r} is not diagonal in the computational basis")

    @property
    def labels(self) -> list[str]:
        return [lbl for lbl, _ in self.parts]

    @property
    def dims(self) -> list[int]:
        return [d for _, d in self.parts]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"unknown label {label!r}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    @classmethod
    def from_pure(cls, parts, psi, classical_labels=()) -> "LabeledState":
        return cls(tuple(parts), projector(psi), frozenset(classical_labels))


def _coherence(mat: np.ndarray, dims: Sequence[int], k: int) -> float:
    """Largest entry of ``mat`` that is off-diagonal on register ``k``."""
    n = len(dims)
    t = np.moveaxis(mat.reshape(list(dims) * 2), [k, n + k], [0, 1])
    d = dims[k]
    off = ~np.eye(d, dtype=bool)
    return float(np.max(np.abs(t[off]), initial=0.0))


def _partial_trace_matrix(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not in ``keep`` (indices, kept in given order)."""
    n = len(dims)
    t = np.asarray(mat).reshape(list(dims) + list(dims))
    keep = list(keep)
    drop = [i for i in range(n) if i not in keep]
    # bring kept axes to front (same order on both sides), dropped to back
    perm = keep + drop
    t = t.transpose(perm + [n + i for i in perm])
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64)) if keep else 1
    dd = int(np.prod([dims[i] for i in drop], dtype=np.int64)) if drop else 1
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def partial_trace(state: LabeledState, keep: Iterable[str]) -> LabeledState:
    """Reduce ``state`` to the registers in ``keep``.

    Kept registers appear in their original declaration order.
    """
    keep = set(keep)
    for lbl in keep:
        state.index(lbl)
    kept_idx = [i for i, lbl in enumerate(state.labels) if lbl in keep]
    mat = _partial_trace_matrix(state.matrix, state.dims, kept_idx)
    parts = tuple(state.parts[i] for i in kept_idx)
    classical = state.classical_labels & keep
    return LabeledState(parts, mat, classical)


def reduced_entropy(state: LabeledState, labels: Iterable[str]) -> float:
    labels = set(labels)
    if not labels:
        return 0.0
    return von_neumann_entropy(partial_trace(state, labels).matrix)


def _check_disjoint(*sets):
    seen: set[str] = set()
    for s in sets:
        if seen & s:
            raise LabelError(f"label sets overlap on {sorted(seen & s)}")
        seen |= s


def mutual_info(state: LabeledState, x: Iterable[str], y: Iterable[str]) -> float:
    """``S(X:Y) = S(X) + S(Y) - S(XY)`` in bits."""
    x, y = set(x), set(y)
    _check_disjoint(x, y)
    return reduced_entropy(state, x) + reduced_entropy(state, y) - reduced_entropy(state, x | y)


def cond_mutual_info(state: LabeledState, x: Iterable[str], y: Iterable[str], c: Iterable[str]) -> float:
    """``S(X:Y|C) = S(XC) + S(YC) - S(XYC) - S(C)`` in bits."""
    x, y, c = set(x), set(y), set(c)
    _check_disjoint(x, y, c)
    return (
        reduced_entropy(state, x | c)
        + reduced_entropy(state, y | c)
        - reduced_entropy(state, x | y | c)
        - reduced_entropy(state, c)
    )


def cond_entropy(state: LabeledState, x: Iterable[str], c: Iterable[str]) -> float:
    x, c = set(x), set(c)
    _check_disjoint(x, c)
    return reduced_entropy(state, x | c) - reduced_entropy(state, c)


def max_entangled(d: int) -> np.ndarray:
    """``|Phi_d> = d**-0.5 * sum_j |j>|j>`` as a vector of length d*d."""
    if d < 1:
        raise DimensionError("max_entangled needs d >= 1")
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def tensor(*ops) -> np.ndarray:
    out = np.ones((1,) * np.asarray(ops[0]).ndim, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def schmidt_coefficients(psi, dims: tuple[int, int]) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(dims)
    return np.linalg.svd(psi, compute_uv=False)


# --------------------------------------------------------------------------
# JSON form {dims, re, im}


def state_to_json(state, dims: Sequence[int] | None = None) -> dict:
    arr = np.asarray(state, dtype=complex)
    if dims is None:
        dims = [arr.shape[0]]
    return {"dims": [int(d) for d in dims], "re": arr.real.tolist(), "im": arr.imag.tolist()}


def state_from_json(obj: dict) -> tuple[np.ndarray, list[int]]:
    arr = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    dims = [int(d) for d in obj["dims"]]
    if int(np.prod(dims)) != arr.shape[0]:
        raise DimensionError(f"dims {dims} inconsistent with array of shape {arr.shape}")
    return arr, dims


def dumps_state(state, dims=None) -> str:
    return json.dumps(state_to_json(state, dims))


def loads_state(text: str) -> tuple[np.ndarray, list[int]]:
    return state_from_json(json.loads(text))
