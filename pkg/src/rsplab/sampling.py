"""Random sources and large-deviation rate functions.

Every stochastic routine takes a ``numpy.random.Generator``.  Use
:func:`make_rng` to get one from a ``(seed, stream)`` pair; distinct streams
are statistically independent and reproducible across platforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

LN2 = math.log(2.0)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed`` on stream ``stream``."""
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Spawn ``n`` independent child generators."""
    return list(rng.spawn(n))


@dataclass(frozen=True)
class GaussianVector:
    vector: np.ndarray
    variance: float


def gaussian_complex_vector(d: int, variance: float, rng: np.random.Generator, size=None):
    """Symmetric complex Gaussian vector with ``E<G|G> = variance``.

    Each component is ``N_C(0, variance/d)``: real and imaginary parts are
    independent with variance ``variance/(2d)`` each.  With ``size`` given,
    returns a raw array of shape ``(*size, d)`` instead of a GaussianVector.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if not variance > 0:
        raise ValueError("variance must be > 0")
    shape = (d,) if size is None else tuple(np.atleast_1d(size)) + (d,)
    scale = math.sqrt(variance / (2.0 * d))
    g = rng.normal(scale=scale, size=shape) + 1j * rng.normal(scale=scale, size=shape)
    if size is None:
        return GaussianVector(g, float(variance))
    return g


def haar_unitary(d: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-distributed unitary via QR of a Ginibre matrix.

    The phases of diag(R) are absorbed into Q, which makes the law exactly
    Haar.  ``size`` draws a stack of shape ``(size, d, d)``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    n = 1 if size is None else int(size)
    z = (rng.normal(size=(n, d, d)) + 1j * rng.normal(size=(n, d, d))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=1, axis2=2)
    phases = diag / np.abs(diag)
    u = q * phases[:, None, :]
    return u[0] if size is None else u


def haar_state(d: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniformly random unit vector(s) in C^d."""
    g = gaussian_complex_vector(d, 1.0, rng, size=1 if size is None else size)
    g = g / np.linalg.norm(g, axis=-1, keepdims=True)
    return g[0] if size is None else g


# --------------------------------------------------------------------------
# rate functions (natural units)


def rate_function_gaussian_square(x: float, variance: float) -> float:
    """Cramér rate function of ``X = Y**2`` with ``Y ~ N(0, variance)``, in nats.

    ``0.5 * (x/s - 1 - ln(x/s))`` for ``x > 0`` and ``inf`` otherwise.
    """
    if not variance > 0:
        raise ValueError("variance must be > 0")
    if x <= 0:
        return math.inf
    r = x / variance
    return 0.5 * (r - 1.0 - math.log(r))


def log_mgf_gaussian_square(y: float, variance: float) -> float:
    if y >= 0.5 / variance:
        return math.inf
    return -0.5 * math.log1p(-2.0 * y * variance)


def rate_function_numeric(x: float, variance: float) -> float:
    """Legendre transform ``sup_y [y x - Lambda(y)]`` evaluated numerically."""
    if x <= 0:
        return math.inf
    y_max = 0.5 / variance

    def neg(y):
        return -(y * x - log_mgf_gaussian_square(y, variance))

    # the maximizer lies in (-inf, y_max); bracket generously on the left
    lo = -50.0 / min(x, variance)
    res = minimize_scalar(neg, bounds=(lo, y_max * (1 - 1e-12)), method="bounded",
                          options={"xatol": 1e-13, "maxiter": 2000})
    return float(-res.fun)


def cramer_tail_bound(n: int, a: float, variance: float) -> float:
    """Upper-tail Cramér bound for the mean of ``n`` squared Gaussians.

    The base-2 form ``exp2(-n inf_{x>=a} L*(x) / ln 2)`` equals
    ``exp(-n inf L*)``; the infimum over ``x >= a`` is ``L*(a)`` above the
    mean and 0 below it.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rate = rate_function_gaussian_square(a, variance) if a > variance else 0.0
    return float(2.0 ** (-n * rate / LN2))


def empirical_tail(n: int, a: float, variance: float, trials: int, rng: np.random.Generator) -> float:
    """Monte Carlo frequency of ``mean(X_1..X_n) >= a``."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    hits = 0
    chunk = max(1, 2_000_000 // n)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        y = rng.normal(scale=math.sqrt(variance), size=(m, n))
        hits += int(np.count_nonzero((y * y).mean(axis=1) >= a))
        done += m
    return hits / trials


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def taylor_lower_bound_margin(n_points: int = 10_000) -> float:
    """Smallest value of ``xi - ln(1+xi) - xi**2/6`` on a grid of [-1, 1]."""
    xi = np.linspace(-1.0, 1.0, n_points)
    with np.errstate(divide="ignore"):
        lhs = xi - np.log1p(xi)
    return float(np.min(lhs - xi * xi / 6.0))


# --------------------------------------------------------------------------
# concentration of Haar overlaps


def overlap_concentration_bound(k: int, p: int, eps: float) -> float:
    """Tail bound ``2 exp(-K p eps**2 / 6)`` for averaged Haar overlaps.

    Natural exponential: this is what the Gaussian comparison argument
    yields, and it is smaller than the base-2 reading of the same formula.
    """
    return 2.0 * math.exp(-k * p * eps * eps / 6.0)


def overlap_concentration_frequency(d: int, p: int, k: int, eps: float, trials: int,
                                    rng: np.random.Generator) -> float:
    """Frequency of ``|mean_k tr(U_k phi U_k^* P) - p/d| >= eps p/d``.

    With ``phi = |0><0|`` and ``P`` the projector onto the first ``p`` basis
    vectors, ``tr(U phi U^* P)`` is the weight of the first column of ``U`` on
    those coordinates.  The first column of a Haar unitary is a uniform unit
    vector, so it is sampled directly.
    """
    if not 1 <= p <= d:
        raise ValueError("need 1 <= p <= d")
    hits = 0
    chunk = max(1, 200_000 // k)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        cols = haar_state(d, rng, size=(m, k))
        w = np.sum(np.abs(cols[..., :p]) ** 2, axis=-1).mean(axis=1)
        hits += int(np.count_nonzero(np.abs(w - p / d) >= eps * p / d))
        done += m
    return hits / trials
