"""Acceptance criteria 1-12.

Each test is named ``test_criterion_N_*``; ``conftest.py`` folds the
outcomes into one PASS/FAIL line per criterion at the end of the run.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from rsplab import protocols as P
from rsplab import randomize, sampling, tradeoff as T, typicality as Ty
from rsplab.qmath import cond_mutual_info, max_entangled, mutual_info, shannon_entropy
from rsplab.sampling import haar_state, make_rng

KET0 = np.array([1, 0], complex)
KET1 = np.array([0, 1], complex)
PLUS = np.array([1, 1], complex) / math.sqrt(2)


def four_sigma(p, n):
    return 4 * math.sqrt(p * (1 - p) / n)


# --------------------------------------------------------------------------
# 1. exactness of Pi with the Weyl set


def test_criterion_1_pi_weyl_exact():
    t0 = time.perf_counter()
    r = make_rng(101)
    for D in (2, 4, 8):
        uset = randomize.weyl_set(D)
        runs = 0
        for psi in haar_state(D, r, size=10):
            res = P.run_protocol_pi_batch(psi, uset, 1000, r)
            assert res.success.all()
            assert res.trace_distances.max() <= 1e-9
            runs += res.trials
        assert runs == 10_000
    assert time.perf_counter() - t0 < 60


# --------------------------------------------------------------------------
# 2. failure rate of Pi with a Haar set


def test_criterion_2_pi_failure_rate():
    t0 = time.perf_counter()
    uset, rep = randomize.build_randomizing_set(2, 0.5, seed=202)
    assert rep.passed and uset.K == 5058
    res = P.run_protocol_pi_batch(haar_state(2, make_rng(203)), uset, 100_000, make_rng(204))
    fail = 1 - res.success_rate
    assert abs(fail - 1 / 3) <= four_sigma(1 / 3, res.trials)
    assert res.trace_distances[res.success].max() <= 1e-9
    assert res.extra["p_fail"] == pytest.approx(1 / 3, abs=1e-12)
    assert time.perf_counter() - t0 < 600


# --------------------------------------------------------------------------
# 3. column method


@pytest.mark.parametrize("D", [2, 4])
@pytest.mark.parametrize("K", [1, 3, 8])
def test_criterion_3_column_method(D, K):
    trials = 100_000
    psi = haar_state(D, make_rng(300 + 10 * D + K))
    res = P.column_method_batch(psi, D, K, trials, make_rng(301 + 10 * D + K))
    q = 1 / D
    assert abs(res.extra["zero_frequency"] - q) <= four_sigma(q, trials * K)
    pf = (1 - q) ** K
    assert abs((1 - res.success_rate) - pf) <= four_sigma(pf, trials)
    assert res.trace_distances[res.success].max() <= 1e-9
    # receiver state after outcome 0, through the generic partial trace
    _, rho = P.steer_labeled(np.outer(psi.conj(), psi))
    assert oracles.trace_distance(rho, np.outer(psi, psi.conj())) <= 1e-9


# --------------------------------------------------------------------------
# 4. resource headline


@pytest.mark.parametrize("eps", [0.5, 0.1])
def test_criterion_4_cbits_per_qubit(eps):
    vals = []
    for D in range(2, 65):
        row = P.pi_rate_per_qubit(D, eps)
        direct = math.log2((10 / eps) ** 2 * D * math.log2(20 * D / eps)) / math.log2(D)
        assert row["analytic"] == pytest.approx(direct, abs=1e-12)
        assert row["finite"] >= row["analytic"]
        assert row["ebits"] == 1.0
        vals.append(row["analytic"])
    vals = np.array(vals)
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] > 1
    rho, _ = stats.spearmanr(np.arange(2, 65), vals)
    assert rho == pytest.approx(-1.0)


# --------------------------------------------------------------------------
# 5. randomization


def test_criterion_5_weyl_exact():
    r = make_rng(501)
    for D in range(1, 6):
        w = randomize.weyl_set(D)
        for _ in range(100):
            rho = oracles.rand_density(D, r)
            assert np.max(np.abs(oracles.twirl(w.unitaries, rho) - np.eye(D) / D)) <= 1e-10
        assert randomize.verify_randomizing(w, rng=r).dev_max <= 1e-10


@pytest.mark.parametrize("D", [2, 4])
def test_criterion_5_haar_sets_pass(D):
    uset, rep = randomize.build_randomizing_set(D, 0.5, seed=505, max_retries=3)
    assert uset.K == randomize.randomizing_set_size(D, 0.5)
    assert rep.passed and rep.heuristic
    assert uset.provenance["attempts"] - 1 <= 3


# --------------------------------------------------------------------------
# 6 and 7. trade-off solver, oracle and curve properties


def _qubit_ensembles():
    r = make_rng(600)
    out = {"zero_plus": T.Ensemble([0.5, 0.5], [KET0, PLUS])}
    out["skew_zero_plus"] = T.Ensemble([0.8, 0.2], [KET0, PLUS])
    theta = math.pi / 8
    out["close_pair"] = T.Ensemble([0.5, 0.5], [KET0, [math.cos(theta), math.sin(theta)]])
    out["random_a"] = T.Ensemble([0.6, 0.4], haar_state(2, r, size=2))
    out["random_b"] = T.Ensemble([0.3, 0.7], haar_state(2, r, size=2))
    return out


ENSEMBLES = _qubit_ensembles()
_CURVES = {}


def _curve(name):
    if name not in _CURVES:
        ens = ENSEMBLES[name]
        lo = T.eval_rsp_point(ens, T.trivial_channel(2))[0]
        hi = shannon_entropy(ens.probs)
        rs = np.linspace(lo, hi, 10)
        _CURVES[name] = (rs, T.curve_sweep(ens, "rsp", rs, T.SolverParams(seed=6)))
    return _CURVES[name]


def _chain_residual(ens, channel):
    om = T.assemble_omega(ens, channel)
    return abs(mutual_info(om, {"A"}, {"B", "C"}) - mutual_info(om, {"A"}, {"C"})
               - cond_mutual_info(om, {"A"}, {"B"}, {"C"}))


@pytest.mark.parametrize("name", list(ENSEMBLES))
def test_criterion_6_solver_matches_oracle(name):
    ens = ENSEMBLES[name]
    rs, pts = _curve(name)
    for R, pt in zip(rs, pts):
        o = T.brute_force_oracle(ens, float(R) + 1e-9, "rsp", grid_step=0.05)
        assert pt.value <= o + 1e-9
        assert o - pt.value <= 2 * 0.05 * 3
        assert _chain_residual(ens, pt.channel) <= 1e-9
    # right endpoint R = S(A)
    assert pts[-1].value <= 1e-3


def test_criterion_6_fine_grid_spot_points():
    ens = ENSEMBLES["zero_plus"]
    lo = T.eval_rsp_point(ens, T.trivial_channel(2))[0]
    for R in (lo + 0.05, 0.8, 0.95):
        s = T.solve_curve(ens, R, "rsp").value
        o = T.brute_force_oracle(ens, R, "rsp", grid_step=0.01)
        assert s <= o + 1e-9 and o - s <= 0.05


def test_criterion_6_qct_curve_and_chain_rule():
    ens = ENSEMBLES["zero_plus"]
    for R in np.linspace(0.0, 1.0, 10):
        pt = T.solve_curve(ens, float(R), "qct")
        o = T.brute_force_oracle(ens, float(R) + 1e-9, "qct", grid_step=0.05)
        assert pt.value <= o + 1e-9 and o - pt.value <= 0.3
        assert _chain_residual(ens, pt.channel) <= 1e-9
    assert T.solve_curve(ens, 1.0, "qct").value <= 1e-3


@pytest.mark.parametrize("name", list(ENSEMBLES))
def test_criterion_7_monotone_and_convex(name):
    _, pts = _curve(name)
    tol = T.SolverParams().tol
    v = np.array([p.value for p in pts])
    assert np.all(np.isfinite(v))
    assert np.all(np.diff(v) <= tol)
    assert np.all(v[1:-1] <= (v[:-2] + v[2:]) / 2 + tol)
    assert v[0] - v[-1] > 0


def test_criterion_7_additivity_product_channels():
    ens = ENSEMBLES["zero_plus"]
    params = T.SolverParams(starts=8, seed=7)
    for R in (1.3, 1.7):
        rep = T.additivity_check(ens, ens, R, "rsp", splits=11, params=params)
        assert rep.upper_ok
        assert rep.lhs <= rep.rhs + 1e-9
        # the exhibited product channel on E x E attains N(E,R1) + N(E,R2) exactly
        assert rep.product_value == pytest.approx(rep.rhs, abs=1e-9)


# --------------------------------------------------------------------------
# 8. entangled endpoints


def _bipartite_ensembles():
    r = make_rng(800)
    a = T.BipartiteEnsemble([0.5, 0.5], [max_entangled(2), np.kron(KET0, PLUS)], (2, 2))
    th = 0.4
    part = math.cos(th) * np.kron(KET0, KET0) + math.sin(th) * np.kron(KET1, KET1)
    b = T.BipartiteEnsemble([0.7, 0.3], [part, np.kron(PLUS, KET1)], (2, 2))
    c = T.BipartiteEnsemble([0.5, 0.3, 0.2], haar_state(4, r, size=3), (2, 2))
    return {"bell_and_product": a, "partial_and_product": b, "random_three": c}


BIPARTITE = _bipartite_ensembles()


@pytest.mark.parametrize("name", list(BIPARTITE))
def test_criterion_8_entangled_endpoints(name):
    bip = BIPARTITE[name]
    ep = T.entangled_endpoints(bip)
    R0 = ep["R_start"] + 0.01
    s = T.solve_curve(bip, R0, "entangled").value
    # three-member ensembles need a coarser lattice to stay within the oracle budget
    o = T.brute_force_oracle(bip, R0, "entangled", grid_step=0.05 if bip.m <= 2 else 0.1)
    assert abs(s - ep["E_start"]) <= 0.05
    assert abs(o - ep["E_start"]) <= 0.05
    assert s <= o + 1e-9
    params = T.SolverParams(starts=8, seed=8)
    for R in np.linspace(ep["R_start"], ep["R_floor"] + 0.2, 6):
        assert T.solve_curve(bip, float(R), "entangled", params).value >= ep["E_floor"] - 1e-6


# --------------------------------------------------------------------------
# 9. typicality


def test_criterion_9_type_sandwich():
    for size in (1, 2, 3):
        for n in range(1, 11):
            for t in Ty.all_types(size, n):
                assert all(Ty.type_class_sandwich(t))


def test_criterion_9_typical_projector_bounds():
    rho = np.diag([0.75, 0.25])
    delta, eps = 0.4, 0.1
    n0 = Ty.typicality_threshold(rho, delta, eps, 10)
    assert n0 is not None
    for n in range(1, 11):
        b = Ty.typical_bounds(rho, n, delta, eps)
        rank, prob = oracles.typical_rank([0.75, 0.25], n, delta)
        assert (b.rank, b.probability) == (rank, pytest.approx(prob, abs=1e-12))
        assert b.upper_ok
        if n >= n0:
            assert b.prob_ok and b.lower_ok


def test_criterion_9_pi_operator_chain():
    states = [np.diag([0.85, 0.15]), np.full((2, 2), 0.5) * 0.8 + 0.1 * np.eye(2)]
    r = make_rng(900)
    for n in range(1, 9):
        for _ in range(2):
            letters = list(r.permutation([0] * (n // 2) + [1] * (n - n // 2)))
            c = Ty.pi_operator_chain(states, letters, 0.4)
            assert c.large_ok, (n, c.trace)
            assert c.small_ok, (n, c.small_margin)


# --------------------------------------------------------------------------
# 10. concentration


@pytest.mark.parametrize("p,k,eps", [(1, 64, 0.5), (4, 64, 0.3), (4, 16, 0.5)])
def test_criterion_10_overlap_concentration(p, k, eps):
    trials = 10_000
    freq = sampling.overlap_concentration_frequency(8, p, k, eps, trials, make_rng(1000 + p + k))
    bound = sampling.overlap_concentration_bound(k, p, eps)
    b = min(bound, 1.0)
    assert freq <= bound + 4 * math.sqrt(b * (1 - b) / trials)


def test_criterion_10_operator_chernoff():
    rep = Ty.operator_chernoff_check(Ty.rank_one_projector_sampler(2), np.eye(2) / 2, 100, 0.5, 10_000,
                                     make_rng(1010))
    assert not rep.vacuous and rep.bound < 0.01
    assert rep.passed


def test_criterion_10_gentle_measurement():
    r = make_rng(1020)
    for _ in range(1000):
        d = int(r.integers(2, 9))
        rho = oracles.rand_density(d, r, rank=int(r.integers(1, d + 1)))
        X = oracles.rand_density(d, r)
        X = X / np.linalg.eigvalsh(X).max()
        assert Ty.gentle_measurement_check(rho, X)[2]


def test_criterion_10_rate_function_and_taylor():
    for var in (0.5, 1.0, 2.0):
        for x in np.linspace(0.05, 5.0, 34) * var:
            closed = sampling.rate_function_gaussian_square(float(x), var)
            assert closed == pytest.approx(sampling.rate_function_numeric(float(x), var), abs=1e-6)
    assert sampling.taylor_lower_bound_margin(10_000) >= 0.0


# --------------------------------------------------------------------------
# 11. obliviousness


def test_criterion_11_pi_weyl_exactly_oblivious():
    for D in (2, 4):
        for psi in haar_state(D, make_rng(1100 + D), size=5):
            assert P.obliviousness_gap_pi(psi, randomize.weyl_set(D)).gap <= 1e-9


def test_criterion_11_pi_haar_gap():
    uset, _ = randomize.build_randomizing_set(2, 0.5, seed=202)
    psi = haar_state(2, make_rng(1110))
    mc = P.obliviousness_gap_pi(psi, uset, trials=100_000, rng=make_rng(1111))
    assert mc.gap <= 0.5 + 4 * mc.sigma
    exact = P.obliviousness_gap_pi(psi, uset)
    assert exact.gap <= 0.5
    assert abs(exact.gap - mc.gap) <= 4 * mc.sigma + 1e-12


def test_criterion_11_column_gap():
    D, K = 2, 3
    eps = (1 - 1 / D) ** K
    mc = P.column_obliviousness_gap(D, K, trials=200_000, rng=make_rng(1120))
    exact = P.column_obliviousness_gap(D, K)
    assert abs(exact.gap - mc.gap) <= 4 * mc.sigma
    assert mc.gap <= eps + 4 * mc.sigma


# --------------------------------------------------------------------------
# 12. causality and description bounds


def test_criterion_12_causality_bound():
    for D in (2, 3, 4, 16, 64, 1024):
        for F in (1e-3, 0.1, 0.5, 0.9, 0.99, 1.0):
            assert T.causality_bound(D, F) == pytest.approx(math.log2(D) + math.log2(F), abs=1e-12)
    assert T.causality_bound(2, 0.5) == 0.0
    assert T.causality_bound(4, 0.9) == pytest.approx(1.847996906554950, abs=1e-12)


def test_criterion_12_description_bound():
    for D in (8, 64, 256, 1024):
        for S in (1, D // 4, D // 2):
            q = S / D
            for F in (q + 0.01, 0.5 + q / 2, 0.99, 1.0):
                if not q < F <= 1:
                    continue
                direct = q * (1 - q) * D / 6 - 2 * math.log2(D) + math.log2(1 - math.sqrt((1 - F) / (1 - q)))
                assert randomize.universal_description_bound(D, S, F) == pytest.approx(direct, abs=1e-12)
    assert randomize.universal_description_bound(64, 32, 1.0) == pytest.approx(-28 / 3, abs=1e-12)
    assert randomize.universal_description_bound(1024, 512, 0.99) == pytest.approx(22.4466888594953, abs=1e-12)
