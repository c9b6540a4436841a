import io
import json
import math

import numpy as np
import pytest
from scipy import stats

import oracles
from rsplab import protocols as P
from rsplab import randomize
from rsplab.qmath import LabeledState, max_entangled
from rsplab.sampling import haar_state, make_rng
from rsplab.tradeoff import BipartiteEnsemble


@pytest.fixture(scope="module")
def haar2():
    uset, rep = randomize.build_randomizing_set(2, 0.5, seed=11)
    assert rep.passed
    return uset


def oracle_steer(element, d):
    phi = max_entangled(d)
    full = np.kron(element, np.eye(d)) @ np.outer(phi, phi.conj())
    rho = oracles.partial_trace(full, [d, d], [1])
    p = np.trace(rho).real
    return p, rho / p


# --------------------------------------------------------------------------
# measurement and steering


@pytest.mark.parametrize("D", [2, 3, 4])
def test_weyl_povm_has_no_failure_element(D):
    psi = haar_state(D, make_rng(D))
    povm = P.rsp_povm(psi, randomize.weyl_set(D))
    assert len(povm) == D * D + 1
    assert np.max(np.abs(povm.elements[-1])) <= 1e-12
    for a in povm.elements[:-1]:
        assert np.linalg.matrix_rank(a, tol=1e-10) == 1


def test_outcome_probability_per_message(haar2):
    psi = haar_state(2, make_rng(1))
    povm = P.rsp_povm(psi, haar2)
    probs, _ = P._steer(povm.elements)
    assert np.allclose(probs[:-1], 1 / (haar2.K * 1.5), atol=1e-14)
    assert probs[-1] == pytest.approx(0.5 / 1.5, abs=1e-12)


def test_singleton_set_is_rejected():
    with pytest.raises(P.NotRandomizingError):
        P.rsp_povm(np.array([1, 0]), randomize.explicit_set(np.eye(2), 0.5))


def test_povm_validation():
    with pytest.raises(ValueError):
        P.Povm(np.stack([np.eye(2), np.eye(2)]))
    with pytest.raises(ValueError):
        P.Povm(np.stack([np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])]))


def test_steering_two_routes():
    r = make_rng(2)
    for d in (2, 3):
        elems = []
        for _ in range(4):
            g = oracles.rand_density(d, r)
            elems.append(g / np.linalg.eigvalsh(g).max() * 0.3)
        probs, states = P._steer(np.array(elems))
        for k, e in enumerate(elems):
            p1, s1 = P.steer_labeled(e)
            p2, s2 = oracle_steer(e, d)
            assert probs[k] == pytest.approx(p1, abs=1e-13) == pytest.approx(p2, abs=1e-13)
            assert np.allclose(states[k], s1, atol=1e-13) and np.allclose(states[k], s2, atol=1e-13)
            assert np.allclose(states[k], e.T / np.trace(e).real, atol=1e-13)


# --------------------------------------------------------------------------
# protocol Pi


@pytest.mark.parametrize("D", [2, 4])
def test_pi_weyl_exact(D):
    psi = haar_state(D, make_rng(D))
    res = P.run_protocol_pi_batch(psi, randomize.weyl_set(D), 2000, make_rng(3))
    assert res.success.all()
    assert res.trace_distances.max() <= 1e-9
    assert res.cbits == math.log2(D * D + 1) and res.ebits == math.log2(D)


def test_pi_decoded_states_match_oracle(haar2):
    psi = haar_state(2, make_rng(4))
    res = P.run_protocol_pi_batch(psi, haar2, 10, make_rng(5))
    povm = P.rsp_povm(psi, haar2)
    target = np.outer(psi, psi.conj())
    for k in range(0, haar2.K, 500):
        _, rho = oracle_steer(povm.elements[k], 2)
        u = haar2.unitaries[k]
        dec = u.T @ rho @ u.conj()
        assert oracles.trace_distance(dec, target) <= 1e-9
        assert np.allclose(res.output_table[k], dec, atol=1e-12)


def test_pi_failure_rate_and_uniformity(haar2):
    psi = haar_state(2, make_rng(6))
    res = P.run_protocol_pi_batch(psi, haar2, 50_000, make_rng(7))
    fail = 1 - res.success_rate
    sigma = math.sqrt((1 / 3) * (2 / 3) / res.trials)
    assert abs(fail - 1 / 3) <= 4 * sigma
    assert res.trace_distances[res.success].max() <= 1e-9
    # messages uniform on success, pooled into 20 bins
    msgs = res.messages[res.success]
    bins = np.bincount(msgs * 20 // haar2.K, minlength=20)
    assert stats.chisquare(bins).pvalue > 0.01


def test_pi_single_transcript(haar2):
    t = P.run_protocol_pi(np.array([1, 0]), haar2, make_rng(8))
    assert t.protocol == "pi"
    assert t.cbits_sent == math.log2(haar2.K + 1) and t.ebits_consumed == 1.0
    if t.success:
        assert isinstance(t.message, int) and t.fidelity_to_target == pytest.approx(1.0)
    else:
        assert t.message == P.FAILURE


def test_resource_counts_do_not_depend_on_outcomes(haar2):
    ts = list(P.run_protocol_pi_batch(np.array([0, 1]), haar2, 300, make_rng(9)).transcripts())
    assert {t.cbits_sent for t in ts} == {math.log2(haar2.K + 1)}
    assert {t.ebits_consumed for t in ts} == {1.0}
    assert any(not t.success for t in ts)
    assert all(t.message == P.FAILURE for t in ts if not t.success)


def test_expected_cost_formula():
    for D, eps in [(2, 0.5), (8, 0.1), (64, 0.01)]:
        c = P.expected_cost_pi_teleport(D, eps)
        assert c["expected_cbits"] == pytest.approx((1 + 2 * eps / (1 + eps)) * math.log2(D), abs=1e-12)
    c = P.expected_cost_pi_teleport(2, 0.5, K=5058)
    assert c["worst_case_cbits"] == pytest.approx(math.log2(5059) + 2)


def test_deterministic_variant_always_prepares(haar2):
    psi = haar_state(2, make_rng(10))
    r = make_rng(11)
    branches = set()
    for _ in range(30):
        t = P.run_pi_deterministic(psi, haar2, r)
        assert t.success and t.fidelity_to_target == pytest.approx(1.0, abs=1e-9)
        branches.add(t.extra["branch"])
    assert branches == {"pi", "teleport"}


def test_jsonl_output(haar2):
    res = P.run_protocol_pi_batch(np.array([1, 0]), haar2, 5, make_rng(12))
    buf = io.StringIO()
    assert P.write_jsonl(res.transcripts(), buf, include_state=True) == 5
    rows = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert {"message", "success", "cbits_sent", "receiver_output"} <= set(rows[0])
    row = res.summary_row()
    assert set(row) >= {"protocol", "D", "params", "success_rate", "mean_fidelity", "cbits", "ebits"}


# --------------------------------------------------------------------------
# column method


def test_column_method_statistics():
    psi = haar_state(2, make_rng(13))
    res = P.column_method_batch(psi, 2, 3, 100_000, make_rng(14))
    zf = res.extra["zero_frequency"]
    assert abs(zf - 0.5) <= 0.005
    fail = 1 - res.success_rate
    assert abs(fail - 0.125) <= 4 * math.sqrt(0.125 * 0.875 / res.trials)
    assert res.trace_distances[res.success].max() <= 1e-9
    assert res.cbits == math.log2(3) and res.ebits == 3.0


def test_column_failed_copy_state():
    psi = haar_state(3, make_rng(15))
    res = P.column_method_batch(psi, 3, 2, 10, make_rng(16))
    expected = (np.eye(3) - np.outer(psi, psi.conj())) / 2
    assert np.allclose(res.extra["failed_copy_state"], expected, atol=1e-12)


def test_column_position_uniform_among_zeros():
    res = P.column_method_batch(np.array([1, 0]), 2, 4, 40_000, make_rng(17))
    counts = np.bincount(res.messages[res.success], minlength=4)
    assert stats.chisquare(counts).pvalue > 0.01


def test_column_single_and_errors():
    t = P.column_method(np.array([0, 1]), 2, 1, make_rng(18))
    assert t.cbits_sent == 0.0 and t.ebits_consumed == 1.0
    with pytest.raises(ValueError):
        P.column_method(np.array([0, 1]), 2, 0, make_rng(18))


# --------------------------------------------------------------------------
# teleportation


def test_teleport_plus_state():
    t = P.teleport_state(np.array([1, 1]) / math.sqrt(2), make_rng(19))
    assert t.cbits_sent == 2 and t.ebits_consumed == 1
    assert np.allclose(t.receiver_output, np.full((2, 2), 0.5), atol=1e-12)
    assert np.allclose(t.extra["outcome_probs"], 0.25)


def test_teleport_half_of_bell_pair():
    bell = LabeledState.from_pure((("R", 2), ("S", 2)), max_entangled(2))
    r = make_rng(20)
    for _ in range(8):
        t = P.teleport(bell, "S", r)
        assert t.fidelity_to_target == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(t.extra["joint_output"].matrix, bell.matrix, atol=1e-12)


def test_teleport_dimension_four():
    psi = haar_state(4, make_rng(21))
    t = P.teleport_state(psi, make_rng(22))
    assert t.cbits_sent == 4 and t.ebits_consumed == 2
    assert oracles.trace_distance(t.receiver_output, np.outer(psi, psi.conj())) <= 1e-12


# --------------------------------------------------------------------------
# net protocol


def test_net_only_protocol():
    net = P.net_for_fidelity(2, 0.06, make_rng(23), max_candidates=200_000, patience=20_000)
    assert math.log2(net.size) <= randomize.net_only_cbits(2, 0.06)
    t = P.net_only_protocol(net.states[3], net, 0.06)
    assert t.fidelity_to_target == pytest.approx(1.0) and t.ebits_consumed == 0
    res = P.net_only_batch(haar_state(2, make_rng(24), size=10_000), net, 0.06)
    assert res.success_rate >= 0.999
    assert res.ebits == 0.0


# --------------------------------------------------------------------------
# obliviousness


def test_weyl_obliviousness_exact():
    for D in (2, 3):
        rep = P.obliviousness_gap_pi(haar_state(D, make_rng(D)), randomize.weyl_set(D))
        assert rep.gap <= 1e-9


def test_pi_gap_two_estimates(haar2):
    psi = haar_state(2, make_rng(25))
    exact = P.obliviousness_gap_pi(psi, haar2)
    mc = P.obliviousness_gap_pi(psi, haar2, trials=40_000, rng=make_rng(26))
    assert abs(exact.gap - mc.gap) <= 4 * mc.sigma + 1e-12
    assert exact.gap <= 1 / 3 + 1e-12
    assert exact.passed and mc.passed


def test_simulator_record_normalized(haar2):
    w, blocks = P.oblivious_simulator(np.array([1, 0]), haar2)
    assert w.sum() == pytest.approx(1.0)
    act = P.pi_actual_record(np.array([1, 0]), haar2)
    assert np.einsum("kaa->", act).real == pytest.approx(1.0, abs=1e-12)


def test_column_gap_routes_agree():
    exact = P.column_obliviousness_gap(2, 3, psi=haar_state(2, make_rng(27)))
    mc = P.column_obliviousness_gap(2, 3, trials=200_000, rng=make_rng(28))
    assert abs(exact.gap - mc.gap) <= 4 * mc.sigma
    assert exact.gap == pytest.approx(0.25, abs=1e-12)
    assert exact.extra["selected_copy_gap"] == pytest.approx(0.125 / 2)


def test_column_gap_single_copy():
    rep = P.column_obliviousness_gap(2, 1)
    assert rep.passed and rep.gap <= rep.bound


# --------------------------------------------------------------------------
# causality


@pytest.mark.parametrize("D", [2, 4])
def test_causality_chain(D):
    uset = randomize.weyl_set(D)
    rep = P.causality_check_pi(uset, 4000, make_rng(29 + D))
    assert rep.fidelity == pytest.approx(1.0, abs=1e-9)
    assert rep.lower_ok and rep.upper_ok
    assert uset.K >= rep.fidelity * D - 1e-9


# --------------------------------------------------------------------------
# entangled-ensemble round


def test_bell_round_exact():
    bell = BipartiteEnsemble([1.0], [max_entangled(2)], (2, 2))
    t = P.entangled_rsp_round([0], bell, delta=1.0, eps=0.0, rng=make_rng(30), K=1)
    assert t.success
    assert t.fidelity_to_target == pytest.approx(1.0, abs=1e-12)
    assert t.ebits_consumed == 1.0
    assert t.extra["rate_cbits"] == pytest.approx(0.0, abs=1e-12)
    assert t.extra["rate_ebits"] == pytest.approx(1.0)


def test_entangled_round_mixture():
    plus0 = np.kron([1, 1], [1, 0]) / math.sqrt(2)
    bip = BipartiteEnsemble([0.5, 0.5], [max_entangled(2), plus0], (2, 2))
    r = make_rng(31)
    for _ in range(3):
        t = P.entangled_rsp_round([0, 1, 1, 0], bip, delta=0.5, eps=0.3, rng=r, K=500)
        x = t.extra
        assert x["large_ok"] and x["small_ok"]
        assert x["fail_min_eig"] >= -1e-10
        if t.success:
            assert t.fidelity_to_target == pytest.approx(x["receiver_fidelity"], abs=1e-8)
            assert t.fidelity_to_target >= x["fidelity_floor"] - 1e-9


def test_entangled_round_aborts_on_atypical_type():
    bip = BipartiteEnsemble([0.9, 0.1], [max_entangled(2), np.eye(4)[0]], (2, 2))
    t = P.entangled_rsp_round([1, 1, 1, 1], bip, delta=0.2, eps=0.3, rng=make_rng(32))
    assert t.message == P.ABORT and not t.success


def test_entangled_round_argument_checks():
    bell = BipartiteEnsemble([1.0], [max_entangled(2)], (2, 2))
    with pytest.raises(ValueError):
        P.entangled_rsp_round([0], bell, 1.0, 0.0, make_rng(0))
    with pytest.raises(ValueError):
        P.entangled_rsp_round([0], bell, 1.0, 0.6, make_rng(0))
