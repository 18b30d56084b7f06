import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voisim import (
    ConfigurationError,
    PolicyInputs,
    access_function,
    dissemination_voi,
    one_shot_broadcast,
    one_shot_multiaccess,
    parse_policy,
    prioritization_voi,
    run_once,
)
from voisim.policies import (
    BLOCKED,
    AlwaysPolicy,
    NeverPolicy,
    PeriodicPolicy,
    RandomPolicy,
    VoiPolicy,
)

from conftest import small_scenario
from oracles import broadcast_costs, multiaccess_costs

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)
positive = st.floats(min_value=1e-6, max_value=50, allow_nan=False)
rate = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def bc_inputs(e, success, weight, theta, a=1.0):
    ev = np.atleast_1d(np.asarray(e, dtype=float))
    return PolicyInputs(
        mismatches=(ev, ev.copy()),
        success=tuple(success),
        weight_next=tuple(weight),
        price=(theta,),
        state_matrix=(np.atleast_2d(a),),
    )


def mac_inputs(e1, e2, success, weight, theta, a=(1.0, 1.0)):
    return PolicyInputs(
        mismatches=(np.atleast_1d(float(e1)), np.atleast_1d(float(e2))),
        success=tuple(success),
        weight_next=tuple(weight),
        price=tuple(theta),
        state_matrix=tuple(np.atleast_2d(x) for x in a),
    )


def test_access_function_gate():
    assert access_function(1.0, 3.5) == 3.5
    assert access_function(0.0, 3.5) == BLOCKED
    assert access_function(-2.0, 3.5) == BLOCKED
    assert BLOCKED < -1e308


def test_broadcast_zero_mismatch_stays_silent():
    d = dissemination_voi(bc_inputs(0.0, (0.7, 0.9), (1.0, 1.0), theta=1e-9))
    assert d.u == (0,) and d.gain == (0.0,)


def test_broadcast_free_channel_always_sends():
    d = dissemination_voi(bc_inputs(0.0, (0.7, 0.9), (1.0, 1.0), theta=0.0))
    assert d.u == (1,)


def test_broadcast_first_step_instance():
    # two receivers at success 0.7 / 0.9, unit weight and state, gap 0.5:
    # gain = (0.7 + 0.9) * 0.25 = 0.4
    d = dissemination_voi(bc_inputs(0.5, (0.7, 0.9), (1.0, 1.0), theta=0.4))
    assert d.gain[0] == pytest.approx(0.4)
    assert d.u == (1,)  # margin uses >= 0
    assert dissemination_voi(bc_inputs(0.5, (0.7, 0.9), (1.0, 1.0), theta=0.41)).u == (0,)


def test_multiaccess_first_step_instance():
    # gains 0.4 vs 0.1, both thresholds 0.2: only the high-gain sender fires
    d = one_shot_multiaccess(
        innovations=(np.array([1.0]), np.array([0.5])),
        gains=(np.array([[math.sqrt(0.4)]]), np.array([[math.sqrt(0.4)]])),
        A0=(np.eye(1), np.eye(1)),
        success=(1.0, 1.0),
        weight_next=(1.0, 1.0),
        price=(0.2, 0.2),
    )
    assert d.gain[0] == pytest.approx(0.4)
    assert d.gain[1] == pytest.approx(0.1)
    assert d.u == (1, 0)
    assert d.priority[0] == pytest.approx(0.3)


def test_multiaccess_one_sided_urgency():
    d = prioritization_voi(mac_inputs(0.0, 2.0, (0.5, 0.5), (1.0, 1.0), (0.1, 0.1)))
    assert d.u == (0, 1)
    assert d.margin[0] == BLOCKED


def test_multiaccess_tie_keeps_both_silent():
    d = prioritization_voi(mac_inputs(1.0, 1.0, (0.5, 0.5), (1.0, 1.0), (0.0, 0.0)))
    assert d.priority == (0.0, 0.0)
    assert d.u == (0, 0)


@given(e=finite, s1=rate, s2=rate, w1=positive, w2=positive, theta=positive)
def test_sign_flip_leaves_broadcast_decision_alone(e, s1, s2, w1, w2, theta):
    a = dissemination_voi(bc_inputs(e, (s1, s2), (w1, w2), theta))
    b = dissemination_voi(bc_inputs(-e, (s1, s2), (w1, w2), theta))
    assert a.u == b.u and a.gain == b.gain and a.margin == b.margin


@given(e1=finite, e2=finite, s1=rate, s2=rate, w=positive, t1=positive, t2=positive)
def test_sign_flip_and_exclusion_multiaccess(e1, e2, s1, s2, w, t1, t2):
    a = prioritization_voi(mac_inputs(e1, e2, (s1, s2), (w, w), (t1, t2)))
    b = prioritization_voi(mac_inputs(-e1, -e2, (s1, s2), (w, w), (t1, t2)))
    assert a.u == b.u and a.gain == b.gain and a.priority == b.priority
    assert sum(a.u) <= 1


@given(e=finite, s1=rate, s2=rate, w1=positive, w2=positive, theta=positive,
       c=st.floats(min_value=1e-3, max_value=1e3))
def test_common_scaling_of_weights_and_price(e, s1, s2, w1, w2, theta, c):
    base = dissemination_voi(bc_inputs(e, (s1, s2), (w1, w2), theta))
    scaled = dissemination_voi(bc_inputs(e, (s1, s2), (c * w1, c * w2), c * theta))
    assert base.u == scaled.u


def test_one_shot_broadcast_matches_general_path():
    gen = np.random.default_rng(0)
    for _ in range(500):
        n = int(gen.integers(1, 4))
        nu = gen.normal(size=n)
        K = gen.normal(size=(n, n)) * 0.5
        A = gen.normal(size=(n, n))
        s = gen.random(2)
        w = gen.random(2) * 2
        theta = float(gen.random() * 2)
        shot = one_shot_broadcast(nu, K, A, s, w, theta)
        e0 = K @ nu
        general = dissemination_voi(
            PolicyInputs(
                mismatches=(e0, e0.copy()),
                success=tuple(s),
                weight_next=tuple(w),
                price=(theta,),
                state_matrix=(A,),
            )
        )
        assert shot.u == general.u
        assert shot.gain[0] == pytest.approx(general.gain[0], rel=1e-12)


def test_one_shot_broadcast_dead_channel():
    d = one_shot_broadcast(np.array([3.0]), np.eye(1), np.eye(1), (0.0, 0.0), (1.0, 1.0), 0.5)
    assert d.u == (0,)


def test_brute_force_one_step_costs_small_grid():
    # the threshold rule must pick the cheaper action in closed form
    for nu in np.linspace(-2, 2, 9):
        for lam in (0.05, 0.4, 0.9):
            for theta in (0.0, 0.2, 1.0):
                s = (1 - lam, 1 - 0.5 * lam)
                w = (1.0, 0.7)
                d = one_shot_broadcast(np.array([nu]), np.array([[0.6]]), np.array([[1.1]]), s, w, theta)
                moved_sq = (1.1 * 0.6 * nu) ** 2
                stay, send = broadcast_costs(moved_sq, s, w, theta)
                chosen = send if d.u[0] else stay
                assert chosen <= min(stay, send) + 1e-12


def test_lambda_cutoff_single_monotone_flip():
    gen = np.random.default_rng(3)
    for _ in range(50):
        nu = gen.normal() * 2
        theta = float(gen.random())
        w = tuple(gen.random(2) + 0.1)
        decisions = []
        for lam in np.linspace(0, 1, 100):
            d = one_shot_broadcast(
                np.array([nu]), np.eye(1), np.eye(1), (1 - lam, 1 - lam), w, theta
            )
            decisions.append(d.u[0])
        flips = np.abs(np.diff(decisions)).sum()
        assert flips <= 1
        if flips == 1:
            assert decisions[0] == 1 and decisions[-1] == 0  # raising loss only hurts


def test_periodic_counts_and_round_robin():
    p = PeriodicPolicy(15)
    bc = small_scenario(kind="broadcast", horizon=1000)
    m = run_once(bc, p, 0, collect_traces=False)
    assert m.transmissions.tolist() == [67, 67]
    mac = small_scenario(kind="multiaccess", horizon=1000)
    m2 = run_once(mac, PeriodicPolicy(15), 0, collect_traces=False)
    assert m2.transmissions.tolist() == [34, 33]
    assert PeriodicPolicy(7, 3).label == "periodic:7:3"


def test_periodic_phase_delays_first_fire():
    sc = small_scenario(horizon=20)
    m = run_once(sc, PeriodicPolicy(30, 4), 0)
    fires = np.nonzero(m.sent[0])[0]
    assert fires.tolist() == [4]


def test_always_and_never_extremes():
    bc = small_scenario(horizon=50)
    assert run_once(bc, AlwaysPolicy(), 1, collect_traces=False).transmissions.tolist() == [51, 51]
    assert run_once(bc, NeverPolicy(), 1, collect_traces=False).transmissions.tolist() == [0, 0]
    mac = small_scenario(kind="multiaccess", horizon=49)
    m = run_once(mac, AlwaysPolicy(), 1, collect_traces=False)
    assert m.transmissions.tolist() == [25, 25]  # alternating turns


def test_random_policy_rate_and_bounds():
    sc = small_scenario(horizon=2000)
    m = run_once(sc, RandomPolicy(0.25), 5, collect_traces=False)
    freq = m.transmissions[0] / 2001
    assert abs(freq - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 2001)
    with pytest.raises(ConfigurationError):
        RandomPolicy(1.5)


def test_parse_policy_grammar():
    assert isinstance(parse_policy("voi"), VoiPolicy)
    assert parse_policy("periodic:15").period == 15
    assert parse_policy("periodic:15:4").phase == 4
    assert parse_policy("random:0.5").p == 0.5
    assert isinstance(parse_policy("ALWAYS"), AlwaysPolicy)
    for bad in ("", "voi:2", "periodic", "periodic:0", "random:2", "sometimes", "random:x"):
        with pytest.raises(ConfigurationError):
            parse_policy(bad)
