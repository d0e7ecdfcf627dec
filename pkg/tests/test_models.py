import itertools

import numpy as np
import pytest

from rpslab.models import (
    CsEwaModel,
    CsEwaParams,
    CsEwaState,
    NashModel,
    StateMismatchError,
    csewa_act,
    csewa_forecast,
    csewa_retrospective_update,
    model_step,
    softmax,
    state_index,
)
from rpslab.game import PAPER, ROCK, SCISSORS


def params(**kw) -> CsEwaParams:
    base = dict(alpha=0.5, alpha_prime=0.5, phi_ewa=1.0, delta=1.0, rho=1.0, beta=1.0)
    base.update(kw)
    return CsEwaParams(**base)


def test_nash_model_uniform():
    m = NashModel()
    pred, _ = model_step(m, np.zeros(0), ROCK, PAPER, -1.0, None)
    assert np.allclose(pred.probs(), 1 / 3)
    ego = np.zeros((3, 10), dtype=np.int64)
    nll, grad = m.nll_and_grad(np.zeros(0), ego, ego, ego.astype(float))
    assert nll == pytest.approx(3 * 9 * np.log(3))
    assert grad.size == 0


def test_ewa_hand_check_shadow():
    # observed round: ego played paper, opponent rock; delta=rho=phi=1, N=1, A=0.
    # shadow table treats the opponent's rock as the choice against our paper:
    # payoffs [r(R,P), r(P,P), r(S,P)] = [-1, 0, 3], divided by N' = 2.
    state = CsEwaState(last_state_index=0)
    out = csewa_retrospective_update(state, params(), a_prev=PAPER, a_opp_prev=ROCK)
    assert np.allclose(out.shadow_table[0], [-0.5, 0.0, 1.5], atol=1e-12)
    assert out.shadow_n[0] == pytest.approx(2.0, abs=1e-12)


def test_ewa_hand_check_self():
    # self table: our paper against their rock: payoffs [0, 3, -1] halved
    state = CsEwaState(last_state_index=0)
    out = csewa_retrospective_update(state, params(), a_prev=PAPER, a_opp_prev=ROCK)
    assert np.allclose(out.self_table[0], [0.0, 1.5, -0.5], atol=1e-12)
    assert out.self_n[0] == pytest.approx(2.0, abs=1e-12)


def test_ewa_delta_zero_reinforces_chosen_only():
    state = CsEwaState(last_state_index=3)
    out = csewa_retrospective_update(state, params(delta=0.0), a_prev=ROCK, a_opp_prev=SCISSORS)
    assert out.self_table[3, ROCK] == pytest.approx(3.0 / 2.0)  # rock beats scissors
    assert out.self_table[3, PAPER] == 0.0
    assert out.self_table[3, SCISSORS] == 0.0


def test_experience_weight_bounded():
    p = params(rho=0.8)
    state = CsEwaState(last_state_index=0)
    for _ in range(300):
        state = csewa_retrospective_update(state, p, ROCK, PAPER)
    assert state.self_n[0] <= 1.0 / (1.0 - 0.8) + 1.0


def test_reinforcement_special_case_by_hand():
    # delta=0, rho=0, N0=1: attractions become phi-discounted sums of the
    # chosen action's payoffs; N stays 1 so each update divides by exactly 1.
    p = params(delta=0.0, rho=0.0, phi_ewa=0.5)
    state = CsEwaState(last_state_index=0)
    seq = [(ROCK, SCISSORS), (ROCK, PAPER), (ROCK, ROCK)]  # rewards 3, -1, 0
    for a, ao in seq:
        state = csewa_retrospective_update(state, p, a, ao)
    expected = ((3 * 0.5) - 1) * 0.5 + 0  # fold the discounting by hand
    assert state.self_table[0, ROCK] == pytest.approx(expected, abs=1e-12)


def test_forecast_uniform_and_mixture():
    # alpha'=1 with zero shadow attractions: uniform forecast
    state = CsEwaState(last_state_index=0)
    f = csewa_forecast(state, params(alpha_prime=1.0))
    assert np.allclose(f, 1 / 3)

    # alpha'=0 and an adaptive policy locked on rock: the sophisticated
    # opponent best-responds with paper as beta grows
    state = CsEwaState(last_state_index=0)
    state.self_table[0] = [50.0, 0.0, 0.0]
    f = csewa_forecast(state, params(alpha_prime=0.0, beta=25.0))
    assert f[PAPER] > 0.999

    # the mixture is convex: 0.5 * shadow-peak + 0.5 * soph-peak
    state = CsEwaState(last_state_index=0)
    state.self_table[0] = [50.0, 0.0, 0.0]  # soph forecast -> paper
    state.shadow_table[0] = [50.0, 0.0, 0.0]  # shadow forecast -> rock
    f = csewa_forecast(state, params(alpha_prime=0.5, beta=25.0))
    assert f[ROCK] == pytest.approx(0.5, abs=1e-3)
    assert f[PAPER] == pytest.approx(0.5, abs=1e-3)


def test_act_examples():
    # alpha=1: purely the adaptive policy
    state = CsEwaState(last_state_index=0)
    state.self_table[0] = [5.0, 0.0, 0.0]
    pred = csewa_act(state, params(alpha=1.0, beta=3.0))
    assert np.argmax(pred.probs()) == ROCK

    # alpha=0 with the forecast locked on rock: best response is paper
    state = CsEwaState(last_state_index=0)
    state.shadow_table[0] = [60.0, 0.0, 0.0]
    pred = csewa_act(state, params(alpha=0.0, alpha_prime=1.0, beta=25.0))
    assert pred.probs()[PAPER] > 0.999

    # zero attractions anywhere: uniform
    pred = csewa_act(CsEwaState(last_state_index=7), params())
    assert np.allclose(pred.probs(), 1 / 3, atol=1e-12)


def test_state_index_covers_all_81():
    seen = {state_index(h) for h in itertools.product(range(3), repeat=4)}
    assert seen == set(range(81))
    assert state_index((-1, -1, 0, 0)) == -1


def test_model_warmup_and_update_timing():
    m = CsEwaModel()
    theta = np.zeros(6)
    state = m.init_state()
    pred, state = m.step(theta, ROCK, PAPER, -1.0, state)
    assert state.last_state_index == -1  # only one joint action so far
    assert np.allclose(pred.probs(), 1 / 3)
    pred, state = m.step(theta, PAPER, ROCK, 3.0, state)
    ctx = state_index((ROCK, PAPER, PAPER, ROCK))
    assert state.last_state_index == ctx
    assert np.all(state.self_n == 1.0)  # still warming up: no update yet
    _, state = m.step(theta, ROCK, ROCK, 0.0, state)
    # first retrospective update lands at the stored context with N' = rho*1+1
    rho = 0.5  # sigmoid(0)
    assert state.self_n[ctx] == pytest.approx(rho + 1)
    assert state.shadow_n[ctx] == pytest.approx(rho + 1)
    assert np.sum(state.self_n != 1.0) == 1


def test_model_state_mismatch():
    m = CsEwaModel()
    with pytest.raises(StateMismatchError):
        m.step(np.zeros(6), 0, 0, 0.0, object())


def test_kernel_matches_python_steps():
    rng = np.random.default_rng(4)
    m = CsEwaModel()
    theta = rng.standard_normal(6)
    T = 30
    ego = rng.integers(0, 3, (1, T)).astype(np.int64)
    opp = rng.integers(0, 3, (1, T)).astype(np.int64)
    rew = np.array([[float([0, -1, 3][0]) for _ in range(T)]])  # rewards unused by cs-ewa
    batch = m.predict_logits(theta, ego, opp, rew)
    state = m.init_state()
    seq = [m.initial_prediction(theta).logits]
    for t in range(T - 1):
        pred, state = m.step(theta, int(ego[0, t]), int(opp[0, t]), 0.0, state)
        seq.append(pred.logits)
    got = softmax(batch[0])
    want = softmax(np.array(seq))
    assert np.allclose(got, want, atol=1e-12)


def test_csewa_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    m = CsEwaModel()
    for _ in range(3):
        theta = rng.standard_normal(6)
        ego = rng.integers(0, 3, (1, 50)).astype(np.int64)
        opp = rng.integers(0, 3, (1, 50)).astype(np.int64)
        rew = np.zeros((1, 50))
        _, grad = m.nll_and_grad(theta, ego, opp, rew)
        eps = 1e-5
        for k in range(6):
            up, down = theta.copy(), theta.copy()
            up[k] += eps
            down[k] -= eps
            fd = (m.nll_and_grad(up, ego, opp, rew)[0] - m.nll_and_grad(down, ego, opp, rew)[0]) / (2 * eps)
            assert abs(grad[k] - fd) / max(abs(fd), 1e-6) < 1e-4


def test_probability_normalization_along_trajectory():
    rng = np.random.default_rng(13)
    m = CsEwaModel()
    theta = rng.standard_normal(6)
    ego = rng.integers(0, 3, (2, 40)).astype(np.int64)
    opp = rng.integers(0, 3, (2, 40)).astype(np.int64)
    probs = softmax(m.predict_logits(theta, ego, opp, np.zeros((2, 40))))
    assert np.allclose(probs.sum(axis=2), 1.0, atol=1e-12)


def test_params_from_unconstrained_boxes():
    p = CsEwaParams.from_unconstrained(np.array([0.0, 10.0, -10.0, 0.5, -0.5, 0.0]))
    assert p.alpha == pytest.approx(0.5)
    assert 0 < p.phi_ewa < 1e-4
    assert p.alpha_prime > 1 - 1e-4
    assert p.beta == pytest.approx(np.log(2))
    for v in (p.alpha, p.alpha_prime, p.phi_ewa, p.delta, p.rho):
        assert 0 <= v <= 1
    assert p.beta > 0
