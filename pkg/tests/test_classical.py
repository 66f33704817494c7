import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsmooth.classical import (
    DegenerateMaximumError,
    DiscreteDist,
    ToyHmm,
    bme,
    check_equivalences,
    classical_filtered,
    classical_nF_nE_estimators,
    classical_smoothed,
    classical_swv,
    enumeration_posterior,
    expected_negative_fidelity,
    mle,
)


def two_state_hmm(n_steps=2):
    return ToyHmm(
        np.array([[0.9, 0.1], [0.2, 0.8]]),
        np.array([[0.7, 0.3], [0.1, 0.9]]),
        np.array([[0.5, 0.5], [0.5, 0.5]]),
        DiscreteDist(np.array([0.5, 0.5])),
        n_steps,
    )


def test_hand_computed_filter_and_smoother():
    hmm = two_state_hmm(1)
    # one observation o_0 = 0 from x_0, then x_1 ~ transition
    filt = classical_filtered(hmm, [0], 1)
    post0 = np.array([0.5 * 0.7, 0.5 * 0.1])
    post0 /= post0.sum()
    assert np.allclose(filt.probs, post0 @ hmm.transition)
    assert np.allclose(classical_smoothed(hmm, [0], 0).probs, post0)
    assert np.allclose(classical_filtered(hmm, [0], 0).probs, [0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 6))
def test_forward_backward_matches_enumeration(seed, n_states, n_steps):
    rng = np.random.default_rng(seed)
    hmm = ToyHmm.random(rng, n_states, n_steps)
    _, obs, _ = hmm.sample(rng)
    for tau in range(n_steps + 1):
        ref = enumeration_posterior(hmm, obs, tau)
        assert np.max(np.abs(classical_smoothed(hmm, obs, tau).probs - ref.probs)) < 1e-12
        assert np.max(np.abs(classical_swv(hmm, obs, tau).probs - ref.probs)) < 1e-12


def test_unobserved_symbols_marginalize():
    rng = np.random.default_rng(8)
    hmm = ToyHmm.random(rng, 3, 4, 2, 3)
    _, obs, _ = hmm.sample(rng)
    for tau in range(5):
        a = enumeration_posterior(hmm, obs, tau, include_unobserved=True)
        b = enumeration_posterior(hmm, obs, tau)
        assert np.allclose(a.probs, b.probs, atol=1e-14)


def test_delta_estimators_agree_with_maximum():
    rng = np.random.default_rng(3)
    hmm = ToyHmm.random(rng, 4, 5)
    _, obs, _ = hmm.sample(rng)
    post = classical_smoothed(hmm, obs, 2)
    nf, ne = classical_nF_nE_estimators(hmm, obs, 2)
    assert np.array_equal(nf.probs, ne.probs)
    assert int(np.argmax(nf.probs)) == mle(post)
    # no mixed estimate beats the delta at the maximum
    for _ in range(200):
        q = DiscreteDist(rng.dirichlet(np.ones(4)))
        assert expected_negative_fidelity(q, post) >= expected_negative_fidelity(nf, post) - 1e-15


def test_tie_is_reported():
    hmm = ToyHmm(np.eye(2), np.full((2, 2), 0.5), np.full((2, 2), 0.5), DiscreteDist(np.array([0.5, 0.5])), 2)
    with pytest.raises(DegenerateMaximumError):
        classical_nF_nE_estimators(hmm, [0, 1], 1)
    assert check_equivalences(hmm, [0, 1], 1)["degenerate"]


def test_check_equivalences_reports_ok():
    rng = np.random.default_rng(11)
    hmm = ToyHmm.random(rng, 3, 4)
    _, obs, _ = hmm.sample(rng)
    out = check_equivalences(hmm, obs, 2)
    assert out["ok"] and out["nf_equals_ne"] is True


def test_json_round_trip(tmp_path):
    hmm = ToyHmm.random(np.random.default_rng(0), 3, 4)
    path = tmp_path / "hmm.json"
    path.write_text(json.dumps(hmm.to_dict()))
    back = ToyHmm.load(path)
    assert np.array_equal(back.transition, hmm.transition)
    assert back.n_steps == 4
    with pytest.raises(ValueError):
        ToyHmm.from_dict({"transition": [[1.0]]})


def test_validation_and_caps():
    good = two_state_hmm()
    with pytest.raises(ValueError):
        ToyHmm(np.array([[0.5, 0.6], [0.5, 0.5]]), good.obs_emission, good.unobs_emission, good.initial, 2)
    with pytest.raises(ValueError):
        ToyHmm(good.transition, good.obs_emission, good.unobs_emission, good.initial, 9)
    with pytest.raises(ValueError):
        ToyHmm.random(np.random.default_rng(0), 7, 2)
    with pytest.raises(ValueError):
        classical_smoothed(good, [0, 2], 1)
    with pytest.raises(ValueError):
        classical_smoothed(good, [0], 1)
    with pytest.raises(ValueError):
        DiscreteDist(np.array([0.5, 0.6]))


def test_generic_estimators():
    d = DiscreteDist(np.array([0.2, 0.5, 0.3]))
    assert bme(d, [0.0, 1.0, 2.0]) == pytest.approx(1.1)
    assert mle(d) == 1
    assert mle(DiscreteDist(np.array([0.5, 0.5]))) == 0
