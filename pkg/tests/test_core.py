import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifl.core import (
    NUM_ACTIONS,
    ActionKind,
    CorruptionChannel,
    DegenerateChannelError,
    DelayModel,
    DomainError,
    IssuerProfile,
    LossSpec,
    ObservationEvent,
    censor,
    corrupt_label,
    debias_label,
    expected_loss,
    maturity_prob,
    observation_gate,
    sample_delay,
    signal_strength,
    stream,
)

N_DRAWS = 100_000
probs = st.floats(0.0, 1.0, allow_nan=False)


def test_action_set_has_three_members():
    assert len(ActionKind) == NUM_ACTIONS == 3
    assert ActionKind.parse("decline") is ActionKind.DECLINE
    assert ActionKind.parse(1) is ActionKind.CHALLENGE
    with pytest.raises(DomainError):
        ActionKind.parse("refund")


def test_loss_spec_bounds():
    with pytest.raises(DomainError):
        LossSpec((1.2,), (0.2,), (0.4,))
    with pytest.raises(DomainError):
        LossSpec((1.0, 1.0), (0.2,), (0.4,))
    spec = LossSpec.constant(3)
    assert spec.num_cells == 3
    assert spec.fn_loss == (1.0,) * 3 and spec.ch_loss == (0.2,) * 3 and spec.fp_loss == (0.4,) * 3


class TestExpectedLoss:
    losses = LossSpec.constant(2)

    def test_certain_fraud_approval(self):
        assert expected_loss(0, ActionKind.APPROVE, 1.0, self.losses) == 1.0

    def test_challenge_is_outcome_free(self):
        assert expected_loss(0, ActionKind.CHALLENGE, 0.37, self.losses) == 0.2

    def test_decline_against_brute_force(self):
        rng = np.random.default_rng(0)
        y = rng.random(1_000_000) < 0.25
        brute = np.where(y, 0.0, 0.4).mean()
        assert expected_loss(0, ActionKind.DECLINE, 0.25, self.losses) == pytest.approx(0.3, abs=1e-15)
        assert brute == pytest.approx(0.3, abs=3 * 0.4 * math.sqrt(0.25 * 0.75 / 1e6))

    def test_bad_cell(self):
        with pytest.raises(DomainError):
            expected_loss(5, ActionKind.APPROVE, 0.5, self.losses)

    @settings(max_examples=200, deadline=None)
    @given(probs, probs, probs, probs, st.sampled_from(list(ActionKind)))
    def test_in_unit_interval(self, fn, ch, fp, p, action):
        spec = LossSpec((fn,), (ch,), (fp,))
        assert 0.0 <= expected_loss(0, action, p, spec) <= 1.0


class TestChannel:
    def test_invariants(self):
        with pytest.raises(DomainError):
            CorruptionChannel(-0.1, 0.0)
        with pytest.raises(DegenerateChannelError):
            CorruptionChannel(0.5, 0.5)

    def test_identity_passes_through(self):
        rng = stream(0, "t")
        assert all(corrupt_label(CorruptionChannel(), 1, rng) == 1 for _ in range(1000))

    @pytest.mark.parametrize("latent,target", [(1, 0.2), (0, 0.1)])
    def test_flip_frequency(self, latent, target):
        ch = CorruptionChannel(0.2, 0.1)
        rng = stream(1, "flip", latent)
        flips = sum(corrupt_label(ch, latent, rng) != latent for _ in range(N_DRAWS))
        assert flips / N_DRAWS == pytest.approx(target, abs=0.01)

    @pytest.mark.parametrize("e10,e01,s", [(0, 0, 1.0), (0.2, 0.1, 0.7), (0.49, 0.49, 0.02)])
    def test_signal_strength(self, e10, e01, s):
        assert signal_strength(CorruptionChannel(e10, e01)) == pytest.approx(s, abs=1e-15)

    def test_debias_examples(self):
        assert debias_label(CorruptionChannel(), 1) == 1.0
        ch = CorruptionChannel(0.2, 0.1)
        assert debias_label(ch, 1) == pytest.approx(0.9 / 0.7, rel=1e-15)
        assert debias_label(ch, 0) == pytest.approx(-0.1 / 0.7, rel=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 0.49), st.floats(0, 0.49), st.sampled_from([0, 1]))
    def test_debias_exact_in_expectation(self, e10, e01, latent):
        ch = CorruptionChannel(e10, e01)
        p_one = 1 - e10 if latent else e01
        mean = p_one * debias_label(ch, 1) + (1 - p_one) * debias_label(ch, 0)
        assert mean == pytest.approx(latent, abs=1e-12)


class TestDelay:
    def test_constant_and_table(self):
        rng = stream(0, "d")
        assert sample_delay(DelayModel.constant(0), rng) == 0
        assert {sample_delay(DelayModel.empirical([(3, 1.0)]), rng) for _ in range(50)} == {3}

    def test_geometric_mean(self):
        rng = stream(2, "geo")
        model = DelayModel.geometric(0.5)
        mean = np.mean([sample_delay(model, rng) for _ in range(N_DRAWS)])
        assert mean == pytest.approx(1.0, abs=0.05)
        assert model.mean() == pytest.approx(1.0)

    def test_invalid_models(self):
        with pytest.raises(DomainError):
            DelayModel.constant(-1)
        with pytest.raises(DomainError):
            DelayModel.empirical([(0, 0.5), (2, 0.4)])
        with pytest.raises(DomainError):
            DelayModel.geometric(0.0)

    def test_maturity_examples(self):
        assert maturity_prob(DelayModel.constant(5), 4) == 0.0
        assert maturity_prob(DelayModel.constant(5), 5) == 1.0
        assert maturity_prob(DelayModel.geometric(0.5), 1) == pytest.approx(0.75)
        assert maturity_prob(DelayModel.empirical([(0, 0.3), (10, 0.7)]), 3) == pytest.approx(0.3)

    def test_geometric_maturity_matches_draws(self):
        rng = stream(3, "geo")
        draws = np.array([sample_delay(DelayModel.geometric(0.3), rng) for _ in range(N_DRAWS)])
        for w in (0, 2, 5):
            assert (draws <= w).mean() == pytest.approx(maturity_prob(DelayModel.geometric(0.3), w), abs=0.01)

    def test_maturity_monotone_on_random_models(self):
        rng = np.random.default_rng(7)
        models = []
        for k in range(50):
            kind = k % 3
            if kind == 0:
                models.append(DelayModel.constant(int(rng.integers(0, 60))))
            elif kind == 1:
                models.append(DelayModel.geometric(float(rng.uniform(0.01, 1.0))))
            else:
                lags = rng.choice(80, size=4, replace=False)
                mass = rng.dirichlet(np.ones(4))
                models.append(DelayModel.empirical(list(zip(lags.tolist(), mass.tolist()))))
        for model in models:
            values = [maturity_prob(model, w) for w in range(100)]
            assert all(b >= a for a, b in zip(values, values[1:]))
            assert maturity_prob(model, 10_000) == pytest.approx(1.0, abs=1e-9)


class TestCensorAndGate:
    def test_censor_extremes(self):
        rng = stream(0, "c")
        assert all(censor(0.0, rng) == 0 for _ in range(500))
        assert all(censor(1.0, rng) == 1 for _ in range(500))

    def test_censor_frequency(self):
        rng = stream(4, "c")
        rate = sum(censor(0.35, rng) for _ in range(N_DRAWS)) / N_DRAWS
        assert rate == pytest.approx(0.35, abs=0.01)

    def test_gate_examples(self):
        assert observation_gate(ActionKind.APPROVE, 0, 0, 10) == 1
        assert observation_gate(ActionKind.DECLINE, 0, 0, 10) == 0
        assert observation_gate(ActionKind.APPROVE, 0, 11, 10) == 0

    def test_gate_is_a_conjunction(self):
        for action in ActionKind:
            for censored in (0, 1):
                for delay in range(5):
                    for remaining in range(5):
                        open_ = observation_gate(action, censored, delay, remaining)
                        expect = action != ActionKind.DECLINE and censored == 0 and delay <= remaining
                        assert bool(open_) == expect


def test_event_and_issuer_invariants():
    with pytest.raises(DomainError):
        ObservationEvent(5, 4, 0, ActionKind.APPROVE, 1, 0.5)
    ev = ObservationEvent(5, 9, 0, ActionKind.APPROVE, 1, 0.5)
    assert ev.delay == 4
    with pytest.raises(DomainError):
        IssuerProfile(0, 1.5, CorruptionChannel(), DelayModel.constant(0), 1.0)


def test_streams_are_keyed_by_tag():
    a = stream(1, "x").random(4)
    assert np.array_equal(a, stream(1, "x").random(4))
    assert not np.array_equal(a, stream(1, "y").random(4))
    assert not np.array_equal(a, stream(2, "x").random(4))
