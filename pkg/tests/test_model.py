import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from cowsim.model import (
    ChannelParams,
    EveParams,
    ProtocolParams,
    Thresholds,
    ValidationError,
    channel_transmittance,
    check,
    gain_no_attack,
    no_attack_key_probs,
    no_attack_monitor_probs,
    sequence_probability,
    split_sequence,
    validate,
)
from strategies import protocols


def test_transmittance_examples():
    assert channel_transmittance(0.2, 0) == 1.0
    assert math.isclose(channel_transmittance(0.2, 50), 0.1)
    assert math.isclose(channel_transmittance(0.2, 300), 1e-6)


def test_transmittance_rejects_negative():
    with pytest.raises(ValidationError):
        channel_transmittance(-0.1, 10)
    with pytest.raises(ValidationError):
        channel_transmittance(0.2, -1)


@given(st.floats(0, 1), st.floats(0, 500), st.floats(0, 100))
def test_transmittance_monotone(alpha, d, extra):
    t = channel_transmittance(alpha, d)
    assert 0 < t <= 1
    assert channel_transmittance(alpha, d + extra) <= t
    assert channel_transmittance(alpha + extra / 100, d) <= t


def test_fiber_channel():
    assert math.isclose(ChannelParams.fiber(100).transmittance, 0.01)
    assert ChannelParams(eta_ch=0.3).transmittance == 0.3


def test_gain_no_attack_examples():
    assert gain_no_attack(ProtocolParams(mu=0, pd_data=0), 0.1) == 0
    p = ProtocolParams(f=0, pd_data=0)
    x = p.eta_b * 0.1 * p.t_b * p.mu
    assert math.isclose(gain_no_attack(p, 0.1), 1 - math.exp(-x))


@given(protocols(), st.floats(1e-6, 1), st.floats(0, 1), st.floats(0, 0.5))
def test_gain_no_attack_monotone(p, eta, dmu, dpd):
    g = gain_no_attack(p, eta)
    assert 0 <= g <= 1
    assert gain_no_attack(replace(p, mu=p.mu + dmu), eta) >= g
    assert gain_no_attack(p, min(1.0, eta * 2)) >= g
    assert gain_no_attack(replace(p, pd_data=min(p.pd_data + dpd, 0.99)), eta) >= g


def test_key_probs_examples():
    p_key, p_err = no_attack_key_probs(ProtocolParams(pd_data=0), 0.1)
    assert p_err == 0 and p_key > 0
    p = ProtocolParams(mu=0, pd_data=1e-3)
    p_key, _ = no_attack_key_probs(p, 0.1)
    assert math.isclose(p_key, (1 - p.f) * (1 - (1 - 1e-3) ** 2))


@given(protocols(), st.floats(1e-6, 1))
def test_error_never_exceeds_key(p, eta):
    p_key, p_err = no_attack_key_probs(p, eta)
    assert 0 <= p_err <= p_key <= 1


def test_monitor_probs():
    assert no_attack_monitor_probs(ProtocolParams(pd_m2=0), 0.1, "2")[1] == 0
    assert no_attack_monitor_probs(ProtocolParams(pd_m1=0, mu=0), 0.1, "01")[0] == 0
    p = ProtocolParams()
    m1, m2 = no_attack_monitor_probs(p, 0.1, "21")
    q = (1 - p.f) / 2
    assert math.isclose(m2, q * p.f * p.pd_m2)
    with pytest.raises(ValueError):
        no_attack_monitor_probs(p, 0.1, "11")


def test_sequence_labels():
    # "s2s1": s1 is sent first
    assert split_sequence("01") == (1, 0)
    assert split_sequence("21") == (1, 2)
    p = ProtocolParams()
    assert math.isclose(sum(p.priors), 1.0)
    assert sequence_probability(p, "2") == p.f
    assert math.isclose(sequence_probability(p, "22"), p.f ** 2)


def test_validate_examples():
    assert "f out of (0,1)" in validate(ProtocolParams(f=1.2))
    assert "delta below -1" in validate(EveParams(delta=-1.5))
    for record in (ProtocolParams(), EveParams.with_epsilon(0.002), ChannelParams(eta_ch=0.1), Thresholds()):
        assert validate(record) == []


def test_validate_collects_everything():
    problems = validate(ProtocolParams(f=1.2, t_b=0, pd_m1=1.0))
    assert len(problems) == 3
    with pytest.raises(ValidationError) as exc:
        check(ProtocolParams(f=-1), EveParams(m_max=0))
    assert len(exc.value.violations) == 2


def test_validate_records():
    assert validate(EveParams(scheme="usd1", t3=0.9))
    assert validate(EveParams(scheme="usd2", t3=0.9)) == []
    assert validate(ChannelParams(eta_ch=0.1, d=3.0))
    assert validate(ChannelParams())
    assert validate(Thresholds(constraint_set=frozenset()))
    assert validate(Thresholds(constraint_set={"speed"}))


def test_epsilon_expansion():
    e1 = EveParams.with_epsilon(0.01, "usd1")
    assert (e1.t1, e1.t2, e1.t3, e1.t4) == (0.99, 0.99, None, None)
    e2 = EveParams.with_epsilon(0.01, "usd2")
    assert e2.t3 == e2.t4 == 0.99
    assert e2.epsilon == 0.01
    assert EveParams(scheme="usd2", t1=0.9, t3=0.8).epsilon is None
