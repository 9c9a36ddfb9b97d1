import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cowsim.metrics import (
    MetricsReport,
    block_distribution,
    evaluate,
    expected_gain,
    expected_qber,
    expected_visibilities,
    recursion_reference,
)
from cowsim.model import SEQUENCES, EveParams, ProtocolParams
from cowsim.usd import UsdStatistics, conclusive_stats
from oracles import enumerate_blocks, random_table
from strategies import eves, protocols


def closed_counts(table, f, m_max, pd, pd1, pd2):
    p = ProtocolParams(f=f, pd_data=pd, pd_m1=pd1, pd_m2=pd2)
    e = EveParams(scheme="usd2", m_max=m_max)
    c = conclusive_stats(UsdStatistics(table), f)
    _, n_sig, n_clk = expected_gain(c, p, e)
    _, n_key, n_err = expected_qber(c, p, e)
    _, _, n_m1, n_m2 = expected_visibilities(c, p, e)
    out = dict(sig=n_sig, clk=n_clk, key=n_key, err=n_err)
    out.update({f"m1_{s}": n_m1[s] for s in SEQUENCES})
    out.update({f"m2_{s}": n_m2[s] for s in SEQUENCES})
    return out, c, p, e


def assert_counts_close(got, want, rel=1e-10):
    for key, value in want.items():
        assert math.isclose(got[key], value, rel_tol=rel, abs_tol=1e-14), key


def test_block_distribution_examples():
    b = block_distribution(0.5, 3)
    assert np.allclose(b.p_cb, [0.5, 0.25, 0.125, 0.125])
    assert math.isclose(b.mean_signals(), 1 * 0.5 + 2 * 0.25 + 3 * 0.125 + 4 * 0.125)
    assert block_distribution(0.0, 2).p_cb.tolist() == [1.0, 0.0, 0.0]
    assert block_distribution(1.0, 2).p_cb.tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        block_distribution(1.2, 2)
    with pytest.raises(ValueError):
        block_distribution(0.5, 0)


@given(st.floats(0, 1), st.integers(1, 60))
def test_block_distribution_normalised(pc, m):
    b = block_distribution(pc, m)
    assert math.isclose(b.p_cb.sum(), 1.0, rel_tol=1e-12)
    assert 1 <= b.mean_signals() <= m + 1


@pytest.mark.parametrize("scheme", ["usd1", "usd2"])
@pytest.mark.parametrize("trial", range(12))
def test_closed_forms_match_enumeration(scheme, trial):
    rng = np.random.default_rng(100 + trial)
    t = random_table(rng, scheme)
    f = rng.uniform(0.05, 0.6)
    m = int(rng.integers(1, 7))
    pd, pd1, pd2 = rng.uniform(0, 0.3, 3)
    got, *_ = closed_counts(t, f, m, pd, pd1, pd2)
    assert_counts_close(got, enumerate_blocks(t, f, m, pd, pd1, pd2))


def test_certain_conclusive_matches_enumeration():
    t = np.zeros((4, 3))
    t[0, 0] = t[1, 1] = 0.7
    t[0, 1] = t[1, 0] = 0.3
    t[0, 2] = t[1, 2] = 0.5
    got, c, *_ = closed_counts(t, 0.2, 4, 0.01, 0.02, 0.03)
    assert c.p_conc == 1.0
    assert_counts_close(got, enumerate_blocks(t, 0.2, 4, 0.01, 0.02, 0.03))


def test_singular_ratio_falls_back():
    # Outcomes fully determine the signal class, so the posterior chain has R = 1.
    t = np.zeros((4, 3))
    t[0, 0] = t[1, 1] = 0.4
    t[2, 2] = 0.4
    t[3] = 0.6
    got, c, p, e = closed_counts(t, 0.3, 5, 0.01, 0.02, 0.03)
    assert_counts_close(got, enumerate_blocks(t, 0.3, 5, 0.01, 0.02, 0.03))


@settings(max_examples=60, deadline=None)
@given(protocols(), eves(m_max=st.integers(1, 12)))
def test_recursion_matches_closed_forms(p, e):
    a = evaluate(p, e)
    b = evaluate(p, e, method="recursion")
    assert b.method == "recursion"
    for key, value in a.aggregates().items():
        assert math.isclose(b.aggregates()[key], value, rel_tol=1e-9, abs_tol=1e-15), key


@pytest.mark.parametrize("m", [1, 2, 3])
def test_recursion_short_blocks_match_enumeration(m):
    rng = np.random.default_rng(7)
    t = random_table(rng, "usd2")
    got, c, p, e = closed_counts(t, 0.2, m, 0.05, 0.1, 0.15)
    want = enumerate_blocks(t, 0.2, m, 0.05, 0.1, 0.15)
    rep = recursion_reference(c, p, e)
    rec = dict(sig=rep.n_sig, clk=rep.n_clk, key=rep.n_key, err=rep.n_err)
    rec.update({f"m1_{s}": rep.n_m1[s] for s in SEQUENCES})
    rec.update({f"m2_{s}": rep.n_m2[s] for s in SEQUENCES})
    assert_counts_close(rec, want)


@settings(max_examples=200, deadline=None)
@given(protocols(), eves())
def test_metric_ranges(p, e):
    m = evaluate(p, e)
    assert 0 <= m.gain <= 1
    assert -1e-15 <= m.n_err <= m.n_key * (1 + 1e-12) + 1e-15
    assert m.n_key <= m.n_clk * (1 + 1e-12) + 1e-15
    assert m.n_clk <= m.n_sig * (1 + 1e-12)
    if m.qber is not None:
        assert 0 <= m.qber <= 1
    for v in list(m.vis.values()) + [m.vis_ave]:
        assert v is None or -1 - 1e-12 <= v <= 1 + 1e-12


def test_nothing_conclusive():
    p = ProtocolParams(mu=0.0)
    e = EveParams.with_epsilon(0.002, "usd1", pd_e=0.0)
    m = evaluate(p, e)
    assert m.p_conc == 0
    assert m.n_sig == 1
    assert math.isclose(m.gain, 1 - (1 - p.pd_data) ** 2)
    assert math.isclose(m.qber, 0.5)
    dark = ProtocolParams(mu=0.0, pd_data=0.0)
    m = evaluate(dark, e)
    assert m.gain == 0 and m.qber is None


def test_ideal_usd1_is_error_free(ideal_usd1, dark_free):
    m = evaluate(dark_free, ideal_usd1)
    assert m.qber == 0.0
    # Decoys are always inconclusive and resent as vacuum: no monitor clicks.
    assert m.n_m1["2"] == m.n_m2["2"] == 0.0
    assert m.vis["2"] is None


def test_usd1_decoy_visibility_exact(reference):
    for eps in (0.0, 0.002, 0.01):
        m = evaluate(reference, EveParams.with_epsilon(eps, "usd1"))
        assert m.n_m1["2"] >= m.n_m2["2"]


def test_structural_identities(reference):
    m = evaluate(reference, EveParams.with_epsilon(0.002, "usd2"))
    assert math.isclose(m.gain, m.n_clk / m.n_sig)
    assert math.isclose(m.qber, m.n_err / m.n_key)
    s1, s2 = sum(m.n_m1.values()), sum(m.n_m2.values())
    assert math.isclose(m.vis_ave, (s1 - s2) / (s1 + s2))
    assert m.metric("v01") == m.vis["01"] and m.metric("v_ave") == m.vis_ave
    with pytest.raises(KeyError):
        m.metric("speed")


@pytest.mark.parametrize("scheme", ["usd1", "usd2"])
def test_gain_grows_with_epsilon(reference, scheme):
    gains = [evaluate(reference, EveParams.with_epsilon(eps, scheme)).gain for eps in np.linspace(0, 0.01, 11)]
    assert np.all(np.diff(gains) > 0)


@pytest.mark.parametrize("scheme", ["usd1", "usd2"])
def test_reference_qber_small(reference, scheme):
    m = evaluate(reference, EveParams.with_epsilon(0.002, scheme))
    assert m.qber <= 0.05


def test_unknown_method(reference):
    with pytest.raises(ValueError):
        evaluate(reference, EveParams(), method="guess")


def test_report_is_frozen(reference):
    m = evaluate(reference, EveParams())
    assert isinstance(m, MetricsReport)
    with pytest.raises(AttributeError):
        m.gain = 0.0


@pytest.mark.parametrize("scheme", ["usd1", "usd2"])
@pytest.mark.parametrize("m", [1, 2, 6])
def test_tiny_dark_counts_keep_precision(scheme, m):
    # Dark-count-only contributions must not be lost to cancellation.
    rng = np.random.default_rng(40 + m)
    t = random_table(rng, scheme)
    got, *_ = closed_counts(t, 0.155, m, 1e-9, 2e-9, 3e-9)
    assert_counts_close(got, enumerate_blocks(t, 0.155, m, 1e-9, 2e-9, 3e-9))
