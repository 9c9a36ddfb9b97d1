"""Hypothesis strategies for valid parameter records."""
from hypothesis import strategies as st

from cowsim.model import EveParams, ProtocolParams

unit = st.floats(0.05, 1.0)
dark = st.one_of(st.just(0.0), st.floats(1e-9, 1e-2))


@st.composite
def protocols(draw, mu=st.floats(1e-3, 2.0)):
    return ProtocolParams(
        mu=draw(mu),
        f=draw(st.floats(0.01, 0.9)),
        t_b=draw(unit),
        eta_b=draw(unit),
        pd_data=draw(dark),
        pd_m1=draw(dark),
        pd_m2=draw(dark),
    )


@st.composite
def eves(draw, scheme=st.sampled_from(["usd1", "usd2"]), m_max=st.integers(1, 20)):
    scheme = draw(scheme)
    overlap = st.floats(0.9, 1.0)
    extra = dict(t3=draw(overlap), t4=draw(overlap)) if scheme == "usd2" else {}
    return EveParams(
        scheme=scheme,
        m_max=draw(m_max),
        bs_t=draw(st.floats(0.5, 1.0)),
        phi=draw(st.floats(-0.5, 0.5)),
        delta=draw(st.floats(-0.5, 0.5)),
        eta_e=draw(unit),
        pd_e=draw(dark),
        t1=draw(overlap),
        t2=draw(overlap),
        **extra,
    )
