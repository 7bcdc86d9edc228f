import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slospec.sched_math import RequestState, request_deficit, slo_deficit, slo_deficit_capped


@pytest.mark.parametrize("l, t_spec, tpot, o, expected", [
    (0.100, 0.030, 0.050, 2, 0.6),
    (0.0, 0.050, 0.050, 0, 1.0),
    (1.0, 0.030, 0.050, 10, 10.6),
])
def test_deficit_examples(l, t_spec, tpot, o, expected):
    assert math.isclose(slo_deficit(l, o, tpot, t_spec), expected, abs_tol=1e-12)


@pytest.mark.parametrize("deficit, d, expected", [(10.6, 3, 4.0), (0.6, 3, 0.6), (-0.4, 3, 0.0)])
def test_capped_examples(deficit, d, expected):
    assert slo_deficit_capped(deficit, d) == expected


def test_request_deficit_uses_emitted():
    r = RequestState(0, 0.05, [1, 2, 3, 4], prompt_len=2, remaining_output=5, decode_latency=0.1)
    assert r.emitted == 2
    assert math.isclose(request_deficit(r, 0.03), 0.6)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        slo_deficit(0.0, 0, 0.0, 0.03)
    with pytest.raises(ValueError):
        slo_deficit(0.0, 0, 0.05, 0.0)
    with pytest.raises(ValueError):
        slo_deficit_capped(1.0, 0)


latency = st.floats(0.0, 100.0)
positive = st.floats(1e-3, 1.0)


@given(l=latency, o=st.integers(0, 1000), tpot=positive, t=positive)
def test_monotone_in_emitted_and_latency(l, o, tpot, t):
    a = slo_deficit(l, o, tpot, t)
    assert slo_deficit(l, o + 1, tpot, t) < a
    assert slo_deficit(l + 0.01, o, tpot, t) > a


@given(a=st.floats(-1e6, 1e6), d=st.integers(1, 16))
def test_cap_range(a, d):
    assert 0.0 <= slo_deficit_capped(a, d) <= d + 1


@given(latencies=st.lists(st.floats(0.005, 0.2), min_size=1, max_size=40), tpot=st.floats(0.01, 0.2),
       extra=st.lists(st.integers(0, 3), min_size=40, max_size=40))
def test_attainment_link(latencies, tpot, extra):
    # accept at least ceil(A_k) each iteration (plus some slack) -> average TPOT within target
    l, o = 0.0, 0
    for t, bonus in zip(latencies, extra):
        need = slo_deficit(l, o, tpot, t)
        acc = max(1, math.ceil(need)) + bonus
        assert acc >= need
        l += t
        o += acc
    assert l / o <= tpot * (1 + 1e-9)
