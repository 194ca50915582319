import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from klinf.envelopes import (
    EnvelopeSpec,
    Regime,
    envelope_raw,
    envelope_scale_ratio,
    envelope_validity_trace,
    envelope_value,
    lil_scale,
    summability_check,
)
from klinf.errors import DomainError
from klinf.samplers import RngState, DistributionSpec, sample
from klinf.simulation import checkpoints

SUBG = EnvelopeSpec("SubGaussian", v=1, eps=0.1)
SUBE = EnvelopeSpec("SubExponential", c=1, eps=0.1)
PTH = EnvelopeSpec("PthMoment", p=4, gamma=0.5)
SEC = EnvelopeSpec("SecondMoment", gamma=0.6)
LIL = EnvelopeSpec("LILScale")
ALL = [SUBG, SUBE, PTH, SEC, LIL, EnvelopeSpec("Constant", B=2.5),
       EnvelopeSpec("PthMoment", p=3, gamma=1.0), EnvelopeSpec("SubGaussian", v=2, eps=0.5, mu_abs=1.0)]


def test_subgaussian_value():
    t = 22026
    assert envelope_value(SUBG, t) == pytest.approx(math.sqrt(2.2 * math.log(t)), rel=1e-15)
    assert envelope_value(SUBG, t) == pytest.approx(4.690416, abs=1e-4)


def test_pth_moment_value():
    # 16^{1/4} sqrt(ln 16) = 2 sqrt(ln 16) = 3.3302184...
    assert envelope_value(PTH, 16) == pytest.approx(2 * math.sqrt(math.log(16)), rel=1e-15)


def test_lil_value():
    # sqrt(16 / lnln 16) with lnln 16 = 1.0197814...
    assert envelope_value(LIL, 16) == pytest.approx(math.sqrt(16 / math.log(math.log(16))), rel=1e-15)
    assert envelope_value(LIL, 16) == pytest.approx(3.961015, abs=1e-6)


def test_other_formulas():
    t = 1000
    assert envelope_value(SUBE, t) == pytest.approx(1.1 * math.log(t))
    assert envelope_value(SEC, t) == pytest.approx(math.sqrt(t) * math.log(t) ** 0.6)
    assert envelope_value(EnvelopeSpec("Constant", B=2.5), t) == 2.5
    assert envelope_value(ALL[-1], t) == pytest.approx(1.0 + math.sqrt(5 * math.log(t)))


def test_running_max_equals_last_value():
    # brute-force max_{3<=s<=t} u_s against the closed form used by envelope_value
    for spec in (PTH, SEC, ALL[6], EnvelopeSpec("PthMoment", p=2.5, gamma=0.41)):
        s = np.arange(3, 5001)
        u = envelope_raw(spec, s)
        assert np.array_equal(np.maximum.accumulate(u), envelope_value(spec, s))


def test_nondecreasing_on_checkpoint_grid():
    grid = np.array(checkpoints(10**7), dtype=float)
    for spec in ALL:
        v = envelope_value(spec, grid)
        assert np.all(np.diff(v) >= 0), spec


@given(st.integers(3, 10**9), st.integers(0, 10**6))
def test_nondecreasing_property(t, dt):
    for spec in ALL:
        if t >= spec.min_t:
            assert envelope_value(spec, t + dt) >= envelope_value(spec, t)


def test_domain_errors():
    with pytest.raises(DomainError):
        envelope_value(SUBG, 2)
    with pytest.raises(DomainError):
        envelope_value(LIL, 15)
    with pytest.raises(DomainError):
        envelope_scale_ratio(SUBG, 15)
    for bad in [dict(regime="PthMoment", p=2, gamma=1), dict(regime="PthMoment", p=4, gamma=0.2),
                dict(regime="SecondMoment", gamma=0.5), dict(regime="SubGaussian", v=0, eps=1),
                dict(regime="Constant", B=-1), dict(regime="SubGaussian", v=1), dict(regime="LILScale", x=1),
                dict(regime="nope")]:
        with pytest.raises(DomainError):
            EnvelopeSpec(**bad)


def test_envelope_round_trip_and_parse():
    assert EnvelopeSpec.from_dict(SUBG.to_dict()) == SUBG
    assert Regime.parse("second_moment") is Regime.SECOND_MOMENT
    assert SUBG["mu_abs"] == 0.0


def test_scale_ratio_examples():
    assert envelope_scale_ratio(LIL, 16) == 1.0
    assert np.all(envelope_scale_ratio(LIL, np.array([16, 1e4, 1e9])) == 1.0)
    t = 1e6
    llt = math.log(math.log(t))
    assert envelope_scale_ratio(SUBG, t) == pytest.approx(math.sqrt(2.2 * math.log(t)) * math.sqrt(llt / t), rel=1e-14)
    assert envelope_scale_ratio(SUBG, t) == pytest.approx(0.008932, abs=2e-6)
    assert envelope_scale_ratio(SEC, t) == pytest.approx(math.log(t) ** 0.6 * math.sqrt(llt), rel=1e-14)
    assert lil_scale(t) == pytest.approx(math.sqrt(t / llt))


@pytest.mark.parametrize("spec", [SUBG, SUBE, PTH], ids=lambda s: s.regime.value)
def test_scale_ratio_decreases(spec):
    assert envelope_scale_ratio(spec, 1e7) < envelope_scale_ratio(spec, 1e4)


def test_scale_ratio_diverges_second_moment():
    assert envelope_scale_ratio(SEC, 1e7) > envelope_scale_ratio(SEC, 1e4)


@pytest.mark.parametrize(
    "gamma",
    [
        pytest.param(0.6, marks=pytest.mark.xfail(
            strict=True,
            reason="tail (log t)^(1-2 gamma)/(2 gamma - 1) at 1e7 is 2.87 against a head of 2.21; "
            "reaching 1e-2 of the head at gamma = 0.6 needs log t near 1e10",
        )),
        1.5,
        2.0,
    ],
)
def test_summability_tail_small(gamma):
    head, tail = summability_check(EnvelopeSpec("SecondMoment", gamma=gamma), 10**7)
    assert tail < 1e-2 * head


def test_summability_partial_sums_cauchy():
    # gamma = 0.6 converges, but so slowly that the tail at 1e7 still exceeds the head
    spec = EnvelopeSpec("SecondMoment", gamma=0.6)
    sums = [summability_check(spec, n) for n in (10**3, 10**4, 10**5, 10**6)]
    heads = [h for h, _ in sums]
    incs = np.diff(heads)
    assert np.all(incs > 0) and np.all(np.diff(incs) < 0)
    for h, tail in sums:
        # head + integral tail bounds the full series; the bound tightens as n grows
        assert h + tail < 6.0
    assert [h + t for h, t in sums] == sorted([h + t for h, t in sums], reverse=True)


def test_validity_trace_examples():
    assert envelope_validity_trace(SUBG, np.zeros(50)) == (3, [])
    assert envelope_validity_trace(LIL, np.zeros(50)) == (16, [])
    first, viol = envelope_validity_trace(EnvelopeSpec("Constant", B=1), [0, 0, 0, 100])
    assert first is None and viol == [(4, 4)]


def test_validity_trace_recovers():
    x = np.zeros(100)
    x[4] = 3.0  # at index 5, B_t = sqrt(2.2 log t) >= 3 once log t >= 4.09
    first, viol = envelope_validity_trace(SUBG, x)
    need = math.ceil(math.exp(9 / 2.2))
    assert first == need
    assert viol[0] == (5, 5) and viol[-1] == (5, need - 1)


def test_validity_trace_gaussian_pinned():
    x = sample(DistributionSpec("Gaussian"), RngState(6), 10**5)
    first, viol = envelope_validity_trace(SUBG, x)
    assert first is not None
    # pinned on the first run of seed 6
    assert first == 12069 and len(viol) == 1013
    running = np.maximum.accumulate(np.abs(x))
    t = np.arange(first, x.size + 1)
    assert np.all(running[first - 1:] <= envelope_value(SUBG, t))
