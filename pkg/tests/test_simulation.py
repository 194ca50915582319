import json
import math
from dataclasses import replace

import numpy as np
import pytest

from klinf.envelopes import EnvelopeSpec
from klinf.errors import DomainError
from klinf.measures import DiscreteDistribution, EmpiricalAccumulator, SupportInterval, empirical_from_samples
from klinf.projection import klinf_dual
from klinf.samplers import DistributionSpec, RngState, sample
from klinf.simulation import (
    CSV_COLUMNS,
    Envelope,
    FixedInterval,
    SimConfig,
    aggregate_seeds,
    binned_measures,
    check_record,
    checkpoints,
    envelope_collapse_experiment,
    normalized_statistic,
    records_to_csv,
    records_to_gnuplot,
    run_seeds,
    run_trajectory,
    summarize_seed,
    summary_dict,
)

BERN = DistributionSpec("Bernoulli", p=0.5)
UNIT = FixedInterval(SupportInterval(0.0, 1.0))


def bern_config(T=10**4, seeds=(0,), **kw):
    return SimConfig(BERN, UNIT, T, seeds=seeds, **kw)


def test_checkpoint_grid():
    grid = checkpoints(100, 1.1)
    assert grid[0] == 16 and grid[-1] == 100
    assert grid[:4] == [16, 18, 20, 22]
    for a, b in zip(grid, grid[1:]):
        assert b == min(100, math.ceil(a * 1.1))
    assert checkpoints(16) == [16]
    assert 50 in checkpoints(100, 1.5, extra=[50])
    with pytest.raises(DomainError):
        checkpoints(15)
    with pytest.raises(DomainError):
        checkpoints(100, extra=[200])


def test_normalized_statistic():
    assert normalized_statistic(16, 0.0) == 0.0
    assert normalized_statistic(16, 1.0) == pytest.approx(16 / math.log(math.log(16)), rel=1e-15)
    assert normalized_statistic(16, 1.0) == pytest.approx(15.6896, abs=1e-4)
    t = 10**6
    assert normalized_statistic(t, math.log(math.log(t)) / t) == pytest.approx(1.0, rel=1e-15)
    assert normalized_statistic(t, math.inf) == math.inf
    with pytest.raises(DomainError):
        normalized_statistic(15, 1.0)


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(DistributionSpec("Gaussian"), UNIT, 100)
    with pytest.raises(DomainError):
        SimConfig(DistributionSpec("UniformCont", a=0, b=2), UNIT, 100)
    with pytest.raises(DomainError):
        bern_config(T=10)
    with pytest.raises(DomainError):
        bern_config(checkpoint_ratio=2.5)
    with pytest.raises(DomainError):
        bern_config(true_mean=0.4)
    with pytest.raises(DomainError):
        bern_config(seeds=())
    assert bern_config().mu == 0.5


def test_config_json_round_trip():
    cfg = SimConfig(DistributionSpec("Gaussian", mu=0.5), Envelope(EnvelopeSpec("SecondMoment", gamma=0.6)),
                    1000, seeds=(3, 1), binning=64, extra_checkpoints=(500,))
    again = SimConfig.from_json(json.dumps(cfg.to_dict()))
    assert again == cfg
    assert SimConfig.from_dict(bern_config().to_dict()) == bern_config()
    with pytest.raises(DomainError):
        SimConfig.from_dict({**bern_config().to_dict(), "bogus": 1})


def test_constant_distribution_trajectory():
    spec = DistributionSpec("UniformDiscrete", points=[0.25], weights=[1.0])
    cfg = SimConfig(spec, UNIT, 1000)
    for r in run_trajectory(cfg, 0):
        assert r.ok and r.deficit == 0 and r.klinf == 0 and r.normalized == 0
        assert r.variance == 0 and r.quad_proxy == 0


def test_records_match_direct_computation():
    cfg = bern_config(T=500, seeds=(5,))
    recs = run_trajectory(cfg, 5)
    x = sample(BERN, RngState(5), 500)
    for r in recs:
        nu = empirical_from_samples(x[: r.t])
        assert r.mean == nu.mean and r.variance == nu.variance
        assert r.klinf == klinf_dual(nu, 0.5, SupportInterval(0, 1)).value
        assert r.B_t == 0.5 and r.width == 1.0
        if r.deficit > 0:
            assert r.r_t == pytest.approx(r.deficit / r.variance)


@pytest.fixture(scope="module")
def bern_1e6_seed42():
    return run_trajectory(bern_config(T=10**6, seeds=(42,)), 42)


def test_bernoulli_sandwich_every_checkpoint(bern_1e6_seed42):
    n_checked = 0
    for r in bern_1e6_seed42:
        c = check_record(r)
        assert False not in c.values(), (r.t, c)
        if c["sandwich"] is not None and r.deficit > 0:
            n_checked += 1
    assert n_checked > 10


def test_bernoulli_quadratic_ratio_at_last_eligible(bern_1e6_seed42):
    eligible = [r for r in bern_1e6_seed42
                if r.deficit > 0 and r.deficit >= 0.5 * math.sqrt(2 * r.variance * math.log(math.log(r.t)) / r.t)]
    assert eligible
    last = eligible[-1]
    assert 0.9 <= last.klinf / last.quad_proxy <= 1.1


def test_grid_refinement_invariance():
    coarse = run_trajectory(bern_config(T=20_000, checkpoint_ratio=1.3), 1)
    fine = run_trajectory(bern_config(T=20_000, checkpoint_ratio=1.05,
                                      extra_checkpoints=[r.t for r in coarse]), 1)
    by_t = {r.t: r for r in fine}
    for r in coarse:
        assert by_t[r.t] == r


def test_gaussian_grid_refinement_invariance():
    cfg = SimConfig(DistributionSpec("Gaussian"), Envelope(EnvelopeSpec("SubGaussian", v=1, eps=0.1)), 5000,
                    checkpoint_ratio=1.5)
    coarse = run_trajectory(cfg, 2)
    fine = {r.t: r for r in run_trajectory(replace(cfg, checkpoint_ratio=1.07,
                                                   extra_checkpoints=tuple(r.t for r in coarse)), 2)}
    for r in coarse:
        assert fine[r.t].normalized == r.normalized
        assert fine[r.t] == r


def test_thread_count_does_not_change_output():
    cfg = bern_config(T=20_000, seeds=(4, 0, 2, 9))
    one = run_seeds(cfg, threads=1)
    four = run_seeds(cfg, threads=4)
    assert [s for s, _ in one] == [0, 2, 4, 9]
    assert records_to_csv(one) == records_to_csv(four)


def test_envelope_mode_flags_infeasible_checkpoints():
    # mean 1 above a constant envelope of 0.5: constraint set is empty at every t
    cfg = SimConfig(DistributionSpec("Gaussian", mu=1.0, sigma=0.01), Envelope(EnvelopeSpec("Constant", B=2.0)), 100)
    recs = run_trajectory(cfg, 0)
    assert all(r.ok for r in recs)
    cfg = SimConfig(DistributionSpec("UniformCont", a=0.5, b=0.6), Envelope(EnvelopeSpec("Constant", B=0.55)), 100)
    recs = run_trajectory(cfg, 0)
    assert all(not r.envelope_ok and r.klinf == math.inf and r.error == "SupportOutsideInterval" for r in recs)
    cfg = SimConfig(DistributionSpec("UniformCont", a=0.5, b=0.6), Envelope(EnvelopeSpec("Constant", B=0.6)), 100)
    r = run_trajectory(cfg, 0)[0]
    assert r.envelope_ok
    cfg = SimConfig(DistributionSpec("UniformDiscrete", points=[0.0, 1.0], weights=[0.99, 0.01]),
                    Envelope(EnvelopeSpec("Constant", B=0.001)), 100)
    assert all(r.klinf == math.inf for r in run_trajectory(cfg, 1) if not r.envelope_ok)


def test_envelope_mean_above_envelope_marker():
    spec = DistributionSpec("UniformDiscrete", points=[0.0, 2.0], weights=[0.5, 0.5])
    cfg = SimConfig(spec, Envelope(EnvelopeSpec("Constant", B=0.9)), 50)
    recs = run_trajectory(cfg, 0)
    assert all("SupportOutsideInterval" in r.error or "MeanConstraintInfeasible" in r.error for r in recs)


def test_envelope_mode_r_t_uses_twice_B():
    cfg = SimConfig(DistributionSpec("Gaussian"), Envelope(EnvelopeSpec("SecondMoment", gamma=0.6)), 2000)
    for r in run_trajectory(cfg, 3):
        assert r.width == 2 * r.B_t
        if r.deficit > 0:
            assert r.r_t == pytest.approx(2 * r.B_t * r.deficit / r.variance)


def test_summary_running_max():
    recs = run_trajectory(bern_config(T=50_000), 7)
    s = summarize_seed(7, recs)
    assert all(s.running_max_normalized >= r.normalized for r in recs if r.ok)
    assert any(r.normalized == s.running_max_normalized and r.t == s.argmax_t for r in recs)


def test_aggregate_single_and_duplicated():
    recs = run_trajectory(bern_config(T=20_000), 3)
    summaries, qmax, qratio = aggregate_seeds([recs])
    assert len(set(qmax.values())) == 1 and qmax["0.5"] == summaries[0].running_max_normalized
    runs = [run_trajectory(bern_config(T=20_000), s) for s in range(5)]
    base = aggregate_seeds(runs)
    dup = aggregate_seeds([r for r in runs for _ in range(3)])
    assert base[1] == dup[1] and base[2] == dup[2]


def test_binned_brackets_exact():
    for seed in range(10):
        x = sample(DistributionSpec("Gaussian"), RngState(seed), 10**4)
        nu = empirical_from_samples(x)
        b = 6.0
        iv = SupportInterval(-b, b)
        m = 0.03
        bins = 256
        down, up = binned_measures(nu, bins)
        h = (nu.upper - nu.lower) / bins
        exact = klinf_dual(nu, m, iv).value
        hi = klinf_dual(down, m, iv)
        lo = klinf_dual(up, m, iv).value
        assert lo <= exact * (1 + 1e-12) + 1e-15 and exact <= hi.value * (1 + 1e-12) + 1e-15
        # sup g_down - sup g_up <= lam h E_up[1 / (1 + lam (m - x))] at lam = argmax g_down
        lam = hi.lambda_star
        bound = lam * h * float(np.dot(up.weights, 1.0 / (1.0 + lam * (m - up.support))))
        assert hi.value - lo <= bound * (1 + 1e-9)


def test_binned_run_reports_bracket():
    cfg = SimConfig(DistributionSpec("Gaussian"), Envelope(EnvelopeSpec("SecondMoment", gamma=0.6)), 5000, binning=64)
    exact = {r.t: r for r in run_trajectory(replace(cfg, binning=None), 0)}
    for r in run_trajectory(cfg, 0):
        if r.ok:
            assert r.klinf_lo <= exact[r.t].klinf * (1 + 1e-12) + 1e-15
            assert exact[r.t].klinf <= r.klinf_hi * (1 + 1e-12) + 1e-15
    text = records_to_csv([(0, run_trajectory(cfg, 0))], binned=True)
    assert text.splitlines()[0].endswith("klinf_lo,klinf_hi")


def test_collapse_small_run():
    cfg = SimConfig(DistributionSpec("Gaussian"), Envelope(EnvelopeSpec("SecondMoment", gamma=0.6)), 20_000, seeds=(11,))
    rows = envelope_collapse_experiment(cfg, EnvelopeSpec("SubGaussian", v=1, eps=0.1))
    assert any(r.eligible for r in rows)
    for r in rows:
        assert r.B_large >= r.B_small
        if r.eligible:
            assert r.normalized_large <= r.normalized_small * (1 + 1e-9) + 1e-15
            if r.eps <= 0.5:
                assert r.normalized_large <= r.sprinkle_cap * (1 + 1e-9)
        if r.deficit == 0 and r.eligible is False and r.normalized_large == 0:
            assert r.sprinkle_cap == 0
    with pytest.raises(DomainError):
        envelope_collapse_experiment(bern_config(), EnvelopeSpec("LILScale"))


def test_check_record_flags_violation():
    r = run_trajectory(bern_config(T=2000), 0)
    r = next(x for x in r if x.tilt_bound is not None and x.deficit > 0)
    assert check_record(replace(r, klinf=r.tilt_bound * 2))["sandwich"] is False
    assert check_record(replace(r, error="X")) == {"sandwich": None, "lower": None, "cap": None}


def test_csv_and_summary_layout():
    cfg = bern_config(T=100, seeds=(1, 0))
    runs = run_seeds(cfg)
    text = records_to_csv(runs, header_notes=["note"])
    lines = text.splitlines()
    assert lines[0] == "# note" and lines[1] == ",".join(CSV_COLUMNS)
    first = lines[2].split(",")
    assert first[0] == "0" and first[1] == "16"
    assert len(first) == len(CSV_COLUMNS)
    s = summary_dict(cfg, runs)
    assert [x["seed"] for x in s["seeds"]] == [0, 1]
    assert "limsup" in s["note"]
    assert records_to_gnuplot(runs).count("# seed") == 2
