import numpy as np
import pytest
from scipy import special

from traj_embed import fixtures
from traj_embed.analysis import (
    compare_ensemble,
    compare_logs,
    empirical_transition_matrix,
    ks_2samp,
    ks_test,
    validate_run,
)
from traj_embed.errors import DimensionMismatch, EmptyLog, TooFewSamples
from traj_embed.process_core import EventLog, classical_sample, lift_discrete
from traj_embed.trajectory_engine import run_trajectory


def exp_cdf(rate):
    return lambda t: 1.0 - np.exp(-rate * np.asarray(t))


def ks_oracle(samples, cdf):
    # direct evaluation of the empirical-CDF sup distance and Kolmogorov tail
    x = np.sort(samples)
    n = x.size
    F = cdf(x)
    d = max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))
    return d, special.kolmogorov(np.sqrt(n) * d)


def test_ks_matches_oracle():
    rng = np.random.default_rng(0)
    x = rng.exponential(1.0, 2000)
    d, p = ks_test(x, exp_cdf(1.0))
    d0, p0 = ks_oracle(x, exp_cdf(1.0))
    assert d == pytest.approx(d0, abs=1e-14)
    assert p == pytest.approx(p0, rel=1e-10)


def test_ks_calibration():
    passes = 0
    for seed in range(100):
        x = np.random.default_rng(seed).exponential(1.0, 10_000)
        passes += ks_test(x, exp_cdf(1.0))[1] > 0.01
    assert passes >= 98


def test_ks_power():
    x = np.random.default_rng(1).exponential(1.0, 10_000)
    assert ks_test(x, exp_cdf(2.0))[1] < 1e-6


def test_ks_needs_samples():
    with pytest.raises(TooFewSamples):
        ks_test([], exp_cdf(1.0))
    with pytest.raises(TooFewSamples):
        ks_test(np.ones(49), exp_cdf(1.0))
    with pytest.raises(TooFewSamples):
        ks_2samp(np.ones(10), np.ones(100))


def test_trace_distance():
    rho = np.array([[0.6, 0.1j], [-0.1j, 0.4]])
    assert compare_ensemble(rho, rho) == 0.0
    assert compare_ensemble(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)
    assert compare_ensemble(np.eye(2) / 2, np.diag([1.0, 0.0])) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        compare_ensemble(np.eye(2) / 2, np.eye(3) / 3)
    with pytest.raises(ValueError):
        compare_ensemble(np.eye(2), np.eye(2) / 2)


def test_transition_matrix_three_state(three_lb):
    log, _ = run_trajectory(three_lb, seed=8, n_events=100_000, record_path=False)
    est = empirical_transition_matrix(log)
    assert est.rows == ["x", "y", "z"]
    P = est.matrix
    assert np.all(np.diag(P) == 0)
    off = ~np.eye(3, dtype=bool)
    assert np.all(np.abs(P[off] - 0.5) <= est.radius[off])


def test_transition_matrix_cycle():
    spec = lift_discrete(fixtures.cycle(3), 1.0)
    log = classical_sample(spec, 0, 300)
    log.modes = None
    est = empirical_transition_matrix(log, spec)
    # mode after symbol k is k, which emits k+1 next
    np.testing.assert_array_equal(est.matrix, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def test_transition_two_channel(two_spec):
    log = classical_sample(two_spec, 2, 20_000)
    log.modes = None
    est = empirical_transition_matrix(log, two_spec)
    assert abs(est.matrix[0, 0] - 0.25) <= est.radius[0, 0]


def test_transition_empty():
    with pytest.raises(EmptyLog):
        empirical_transition_matrix(EventLog([], []))


def test_classical_log_passes(two_spec):
    log = classical_sample(two_spec, 3, 20_000)
    assert validate_run(two_spec, log).verdict == "PASS"
    log.modes = None  # previous-symbol attribution
    assert validate_run(two_spec, log).verdict == "PASS"


def test_wrong_p_fails(two_spec):
    log = classical_sample(two_spec, 4, 20_000)
    rep = validate_run(fixtures.two_channel(0.75), log)
    assert rep.verdict == "FAIL"
    assert any(f.startswith("transition") for f in rep.failures)


def test_wrong_rate_fails(two_spec):
    log = classical_sample(two_spec, 4, 20_000)
    rep = validate_run(fixtures.two_channel(0.25, 2.0, 1.3), log)
    assert any(f.startswith("KS") for f in rep.failures)


def test_trajectory_log_passes(two_lb, two_spec):
    log, _ = run_trajectory(two_lb, seed=6, n_events=20_000, record_path=False)
    rep = validate_run(two_spec, log)
    assert rep.verdict == "PASS", rep.summary()
    ref = classical_sample(two_spec, 6, 20_000)
    assert all(r["ok"] for r in compare_logs(two_spec, log, ref).values())


def test_discrete_spec_needs_rate(three_spec):
    log = classical_sample(lift_discrete(three_spec, 1.0), 0, 2000)
    with pytest.raises(ValueError):
        validate_run(three_spec, log)
    assert validate_run(three_spec, log, rate=1.0).verdict == "PASS"


def test_unknown_symbol_rejected(two_spec):
    with pytest.raises(ValueError):
        validate_run(two_spec, EventLog(["1", "q"], [0.1, 0.2]))


def test_report_bounds(two_spec):
    rep = validate_run(two_spec, classical_sample(two_spec, 9, 5000))
    d = rep.to_dict()
    assert all(0 <= r["p"] <= 1 for r in d["ks"])
    assert 0 <= d["chi2"]["p"] <= 1
    assert "verdict: PASS" in rep.summary()


def test_validation_calibration(two_spec):
    passes = sum(
        validate_run(two_spec, classical_sample(two_spec, seed, 10_000)).verdict == "PASS"
        for seed in range(100)
    )
    assert passes >= 95
