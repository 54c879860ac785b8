import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import H_EFF_TWO, J1_TWO, J2_TWO
from traj_embed import fixtures
from traj_embed.embedding import Lindblad, embed_process
from traj_embed.errors import GridTooShort, NotErasingError
from traj_embed.process_core import Exponential, Tabulated, validate_spec
from traj_embed.reverse_map import (
    NotErasing,
    conditional_density,
    extract_hsmm,
    is_erasing,
    lyapunov_totals,
    roundtrip_check,
    survival_after,
)

P = 0.25


@pytest.fixture(scope="module")
def closed_two():
    return Lindblad(H_EFF_TWO, {"1": J1_TWO, "2": J2_TWO})


def test_two_channel_is_erasing(closed_two):
    st_ = is_erasing(closed_two)
    assert st_
    np.testing.assert_allclose(st_.states["1"], [math.sqrt(P), math.sqrt(1 - P)], atol=1e-14)
    for x in ("1", "2"):
        np.testing.assert_allclose(st_.reconstruct(x), closed_two.jumps[x], atol=1e-14)


def test_three_state_is_erasing(three_lb):
    st_ = is_erasing(three_lb)
    np.testing.assert_allclose(st_.states["y"], [0.5, math.sqrt(3) / 2], atol=1e-12)
    assert abs(np.linalg.det(three_lb.jumps["y"])) < 1e-14


def test_identity_jump_refused():
    lb = Lindblad(-0.5j * np.eye(2), {"a": np.eye(2)})
    verdict = is_erasing(lb)
    assert isinstance(verdict, NotErasing) and not verdict
    assert verdict.ratio == pytest.approx(1.0)
    with pytest.raises(NotErasingError):
        extract_hsmm(lb)


def test_conditional_density_closed_form(closed_two):
    ts = np.linspace(0, 4, 9)
    # after a '1' the process sits in g1
    expected = P * 2 * np.exp(-2 * ts)
    np.testing.assert_allclose(conditional_density(closed_two, "1", "1", ts), expected, atol=1e-14)
    assert survival_after(closed_two, "1", 1.0) == pytest.approx(P * math.exp(-2) + (1 - P) * math.exp(-1))


def test_no_repeat_density(three_lb):
    ts = np.linspace(0, 10, 21)
    for x in "xyz":
        assert np.all(conditional_density(three_lb, x, x, ts) < 1e-15)


def test_tail_vanishes(closed_two):
    assert conditional_density(closed_two, "1", "2", 100.0) < 1e-12


def test_lyapunov_matches_quadrature(closed_two):
    spec = extract_hsmm(closed_two)
    for x in ("1", "2"):
        tot = lyapunov_totals(closed_two, x)
        assert sum(tot.values()) == pytest.approx(1.0, abs=1e-12)
        for b in spec.branches[x]:
            assert b.prob == pytest.approx(tot[b.symbol], abs=1e-10)


def test_two_channel_extraction(closed_two):
    ex = extract_hsmm(closed_two, full=True)
    spec = ex.spec
    assert spec.modes == ("1", "2")
    b = spec.branch("1", "1")
    assert b.prob == pytest.approx(P, abs=1e-10)
    assert isinstance(b.dwell, Exponential) and b.dwell.rate == pytest.approx(2.0, abs=1e-10)
    assert set(ex.families.values()) == {"Exponential"}


def test_three_state_extraction(three_lb):
    spec = extract_hsmm(three_lb)
    for x in "xyz":
        for b in spec.branches[x]:
            assert b.symbol != x
            assert b.prob == pytest.approx(0.5, abs=1e-10)
            assert isinstance(b.dwell, Exponential)


def test_three_state_rate_irrelevant():
    a = extract_hsmm(embed_process(fixtures.three_state(), rate=1.0)[0])
    b = extract_hsmm(embed_process(fixtures.three_state(), rate=3.0)[0])
    for x in "xyz":
        for ba, bb in zip(a.branches[x], b.branches[x]):
            assert ba.symbol == bb.symbol and ba.prob == pytest.approx(bb.prob, abs=1e-12)
            assert 3 * ba.dwell.rate == pytest.approx(bb.dwell.rate, rel=1e-10)


def test_poisson_extraction(poisson_lb):
    spec = extract_hsmm(poisson_lb)
    (b,) = spec.branches["e"]
    assert b.prob == 1.0 and isinstance(b.dwell, Exponential)
    assert b.dwell.rate == pytest.approx(1.0, abs=1e-8)


def test_short_grid_refused(closed_two):
    with pytest.raises(GridTooShort):
        extract_hsmm(closed_two, t_grid=np.linspace(0, 5, 11))


def test_roundtrip_two_channel(two_spec):
    rep = roundtrip_check(two_spec)
    assert rep.passed, (rep.max_T_error, rep.max_density_error)


def test_roundtrip_three_state(three_spec):
    rep = roundtrip_check(three_spec, rate=1.0)
    assert rep.passed, (rep.max_T_error, rep.max_density_error)


def test_rate_switch_extraction():
    # numeric embedding: transition probabilities survive even when the dwell
    # laws fall back to tables
    lb, _ = embed_process(fixtures.rate_switch())
    rep = roundtrip_check(fixtures.rate_switch())
    assert rep.max_T_error < 1e-6
    assert rep.max_density_error < 1e-2
    spec = extract_hsmm(lb)
    validate_spec(spec)


def random_erasing(seed, D=2, symbols=("a", "b")):
    rng = np.random.default_rng(seed)
    jumps = {}
    for x in symbols:
        psi = rng.normal(size=D) + 1j * rng.normal(size=D)
        row = rng.normal(size=D) + 1j * rng.normal(size=D)
        jumps[x] = np.outer(psi / np.linalg.norm(psi), row.conj())
    S = sum(J.conj().T @ J for J in jumps.values())
    return Lindblad(-0.5j * S, jumps, H=np.zeros((D, D)))


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_random_erasing_extracts_valid_spec(seed):
    lb = random_erasing(seed)
    spec = extract_hsmm(lb, grid_points=801)
    validate_spec(spec)
    for x in spec.modes:
        tot = lyapunov_totals(lb, x)
        for b in spec.branches[x]:
            assert b.prob == pytest.approx(tot[b.symbol] / sum(tot.values()), abs=1e-8)
            if isinstance(b.dwell, Tabulated):
                assert b.dwell.problems() == []
