import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from harvestsim.rates import RateFunction, linear_rate, log_rate


def test_linear_eval():
    rf = linear_rate(10.0)
    assert rf.bits(0.5) == pytest.approx(5.0)


def test_log_matches_fig4_caption_value():
    # ln(1 + 10) = 2.3979..., the "g(E[Y])=2.4" operating point
    rf = log_rate(beta=1.0)
    assert rf.bits(10.0) == pytest.approx(math.log(11.0), abs=1e-12)
    assert rf.bits(10.0) == pytest.approx(2.4, abs=3e-3)


def test_zero_energy_zero_bits():
    for rf in (linear_rate(10.0), log_rate(), log_rate(half_factor=True),
               log_rate(beta=3.0, log_base=2.0)):
        assert rf.bits(0.0) == 0.0


def test_half_factor_prefactor():
    rf = log_rate(beta=2.0, half_factor=True)
    assert rf.bits(3.0) == pytest.approx(0.5 * math.log(7.0))


def test_log_base_two():
    rf = log_rate(beta=1.0, log_base=2.0)
    assert rf.bits(1.0) == pytest.approx(1.0)
    assert rf.bits(3.0) == pytest.approx(2.0)


def test_inverse_linear():
    rf = linear_rate(10.0)
    assert rf.energy(2.0) == pytest.approx(0.2)


def test_inverse_log_closed_form():
    rf = log_rate(beta=1.0)
    assert rf.energy(1.0) == pytest.approx(math.e - 1.0, rel=1e-12)


@pytest.mark.parametrize("t", [0.1, 1.0, 7.0])
def test_round_trip_energy_bits_energy(t):
    for rf in (linear_rate(10.0), log_rate(), log_rate(beta=2.5, log_base=2.0),
               log_rate(half_factor=True)):
        assert rf.energy(rf.bits(t)) == pytest.approx(t, rel=1e-12)


def test_round_trip_bits_energy_bits_grid():
    rf = log_rate(beta=0.7, log_base=2.0, half_factor=True)
    for b in np.linspace(0.0, 100.0, 101):
        assert rf.bits(rf.energy(b)) == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_nondecreasing_on_grid():
    grid = np.linspace(0.0, 50.0, 200)
    for rf in (linear_rate(3.0), log_rate(beta=2.0), log_rate(log_base=2.0)):
        vals = [rf.bits(t) for t in grid]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_log_concave_on_grid():
    rf = log_rate(beta=1.3)
    grid = np.linspace(0.0, 20.0, 50)
    for a in grid:
        for b in grid[::7]:
            assert rf.bits((a + b) / 2) >= (rf.bits(a) + rf.bits(b)) / 2 - 1e-12


def test_negative_arguments_rejected():
    rf = log_rate()
    with pytest.raises(ValueError):
        rf.bits(-0.1)
    with pytest.raises(ValueError):
        rf.energy(-0.1)


def test_bad_configs_rejected():
    with pytest.raises(ValueError):
        RateFunction(kind="linear", gamma=0.0)
    with pytest.raises(ValueError):
        RateFunction(kind="log", beta=-1.0)
    with pytest.raises(ValueError):
        RateFunction(kind="log", log_base=1.0)
    with pytest.raises(ValueError):
        RateFunction(kind="sqrt")


@given(st.floats(min_value=0.0, max_value=1e4),
       st.floats(min_value=0.01, max_value=100.0),
       st.booleans())
def test_round_trip_property(t, beta, half):
    rf = log_rate(beta=beta, half_factor=half)
    assert rf.energy(rf.bits(t)) == pytest.approx(t, rel=1e-9, abs=1e-12)
