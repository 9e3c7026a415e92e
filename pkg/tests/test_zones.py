import numpy as np
import pytest

from cardioloop.errors import ParameterError
from cardioloop.zones import (AthleteProfile, classify, compute_zone_model)


def model_for(age, formula="tanaka"):
    return compute_zone_model(AthleteProfile(age, formula))


def test_tanaka_age_30():
    m = model_for(30)
    assert m.hr_max_bpm == pytest.approx(187.0)
    lo, hi = m.zone_bounds(3)
    assert lo == pytest.approx(130.9)
    assert hi == pytest.approx(149.6)


def test_fox_age_40():
    assert model_for(40, "fox").hr_max_bpm == pytest.approx(180.0)


@pytest.mark.parametrize("age", [0, 9, 101, 300])
def test_age_out_of_range(age):
    with pytest.raises(ParameterError):
        AthleteProfile(age)


def test_unknown_formula():
    with pytest.raises(ParameterError):
        AthleteProfile(30, "karvonen")


def test_rest_hr_must_be_below_max():
    with pytest.raises(ParameterError):
        AthleteProfile(30, hr_rest_bpm=190.0)
    AthleteProfile(30, hr_rest_bpm=55.0)


def test_classify_examples():
    m = model_for(30)
    # 140 / 187 = 0.749 -> zone 3
    assert classify(140.0, m) == 3
    # exact 60% boundary belongs to the upper zone (half-open convention)
    assert classify(0.6 * m.hr_max_bpm, m) == 2
    assert classify(0.49 * m.hr_max_bpm, m) == 0
    assert classify(m.hr_max_bpm, m) == 5
    assert classify(250.0, m) == 5


def test_classify_rejects_nonpositive():
    m = model_for(30)
    with pytest.raises(ParameterError):
        classify(0.0, m)
    with pytest.raises(ParameterError):
        classify(-10.0, m)


def test_classify_monotone_and_total():
    m = model_for(42)
    rng = np.random.default_rng(0)
    hrs = np.sort(rng.uniform(1.0, 250.0, 500))
    zones = [classify(float(h), m) for h in hrs]
    assert all(b >= a for a, b in zip(zones, zones[1:]))
    assert all(0 <= z <= 5 for z in zones)


def test_tanaka_range_keeps_boundaries_ordered():
    for age in range(10, 101):
        m = model_for(age)
        assert 138.0 <= m.hr_max_bpm <= 201.0
        assert all(b < a for b, a in zip(m.boundaries, m.boundaries[1:]))


def test_zone_center():
    m = model_for(30)
    assert m.zone_center(3) == pytest.approx(140.25)
