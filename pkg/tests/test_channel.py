import math

import numpy as np
import pytest

from caparrot.channel import (PROTOTYPES, Friis, Nakagami, RadioConfig, TwoRayGround, channel_from_name,
                              channel_name, derive_range, link_rss, mean_rss_dbm, pathloss_db,
                              reception, reception_probability, reference_loss_db, sample_rss)

C = 299_792_458.0
CFG = RadioConfig()


def test_reference_loss_at_one_metre():
    oracle = 20 * math.log10(4 * math.pi * 2.4e9 / C)
    assert reference_loss_db(2.4e9) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(40.05, abs=0.01)


def test_log_distance_values():
    assert pathloss_db(Friis(2.75), 100.0) == pytest.approx(95.05, abs=0.01)
    assert pathloss_db(Friis(2.0), 100.0) == pytest.approx(80.05, abs=0.01)
    d = np.array([1.0, 10.0, 100.0])
    np.testing.assert_allclose(pathloss_db(Friis(2.0), d) - reference_loss_db(2.4e9), [0, 20, 40])


def test_derived_range():
    assert derive_range(CFG) == pytest.approx(230.0, abs=1.0)
    assert derive_range(RadioConfig(range_exponent=2.0)) == pytest.approx(1768.0, abs=2.0)
    # the range is exactly where the mean RSS meets the sensitivity
    r = derive_range(CFG)
    assert mean_rss_dbm(Friis(2.75), CFG, r) == pytest.approx(CFG.sensitivity_dbm, abs=1e-9)


def test_two_ray_crossover():
    lam = C / 2.4e9
    h = 10.0
    dc = 4 * math.pi * h * h / lam
    model = TwoRayGround()
    below = pathloss_db(model, dc * 0.9, h, h)
    above = pathloss_db(model, dc * 2, h, h)
    assert below == pytest.approx(reference_loss_db(2.4e9) + 20 * math.log10(dc * 0.9))
    assert above == pytest.approx(40 * math.log10(dc * 2) - 20 * math.log10(h * h))
    # the two branches meet at the crossover
    lo = reference_loss_db(2.4e9) + 20 * math.log10(dc)
    hi = 40 * math.log10(dc) - 20 * math.log10(h * h)
    assert lo == pytest.approx(hi, abs=1e-9)


def test_two_ray_clamps_low_antennas():
    m = TwoRayGround()
    assert pathloss_db(m, 800.0, 0.0, 0.2) == pathloss_db(m, 800.0, 1.5, 1.5)


def test_scalar_path_agrees_with_vector_path():
    for name, model in PROTOTYPES.items():
        if isinstance(model, Nakagami):
            continue
        for d in (5.0, 150.0, 700.0):
            assert link_rss(model, CFG, d, 40.0, 120.0) == pytest.approx(
                mean_rss_dbm(model, CFG, d, 40.0, 120.0), abs=1e-9), name


def test_nakagami_mean_power_is_preserved():
    rng = np.random.default_rng(0)
    model = Nakagami(2.75, 2.0)
    d = np.full(200_000, 120.0)
    rss = sample_rss(model, CFG, d, rng=rng)
    lin = np.mean(10 ** (rss / 10))
    expected = 10 ** (mean_rss_dbm(model, CFG, 120.0) / 10)
    assert lin == pytest.approx(expected, rel=0.01)


@pytest.mark.parametrize("distance", [150.0, 230.0, 300.0])
def test_nakagami_delivery_matches_gamma_tail(distance):
    from scipy.stats import gamma

    rng = np.random.default_rng(1)
    model = Nakagami(2.75, 2.0)
    rss = sample_rss(model, CFG, np.full(100_000, distance), rng=rng)
    rate = reception(rss, CFG).mean()
    margin = mean_rss_dbm(model, CFG, distance) - CFG.sensitivity_dbm
    oracle = gamma.sf(10 ** (-margin / 10), 2.0, scale=0.5)
    assert rate == pytest.approx(oracle, abs=0.02)
    assert reception_probability(model, CFG, distance) == pytest.approx(oracle, abs=1e-12)


def test_deterministic_models_have_step_reception():
    r = derive_range(CFG)
    assert reception_probability(Friis(2.75), CFG, r * 0.99) == 1.0
    assert reception_probability(Friis(2.75), CFG, r * 1.01) == 0.0
    assert reception(CFG.sensitivity_dbm, CFG)  # boundary inclusive


def test_errors():
    with pytest.raises(ValueError):
        pathloss_db(Friis(), 0.0)
    with pytest.raises(ValueError):
        Friis(1.5)
    with pytest.raises(ValueError):
        Nakagami(2.75, 0.3)
    with pytest.raises(ValueError):
        sample_rss(Nakagami(), CFG, 10.0)
    with pytest.raises(ValueError):
        channel_from_name("desert")


def test_prototype_names_round_trip():
    for name in ("rural", "suburban", "urban"):
        assert channel_name(channel_from_name(name)) == name
    assert channel_name(Friis(3.1)) is None
