"""Pathloss models for the three radio environment prototypes.

Rural links use log-distance (Friis with a custom exponent), sub-urban links
a two-ray ground reflection model using node altitudes as antenna heights,
and urban links log-distance pathloss with Nakagami-m fading on top.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
MIN_ANTENNA_HEIGHT_M = 1.5


@dataclass(frozen=True)
class Friis:
    exponent: float = 2.75

    def __post_init__(self) -> None:
        if self.exponent < 2.0:
            raise ValueError("pathloss exponent must be >= 2")


@dataclass(frozen=True)
class TwoRayGround:
    pass


@dataclass(frozen=True)
class Nakagami:
    exponent: float = 2.75
    m: float = 2.0

    def __post_init__(self) -> None:
        if self.exponent < 2.0:
            raise ValueError("pathloss exponent must be >= 2")
        if self.m < 0.5:
            raise ValueError("Nakagami shape m must be >= 0.5")


ChannelModel = Union[Friis, TwoRayGround, Nakagami]

# channel names used in scenario files
PROTOTYPES: dict[str, ChannelModel] = {
    "rural": Friis(2.75),
    "suburban": TwoRayGround(),
    "urban": Nakagami(2.75, 2.0),
}


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = 20.0
    sensitivity_dbm: float = -85.0
    frequency_hz: float = 2.4e9
    range_exponent: float = 2.75

    def __post_init__(self) -> None:
        if not self.tx_power_dbm > self.sensitivity_dbm:
            raise ValueError("tx power must exceed receiver sensitivity")
        if not self.frequency_hz > 0:
            raise ValueError("frequency must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz


@functools.lru_cache(maxsize=32)
def reference_loss_db(frequency_hz: float) -> float:
    """Free-space loss at 1 m."""
    return 20.0 * math.log10(4.0 * math.pi * frequency_hz / SPEED_OF_LIGHT)


def _check_distance(distance) -> None:
    if np.any(np.asarray(distance) <= 0):
        raise ValueError("distance must be positive")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def pathloss_db(model: ChannelModel, distance, alt_tx=MIN_ANTENNA_HEIGHT_M,
                alt_rx=MIN_ANTENNA_HEIGHT_M, frequency_hz: float = 2.4e9):
    """Mean pathloss in dB. Accepts scalars or numpy arrays for distance and altitudes."""
    _check_distance(distance)
    pl0 = reference_loss_db(frequency_hz)
    if isinstance(model, (Friis, Nakagami)):
        return _scalar(pl0 + 10.0 * model.exponent * np.log10(distance))
    if isinstance(model, TwoRayGround):
        ht = np.maximum(alt_tx, MIN_ANTENNA_HEIGHT_M)
        hr = np.maximum(alt_rx, MIN_ANTENNA_HEIGHT_M)
        wavelength = SPEED_OF_LIGHT / frequency_hz
        crossover = 4.0 * math.pi * ht * hr / wavelength
        free = pl0 + 20.0 * np.log10(distance)
        ground = 40.0 * np.log10(distance) - 10.0 * np.log10(ht**2 * hr**2)
        return _scalar(np.where(distance > crossover, ground, free))
    raise TypeError(f"unknown channel model {model!r}")


def mean_rss_dbm(model: ChannelModel, cfg: RadioConfig, distance, alt_tx=MIN_ANTENNA_HEIGHT_M,
                 alt_rx=MIN_ANTENNA_HEIGHT_M):
    return cfg.tx_power_dbm - pathloss_db(model, distance, alt_tx, alt_rx, cfg.frequency_hz)


def sample_rss(model: ChannelModel, cfg: RadioConfig, distance, alts=(MIN_ANTENNA_HEIGHT_M,
               MIN_ANTENNA_HEIGHT_M), rng: np.random.Generator | None = None):
    """Received signal strength in dBm.

    Deterministic for Friis and two-ray ground. For Nakagami the linear
    received power is scaled by a unit-mean Gamma(m) draw, one per element.
    """
    rss = mean_rss_dbm(model, cfg, distance, alts[0], alts[1])
    if isinstance(model, Nakagami):
        if rng is None:
            raise ValueError("Nakagami fading needs a random generator")
        gain = rng.gamma(model.m, 1.0 / model.m, size=np.shape(rss))
        with np.errstate(divide="ignore"):
            rss = rss + 10.0 * np.log10(gain)
    if np.ndim(rss) == 0:
        return float(rss)
    return rss


def link_rss(model: ChannelModel, cfg: RadioConfig, distance: float, alt_tx: float, alt_rx: float,
             rng: np.random.Generator | None = None) -> float:
    """Scalar fast path of :func:`sample_rss` for a single link."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    pl0 = reference_loss_db(cfg.frequency_hz)
    if isinstance(model, TwoRayGround):
        ht = max(alt_tx, MIN_ANTENNA_HEIGHT_M)
        hr = max(alt_rx, MIN_ANTENNA_HEIGHT_M)
        if distance > 4.0 * math.pi * ht * hr / cfg.wavelength:
            pl = 40.0 * math.log10(distance) - 10.0 * math.log10(ht * ht * hr * hr)
        else:
            pl = pl0 + 20.0 * math.log10(distance)
        return cfg.tx_power_dbm - pl
    rss = cfg.tx_power_dbm - pl0 - 10.0 * model.exponent * math.log10(distance)
    if isinstance(model, Nakagami):
        if rng is None:
            raise ValueError("Nakagami fading needs a random generator")
        gain = rng.gamma(model.m, 1.0 / model.m)
        rss += 10.0 * math.log10(gain) if gain > 0 else -math.inf
    return rss


def reception(rss, cfg: RadioConfig):
    """Frame is decodable iff the RSS reaches the sensitivity (boundary inclusive)."""
    return rss >= cfg.sensitivity_dbm


def derive_range(cfg: RadioConfig) -> float:
    """Communication range r_TX from a log-distance model with ``cfg.range_exponent``."""
    budget = cfg.tx_power_dbm - cfg.sensitivity_dbm - reference_loss_db(cfg.frequency_hz)
    return 10.0 ** (budget / (10.0 * cfg.range_exponent))


def reception_probability(model: ChannelModel, cfg: RadioConfig, distance: float,
                          alts=(MIN_ANTENNA_HEIGHT_M, MIN_ANTENNA_HEIGHT_M)) -> float:
    """Probability that a single frame over ``distance`` is received."""
    margin_db = float(mean_rss_dbm(model, cfg, distance, alts[0], alts[1])) - cfg.sensitivity_dbm
    if not isinstance(model, Nakagami):
        return 1.0 if margin_db >= 0 else 0.0
    from scipy.stats import gamma

    # gain >= 10^(-margin/10) with gain ~ Gamma(m, 1/m)
    return float(gamma.sf(10.0 ** (-margin_db / 10.0), model.m, scale=1.0 / model.m))


def channel_from_name(name: str) -> ChannelModel:
    try:
        return PROTOTYPES[name]
    except KeyError:
        raise ValueError(f"unknown channel {name!r}; expected one of {sorted(PROTOTYPES)}") from None


def channel_name(model: ChannelModel) -> str | None:
    for name, m in PROTOTYPES.items():
        if m == model:
            return name
    return None
