"""Features of a window of (RSS, distance) observations."""

from __future__ import annotations

from collections import deque
from dataclasses import astuple, dataclass

import numpy as np

MIN_SAMPLES = 10
DEFAULT_WINDOW = 50

FEATURE_NAMES = ("exponent", "intercept_db", "residual_std_db", "rss_var_db2", "mean_distance_m")


@dataclass(frozen=True)
class FeatureVector:
    exponent: float
    intercept_db: float
    residual_std_db: float
    rss_var_db2: float
    mean_distance_m: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


class SampleWindow:
    """Sliding window of the most recent (rss_dbm, distance_m) pairs."""

    def __init__(self, capacity: int = DEFAULT_WINDOW):
        self.capacity = capacity
        self._rss: deque[float] = deque(maxlen=capacity)
        self._dist: deque[float] = deque(maxlen=capacity)

    def add(self, rss_dbm: float, distance_m: float) -> None:
        if not distance_m > 0:
            raise ValueError("distance must be positive")
        self._rss.append(rss_dbm)
        self._dist.append(distance_m)

    def __len__(self) -> int:
        return len(self._rss)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.fromiter(self._rss, float, len(self._rss)), np.fromiter(self._dist, float, len(self._dist))


def features_from_arrays(rss: np.ndarray, distance: np.ndarray) -> FeatureVector | None:
    """Least-squares fit of rss = intercept + exponent * (-10 log10 d).

    Returns None when the window cannot support the fit (too few samples or a
    single distinct distance).
    """
    rss = np.asarray(rss, dtype=float)
    distance = np.asarray(distance, dtype=float)
    if rss.size < MIN_SAMPLES or np.unique(distance).size < 2:
        return None
    x = -10.0 * np.log10(distance)
    xm = x.mean()
    ym = rss.mean()
    sxx = np.dot(x - xm, x - xm)
    if sxx <= 0:
        return None
    slope = np.dot(x - xm, rss - ym) / sxx
    intercept = ym - slope * xm
    resid = rss - (intercept + slope * x)
    return FeatureVector(
        exponent=float(slope),
        intercept_db=float(intercept),
        residual_std_db=float(np.sqrt(np.mean(resid * resid))),
        rss_var_db2=float(np.var(rss)),
        mean_distance_m=float(distance.mean()),
    )


def extract_features(window: SampleWindow) -> FeatureVector | None:
    return features_from_arrays(*window.arrays())
