from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ParameterSet:
    """Per-environment protocol tuning (range budget, learning rate, discount, weightings)."""

    r_b: float = 0.0
    alpha: float = 0.5
    gamma0: float = 0.8
    lam: int = 1
    omega: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma0 < 1.0:
            raise ValueError("gamma0 must lie in [0, 1)")
        if self.lam < 1 or self.omega < 1:
            raise ValueError("link and cohesion weightings must be positive integers")


@dataclass(frozen=True)
class TimerConfig:
    chirp_interval: float = 0.5
    commit_interval: float = 0.5

    def __post_init__(self) -> None:
        if not (self.chirp_interval > 0 and self.commit_interval > 0):
            raise ValueError("timer intervals must be positive")
