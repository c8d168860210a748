"""Backoff controller deciding when the environment classifier runs.

The window doubles each time a check confirms the current label (up to a
cap) and collapses to 1 when the label changes. The counter always restarts
from the new window.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from caparrot.adapter.paramdb import REP_PARAMETERS, ParameterDB, REP
from caparrot.routing.params import ParameterSet

DEFAULT_CAP = 64


@dataclass(frozen=True)
class BackoffState:
    window: int = 1
    counter: int = 1
    label: REP | None = None
    cap: int = DEFAULT_CAP

    def __post_init__(self) -> None:
        if not 1 <= self.window <= self.cap:
            raise ValueError("window must lie in [1, cap]")
        if not 0 <= self.counter <= self.window:
            raise ValueError("counter must lie in [0, window]")


def backoff_tick(state: BackoffState, classify_fn: Callable[[], REP | None],
                 db: ParameterDB = REP_PARAMETERS) -> tuple[BackoffState, ParameterSet | None]:
    """Advance one timer event.

    ``classify_fn`` returns the current label, or None when not enough
    observations are available. A parameter set is returned only when the
    label changes.
    """
    counter = state.counter - 1
    if counter > 0:
        return replace(state, counter=counter), None
    label = classify_fn()
    if label is None:
        return replace(state, counter=state.window), None
    if label != state.label:
        return BackoffState(1, 1, label, state.cap), db[label]
    window = min(2 * state.window, state.cap)
    return BackoffState(window, window, label, state.cap), None
