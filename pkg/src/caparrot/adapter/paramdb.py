from __future__ import annotations

from enum import Enum
from types import MappingProxyType
from typing import Mapping

from caparrot.routing.params import ParameterSet


class REP(str, Enum):
    """Radio environment prototype. Declaration order is the tie-break order."""

    RURAL = "rural"
    SUBURBAN = "suburban"
    URBAN = "urban"

    @classmethod
    def ordered(cls) -> list["REP"]:
        return [cls.RURAL, cls.SUBURBAN, cls.URBAN]


ParameterDB = Mapping[REP, ParameterSet]

REP_PARAMETERS: ParameterDB = MappingProxyType({
    REP.RURAL: ParameterSet(r_b=-5.0, alpha=0.5, gamma0=0.8, lam=1, omega=1),
    REP.SUBURBAN: ParameterSet(r_b=600.0, alpha=0.2, gamma0=0.2, lam=3, omega=2),
    REP.URBAN: ParameterSet(r_b=20.0, alpha=0.6, gamma0=0.3, lam=1, omega=2),
})


def lookup_parameters(db: ParameterDB, label: REP | str) -> ParameterSet:
    return db[REP(label)]
