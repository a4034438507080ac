"""Small argument checks shared by the estimators and the CLI."""

from __future__ import annotations

import math
import numbers
from typing import Iterable

import pandas as pd

from .exceptions import DomainError, SchemaError


def check_market_share(prop) -> float:
    if isinstance(prop, bool) or not isinstance(prop, numbers.Real):
        raise DomainError(f"prop must be a real number, got {prop!r}")
    prop = float(prop)
    if not (0.0 < prop < 1.0) or math.isnan(prop):
        raise DomainError(f"prop must be in (0,1), got {prop}")
    return prop


def check_min_obs(min_obs) -> int:
    if isinstance(min_obs, bool) or not isinstance(min_obs, numbers.Integral):
        raise DomainError(f"min_obs must be an integer, got {min_obs!r}")
    if min_obs < 1:
        raise DomainError(f"min_obs must be >= 1, got {min_obs}")
    return int(min_obs)


def check_columns(frame: pd.DataFrame, columns: Iterable[str], what: str = "column") -> None:
    """Raise :class:`SchemaError` naming the first absent column."""
    present = set(frame.columns)
    for col in columns:
        if col not in present:
            raise SchemaError(f"missing {what} {col!r}")


def as_name_list(names, argname: str) -> tuple[str, ...]:
    if isinstance(names, str):
        names = [names]
    names = tuple(names or ())
    if not names:
        raise SchemaError(f"{argname} must name at least one column")
    if len(set(names)) != len(names):
        raise DomainError(f"{argname} contains duplicate names: {list(names)}")
    return names
