"""Shared validation logic for causalgp parameters and inputs."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from causalgp._errors import InputError, ParameterDomainError


def require_positive(value: float, field_name: str, owner: str) -> None:
    """Raise ``ParameterDomainError`` unless *value* is finite and > 0."""
    if not (math.isfinite(value) and value > 0):
        msg = f"{owner} requires {field_name!r} > 0; received {value!r}"
        raise ParameterDomainError(msg)


def require_finite(value: float, field_name: str, owner: str) -> None:
    """Raise ``ParameterDomainError`` if *value* is NaN or infinite."""
    if not math.isfinite(value):
        msg = f"{owner} requires finite {field_name!r}; received {value!r}"
        raise ParameterDomainError(msg)


def require_same_length(owner: str, **sequences: Sequence[object]) -> None:
    """Raise ``ParameterDomainError`` unless all *sequences* have equal length."""
    lengths = {name: len(seq) for name, seq in sequences.items()}
    if len(set(lengths.values())) > 1:
        msg = f"{owner} requires equal lengths; received {lengths}"
        raise ParameterDomainError(msg)


def as_finite_times(times: ArrayLike, field_name: str = "times") -> NDArray[np.float64]:
    """Return *times* as a 1-D float array, raising ``InputError`` on NaN/inf."""
    arr = np.atleast_1d(np.asarray(times, dtype=float))
    if arr.ndim != 1:
        msg = f"{field_name} must be one-dimensional; received shape {arr.shape}"
        raise InputError(msg)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        msg = f"{field_name} must be finite; index {bad} is {arr[bad]!r}"
        raise InputError(msg)
    return arr
