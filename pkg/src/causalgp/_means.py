"""Exponential-decay treatment mean used by the OU+Exp baseline."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from causalgp._validate import require_finite, require_positive, require_same_length


@dataclass(frozen=True)
class ExpDecayMean:
    """``c + sum_m a_m exp(-gamma_m (t - t_m)) 1(t > t_m)``; per-administration entries."""

    c: float
    a: tuple[float, ...] = ()
    gamma: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        require_finite(self.c, "c", "ExpDecayMean")
        require_same_length("ExpDecayMean", a=self.a, gamma=self.gamma)
        for m, (amp, rate) in enumerate(zip(self.a, self.gamma, strict=True)):
            require_finite(amp, f"a[{m}]", "ExpDecayMean")
            require_positive(rate, f"gamma[{m}]", "ExpDecayMean")

    def to_dict(self) -> dict[str, object]:
        return {"c": self.c, "a": list(self.a), "gamma": list(self.gamma)}

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> ExpDecayMean:
        return cls(
            c=float(data["c"]),  # type: ignore[arg-type]
            a=tuple(data.get("a", ())),  # type: ignore[arg-type]
            gamma=tuple(data.get("gamma", ())),  # type: ignore[arg-type]
        )


def decay_profiles(
    t: ArrayLike,
    params: ExpDecayMean,
    marks: Sequence[float],
) -> NDArray[np.float64]:
    """Per-administration unit decay curves, shape ``(len(marks), len(t))``."""
    require_same_length("decay_profiles", a=params.a, marks=marks)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rows = [
        np.where(t > t_m, np.exp(-rate * np.maximum(t - t_m, 0.0)), 0.0)
        for rate, t_m in zip(params.gamma, marks, strict=True)
    ]
    return np.array(rows).reshape(len(marks), t.size)


def exp_decay_mean(
    t: float,
    params: ExpDecayMean,
    marks: Sequence[float],
) -> float:
    """Evaluate the exponential-decay mean at *t*."""
    profiles = decay_profiles([t], params, marks)[:, 0]
    return float(params.c + np.dot(params.a, profiles))
