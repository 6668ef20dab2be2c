"""Base covariance functions: SE, periodic, OU and the causal force kernel.

The causal force kernel warps both inputs through ``h(x) = x * 1(x > 0)``
relative to the mark time, so it is flat (exactly 1) before the mark.  Its
denominator is ``ell**2``, not the ``2 * ell**2`` of the SE kernel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from causalgp._errors import ParameterDomainError
from causalgp._validate import as_finite_times, require_finite, require_positive

FloatArray = NDArray[np.float64]


class KernelKind(enum.Enum):
    SE = "se"
    PERIODIC = "periodic"
    OU = "ou"
    CAUSAL_FORCE = "causal-force"


def clip(x: ArrayLike) -> FloatArray:
    """The causal warp ``h(x) = x * 1(x > 0)``; ``h(0) == 0``."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, 0.0)


def _se(d: FloatArray, sigma: float, ell: float) -> FloatArray:
    return sigma**2 * np.exp(-(d**2) / (2 * ell**2))


def _periodic(d: FloatArray, sigma: float, ell: float, period: float) -> FloatArray:
    s = np.sin(np.pi * np.abs(d) / period)
    return sigma**2 * np.exp(-(s**2) / (2 * ell**2))


def _ou(d: FloatArray, sigma: float, ell: float) -> FloatArray:
    return sigma**2 * np.exp(-np.abs(d) / ell)


def _causal(t: ArrayLike, t2: ArrayLike, t_m: float, ell: float) -> FloatArray:
    diff = clip(np.asarray(t, dtype=float) - t_m) - clip(np.asarray(t2, dtype=float) - t_m)
    return np.exp(-(diff**2) / ell**2)


def se_kernel(t: float, t2: float, sigma: float, ell: float) -> float:
    """``sigma**2 * exp(-(t - t2)**2 / (2 ell**2))``."""
    require_positive(sigma, "sigma", "se_kernel")
    require_positive(ell, "ell", "se_kernel")
    return float(_se(np.asarray(t - t2, dtype=float), sigma, ell))


def periodic_kernel(t: float, t2: float, sigma: float, ell: float, p: float) -> float:
    """``sigma**2 * exp(-sin**2(pi |t - t2| / p) / (2 ell**2))``."""
    require_positive(sigma, "sigma", "periodic_kernel")
    require_positive(ell, "ell", "periodic_kernel")
    require_positive(p, "p", "periodic_kernel")
    return float(_periodic(np.asarray(t - t2, dtype=float), sigma, ell, p))


def ou_kernel(t: float, t2: float, sigma: float, ell: float) -> float:
    """``sigma**2 * exp(-|t - t2| / ell)``."""
    require_positive(sigma, "sigma", "ou_kernel")
    require_positive(ell, "ell", "ou_kernel")
    return float(_ou(np.asarray(t - t2, dtype=float), sigma, ell))


def causal_force_kernel(t: float, t2: float, t_m: float, ell_m: float) -> float:
    """``exp(-[h(t - t_m) - h(t2 - t_m)]**2 / ell_m**2)``."""
    require_positive(ell_m, "ell_m", "causal_force_kernel")
    require_finite(t_m, "t_m", "causal_force_kernel")
    return float(_causal(t, t2, t_m, ell_m))


@dataclass(frozen=True)
class KernelSpec:
    """A base-kernel configuration.

    ``period`` is only used by ``PERIODIC`` and ``mark_time`` only by
    ``CAUSAL_FORCE``, whose output scale is fixed at 1.
    """

    kind: KernelKind
    sigma: float = 1.0
    length_scale: float = 1.0
    period: float | None = None
    mark_time: float | None = None

    def __post_init__(self) -> None:
        owner = f"KernelSpec({self.kind.value})"
        require_positive(self.sigma, "sigma", owner)
        require_positive(self.length_scale, "length_scale", owner)
        if self.kind is KernelKind.PERIODIC:
            if self.period is None:
                msg = f"{owner} requires 'period'"
                raise ParameterDomainError(msg)
            require_positive(self.period, "period", owner)
        if self.kind is KernelKind.CAUSAL_FORCE:
            if self.mark_time is None:
                msg = f"{owner} requires 'mark_time'"
                raise ParameterDomainError(msg)
            require_finite(self.mark_time, "mark_time", owner)
            if self.sigma != 1.0:
                msg = f"{owner} has unit output scale; received sigma={self.sigma!r}"
                raise ParameterDomainError(msg)

    def evaluate(self, t: ArrayLike, t2: ArrayLike) -> FloatArray:
        """Broadcast the kernel over *t* and *t2*."""
        t = np.asarray(t, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        if self.kind is KernelKind.SE:
            return _se(t - t2, self.sigma, self.length_scale)
        if self.kind is KernelKind.PERIODIC:
            return _periodic(t - t2, self.sigma, self.length_scale, self.period)  # type: ignore[arg-type]
        if self.kind is KernelKind.OU:
            return _ou(t - t2, self.sigma, self.length_scale)
        return _causal(t, t2, self.mark_time, self.length_scale)  # type: ignore[arg-type]

    def to_dict(self) -> dict[str, object]:
        data: dict[str, object] = {
            "kind": self.kind.value,
            "sigma": self.sigma,
            "length_scale": self.length_scale,
        }
        if self.period is not None:
            data["period"] = self.period
        if self.mark_time is not None:
            data["mark_time"] = self.mark_time
        return data

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> KernelSpec:
        data = dict(data)
        kind = KernelKind(str(data.pop("kind")))
        return cls(kind=kind, **data)  # type: ignore[arg-type]


def gram(spec: KernelSpec, times_a: ArrayLike, times_b: ArrayLike) -> FloatArray:
    """Return the matrix ``K[i, j] = k(times_a[i], times_b[j])``."""
    ta = as_finite_times(times_a, "times_a")
    tb = as_finite_times(times_b, "times_b")
    return spec.evaluate(ta[:, None], tb[None, :])


def kernel_derivatives(
    spec: KernelSpec,
    times_a: ArrayLike,
    times_b: ArrayLike,
) -> dict[str, FloatArray]:
    """Derivatives of ``gram(spec, ...)`` with respect to the log hyperparameters.

    Keys are ``"sigma"``, ``"length_scale"`` and, for periodic kernels,
    ``"period"``.  The causal force kernel has no trainable scale and is not
    supported.
    """
    if spec.kind is KernelKind.CAUSAL_FORCE:
        msg = "kernel_derivatives does not support the causal force kernel"
        raise ParameterDomainError(msg)
    ta = as_finite_times(times_a, "times_a")
    tb = as_finite_times(times_b, "times_b")
    d = ta[:, None] - tb[None, :]
    k = spec.evaluate(ta[:, None], tb[None, :])
    ell = spec.length_scale
    result = {"sigma": 2.0 * k}
    if spec.kind is KernelKind.SE:
        result["length_scale"] = k * d**2 / ell**2
    elif spec.kind is KernelKind.OU:
        result["length_scale"] = k * np.abs(d) / ell
    else:
        p = spec.period
        assert p is not None
        arg = np.pi * np.abs(d) / p
        s = np.sin(arg)
        result["length_scale"] = k * s**2 / ell**2
        result["period"] = k * s * np.cos(arg) * arg / ell**2
    return result
