"""Closed-form covariances of a first-order LFM driven by causal forces.

The output of covariate ``j`` is

    mu_j(t) = B/D + sum_m S_m exp(-D t) int_0^t exp(D tau) f_m(tau) dtau

with each force ``f_m`` drawn from the causal kernel anchored at ``t_m``.
Every closed form below is written with ``S = 1`` (the ``*_unit`` functions)
and scaled by the effect sizes afterwards; covariances are linear in each S.

Integration regions are split at ``c = max(t_m, 0)``: before ``c`` the warped
input is clipped to zero and the kernel is constant in that argument, after
``c`` it is an SE kernel in ``tau - s`` with denominator ``ell**2``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import erf, erfcx

from causalgp._errors import ConsistencyError, ParameterDomainError
from causalgp._kernels import clip
from causalgp._validate import (
    require_finite,
    require_positive,
    require_same_length,
)

FloatArray = NDArray[np.float64]

_SQRT_PI = math.sqrt(math.pi)


class ForceConvention(enum.Enum):
    """How the latent force behaves before its mark time.

    ``UNZEROED`` keeps the causal kernel as is, so the force is a constant
    (its value at ``t_m``) before the mark.  ``ZEROED`` sets the force to 0
    before the mark.
    """

    UNZEROED = "unzeroed"
    ZEROED = "zeroed"


@dataclass(frozen=True)
class LfmParams:
    """Dynamics of one covariate: drive ``B``, decay ``D`` and per-treatment forcing.

    ``S``, ``ell`` and ``t_marks`` are indexed by treatment administration.
    """

    B: float
    D: float
    S: tuple[float, ...] = ()
    ell: tuple[float, ...] = ()
    t_marks: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        require_finite(self.B, "B", "LfmParams")
        require_positive(self.D, "D", "LfmParams")
        require_same_length("LfmParams", S=self.S, ell=self.ell, t_marks=self.t_marks)
        for m, (s, ell, t_m) in enumerate(zip(self.S, self.ell, self.t_marks, strict=True)):
            require_finite(s, f"S[{m}]", "LfmParams")
            require_positive(ell, f"ell[{m}]", "LfmParams")
            require_finite(t_m, f"t_marks[{m}]", "LfmParams")

    @property
    def n_treatments(self) -> int:
        return len(self.S)

    def nu(self, m: int) -> float:
        """``ell_m * D / 2``, the dimensionless decay of treatment *m*."""
        return self.ell[m] * self.D / 2


def lfm_mean(t: float, B: float, D: float) -> float:
    """Expected output ``B / D``; the output starts at its steady state."""
    require_finite(t, "t", "lfm_mean")
    require_finite(B, "B", "lfm_mean")
    require_positive(D, "D", "lfm_mean")
    return B / D


def force_covariance(
    t: ArrayLike,
    t2: ArrayLike,
    t_m: float,
    ell_m: float,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> FloatArray:
    """Prior covariance of the latent force under *convention* (vectorised)."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    k = np.exp(-((clip(t - t_m) - clip(t2 - t_m)) ** 2) / ell_m**2)
    if convention is ForceConvention.ZEROED:
        k = np.where((t > t_m) & (t2 > t_m), k, 0.0)
    return k


# ── closed-form building blocks ──────────────────────────────────────────


def erf_span(z0: ArrayLike, z1: ArrayLike, log_scale: ArrayLike) -> FloatArray:
    """Return ``exp(log_scale) * (erf(z1) - erf(z0))`` for ``z0 <= z1``.

    Spans lying on one side of zero are rewritten with ``erfcx`` so the large
    factor ``exp(nu**2)`` hidden in *log_scale* is cancelled inside the
    exponent instead of multiplying an ``erf`` difference that underflows.
    """
    z0, z1, log_scale = np.broadcast_arrays(
        np.asarray(z0, dtype=float),
        np.asarray(z1, dtype=float),
        np.asarray(log_scale, dtype=float),
    )
    out = np.zeros(z0.shape)
    upper = z0 >= 0
    lower = (z1 <= 0) & ~upper
    mixed = ~(upper | lower)
    with np.errstate(over="ignore", invalid="ignore"):
        a, b, s = z0[upper], z1[upper], log_scale[upper]
        out[upper] = np.exp(s - a * a) * erfcx(a) - np.exp(s - b * b) * erfcx(b)
        a, b, s = z0[lower], z1[lower], log_scale[lower]
        out[lower] = np.exp(s - b * b) * erfcx(-b) - np.exp(s - a * a) * erfcx(-a)
        a, b, s = z0[mixed], z1[mixed], log_scale[mixed]
        out[mixed] = np.exp(s) * (erf(b) - erf(a))
    return out


def _pre(t: FloatArray, c: FloatArray, D: ArrayLike) -> FloatArray:
    """``exp(-D t) * int_0^{min(t, c)} exp(D tau) dtau``."""
    D = np.asarray(D, dtype=float)
    m = np.minimum(t, c)
    return np.exp(-D * (t - m)) * -np.expm1(-D * m) / D


def _post(
    t: FloatArray,
    b: FloatArray,
    c: FloatArray,
    ell: ArrayLike,
    D: ArrayLike,
) -> FloatArray:
    """``exp(-D t) * int_c^t exp(D tau) exp(-(tau - b)**2 / ell**2) dtau`` (0 if t <= c)."""
    ell = np.asarray(ell, dtype=float)
    D = np.asarray(D, dtype=float)
    nu = ell * D / 2
    upper = np.maximum(t, c)
    z0 = (c - b) / ell - nu
    z1 = (upper - b) / ell - nu
    # at t <= c the span is empty; evaluate at t = c so exponents stay bounded
    log_scale = D * (b - upper) + nu**2
    value = _SQRT_PI * ell / 2 * erf_span(z0, z1, log_scale)
    return np.where(t > c, value * np.exp(-D * (t - upper)), 0.0)


def _h_term(
    x: FloatArray,
    y: FloatArray,
    ell: ArrayLike,
    dx: ArrayLike,
    dy: ArrayLike,
) -> FloatArray:
    nu = np.asarray(ell) * np.asarray(dx) / 2
    first = erf_span(-y / ell - nu, (x - y) / ell - nu, nu**2 - dx * (x - y))
    second = erf_span(-nu, x / ell - nu, nu**2 - dx * x - dy * y)
    return (first - second) / (np.asarray(dx) + np.asarray(dy))


def _psi(x: FloatArray, y: FloatArray, ell: ArrayLike, da: ArrayLike, db: ArrayLike) -> FloatArray:
    """Output covariance of two first-order systems driven by ``exp(-(u - v)**2 / ell**2)``.

    Both systems start from 0 at time 0; *x* and *y* are elapsed times.
    """
    return _SQRT_PI * np.asarray(ell) / 2 * (_h_term(x, y, ell, da, db) + _h_term(y, x, ell, db, da))


def cross_cov_unit(
    t: ArrayLike,
    t2: ArrayLike,
    t_m: float,
    ell: float,
    D: ArrayLike,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> FloatArray:
    """``Cov(mu(t), f_m(t2))`` with ``S = 1``; *t* is the output time (vectorised)."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    c = np.full(np.broadcast(t, t2).shape, max(t_m, 0.0))
    a = clip(t2 - t_m)
    post = _post(t, t_m + a, c, ell, D)
    if convention is ForceConvention.ZEROED:
        return np.where(t2 > t_m, post, 0.0)
    return np.exp(-((a / ell) ** 2)) * _pre(t, c, D) + post


def output_cov_unit(
    t: ArrayLike,
    t2: ArrayLike,
    t_m: float,
    ell: float,
    D_a: ArrayLike,
    D_b: ArrayLike,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> FloatArray:
    """``Cov(mu_a(t), mu_b(t2))`` through one force with ``S_a = S_b = 1`` (vectorised)."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    c_val = max(t_m, 0.0)
    shape = np.broadcast(t, t2).shape
    c = np.full(shape, c_val)
    both = _psi(
        np.maximum(t - c_val, 0.0),
        np.maximum(t2 - c_val, 0.0),
        ell,
        D_a,
        D_b,
    )
    if convention is ForceConvention.ZEROED:
        return both
    pre_a = _pre(np.broadcast_to(t, shape), c, D_a)
    pre_b = _pre(np.broadcast_to(t2, shape), c, D_b)
    tail_a = _post(np.broadcast_to(t, shape), np.full(shape, t_m), c, ell, D_a)
    tail_b = _post(np.broadcast_to(t2, shape), np.full(shape, t_m), c, ell, D_b)
    return pre_a * pre_b + pre_a * tail_b + tail_a * pre_b + both


# ── scalar operations ────────────────────────────────────────────────────


def require_time(t: float, name: str, owner: str) -> None:
    require_finite(t, name, owner)
    if t < 0:
        msg = f"{owner} is defined from time 0; received {name}={t!r}"
        raise ParameterDomainError(msg)


def check_treatment_index(m: int, params: LfmParams) -> None:
    if not 0 <= m < params.n_treatments:
        msg = f"treatment index {m} out of range for {params.n_treatments} treatments"
        raise ParameterDomainError(msg)


def cross_cov_force_output(
    t: float,
    t2: float,
    m: int,
    params: LfmParams,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> float:
    """``Cov(mu(t), f_m(t2))``: output at *t*, force of treatment *m* at *t2*."""
    require_time(t, "t", "cross_cov_force_output")
    require_finite(t2, "t2", "cross_cov_force_output")
    check_treatment_index(m, params)
    unit = cross_cov_unit(t, t2, params.t_marks[m], params.ell[m], params.D, convention)
    return float(params.S[m] * unit)


def check_shared_forces(
    params_a: LfmParams,
    params_b: LfmParams,
    shared_treatments: Sequence[int],
) -> None:
    """Raise ``ConsistencyError`` unless the shared forces agree in ``ell`` and ``t_m``."""
    for m in shared_treatments:
        if not (0 <= m < params_a.n_treatments and 0 <= m < params_b.n_treatments):
            msg = f"shared treatment {m} is not defined for both covariates"
            raise ConsistencyError(msg)
        if params_a.ell[m] != params_b.ell[m] or params_a.t_marks[m] != params_b.t_marks[m]:
            msg = (
                f"treatment {m} force differs between covariates: "
                f"ell {params_a.ell[m]!r} vs {params_b.ell[m]!r}, "
                f"t_m {params_a.t_marks[m]!r} vs {params_b.t_marks[m]!r}"
            )
            raise ConsistencyError(msg)


def cov_output_output(
    t: float,
    t2: float,
    params_a: LfmParams,
    params_b: LfmParams,
    shared_treatments: Sequence[int],
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> float:
    """``Cov(mu_a(t), mu_b(t2))`` summed over the forces both covariates share."""
    require_time(t, "t", "cov_output_output")
    require_time(t2, "t2", "cov_output_output")
    check_shared_forces(params_a, params_b, shared_treatments)
    total = 0.0
    for m in shared_treatments:
        unit = output_cov_unit(
            t,
            t2,
            params_a.t_marks[m],
            params_a.ell[m],
            params_a.D,
            params_b.D,
            convention,
        )
        total += params_a.S[m] * params_b.S[m] * float(unit)
    return total
