"""Numerical quadrature oracles for the LFM covariances.

These integrate the defining convolution integrals directly, splitting every
axis at the mark time where the causal warp has a kink, and are used to
validate the closed forms in ``_lfm``.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Callable, Sequence

from scipy.integrate import IntegrationWarning, dblquad, quad

from causalgp._errors import NumericalError
from causalgp._lfm import (
    ForceConvention,
    LfmParams,
    check_shared_forces,
    check_treatment_index,
    require_time,
)
from causalgp._validate import require_finite, require_positive

LOGGER = logging.getLogger(__name__)

_LIMIT = 200


def _force_kernel(
    t_m: float,
    ell: float,
    convention: ForceConvention,
) -> Callable[[float, float], float]:
    zeroed = convention is ForceConvention.ZEROED

    def k(tau: float, s: float) -> float:
        if zeroed and not (tau > t_m and s > t_m):
            return 0.0
        diff = max(tau - t_m, 0.0) - max(s - t_m, 0.0)
        return math.exp(-(diff * diff) / (ell * ell))

    return k


def _pieces(upper: float, t_m: float) -> list[tuple[float, float]]:
    """Split ``[0, upper]`` at ``t_m`` into non-empty pieces."""
    if 0 < t_m < upper:
        return [(0.0, t_m), (t_m, upper)]
    return [(0.0, upper)] if upper > 0 else []


def _checked(
    integrate: Callable[[], tuple[float, float]],
    tol: float,
    what: str,
    diagnostics: dict[str, object],
) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, abserr = integrate()
        except IntegrationWarning as err:
            msg = f"{what} did not converge: {err}"
            raise NumericalError(msg, diagnostics=diagnostics) from err
    if abserr > tol:
        msg = f"{what} error estimate {abserr:.3g} exceeds tolerance {tol:.3g}"
        raise NumericalError(msg, diagnostics={**diagnostics, "abserr": abserr})
    return float(value)


def quadrature_cross_cov(
    t: float,
    t2: float,
    m: int,
    params: LfmParams,
    tol: float = 1e-9,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> float:
    """Integrate ``S_m exp(-D t) int_0^t exp(D tau) k(tau, t2) dtau`` numerically."""
    require_positive(tol, "tol", "quadrature_cross_cov")
    require_time(t, "t", "quadrature_cross_cov")
    require_finite(t2, "t2", "quadrature_cross_cov")
    check_treatment_index(m, params)
    s_m, ell, t_m, decay = params.S[m], params.ell[m], params.t_marks[m], params.D
    if t <= 0:
        return 0.0
    k = _force_kernel(t_m, ell, convention)
    pieces = _pieces(t, t_m)
    diagnostics = {"t": t, "t2": t2, "t_m": t_m, "D": decay, "ell": ell}

    def integrand(tau: float) -> float:
        return math.exp(-decay * (t - tau)) * k(tau, t2)

    total = 0.0
    for lo, hi in pieces:
        total += _checked(
            lambda lo=lo, hi=hi: quad(
                integrand, lo, hi, epsabs=tol / len(pieces), epsrel=0.0, limit=_LIMIT
            ),
            tol / len(pieces),
            "cross-covariance quadrature",
            diagnostics,
        )
    LOGGER.debug("cross-covariance quadrature over %d piece(s)", len(pieces))
    return s_m * total


def quadrature_cov_output(
    t: float,
    t2: float,
    params_a: LfmParams,
    params_b: LfmParams,
    shared_treatments: Sequence[int],
    tol: float = 1e-8,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> float:
    """2-D analogue of :func:`quadrature_cross_cov` for the output covariance."""
    require_positive(tol, "tol", "quadrature_cov_output")
    require_time(t, "t", "quadrature_cov_output")
    require_time(t2, "t2", "quadrature_cov_output")
    check_shared_forces(params_a, params_b, shared_treatments)
    if t <= 0 or t2 <= 0 or not shared_treatments:
        return 0.0
    da, db = params_a.D, params_b.D
    total = 0.0
    for m in shared_treatments:
        t_m, ell = params_a.t_marks[m], params_a.ell[m]
        k = _force_kernel(t_m, ell, convention)
        rects = [(a, b) for a in _pieces(t, t_m) for b in _pieces(t2, t_m)]
        piece_tol = tol / (len(rects) * len(shared_treatments))
        diagnostics = {"t": t, "t2": t2, "t_m": t_m, "D_a": da, "D_b": db, "ell": ell}

        def integrand(s: float, tau: float, k: Callable[[float, float], float] = k) -> float:
            return math.exp(-da * (t - tau) - db * (t2 - s)) * k(tau, s)

        unit = 0.0
        for (lo_a, hi_a), (lo_b, hi_b) in rects:
            unit += _checked(
                lambda lo_a=lo_a, hi_a=hi_a, lo_b=lo_b, hi_b=hi_b, f=integrand: dblquad(
                    f, lo_a, hi_a, lo_b, hi_b, epsabs=piece_tol, epsrel=0.0
                ),
                piece_tol,
                "output-covariance quadrature",
                diagnostics,
            )
        total += params_a.S[m] * params_b.S[m] * unit
    return total
