"""Tests for the base covariance functions and Gram assembly."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from causalgp import (
    InputError,
    KernelKind,
    KernelSpec,
    ParameterDomainError,
    causal_force_kernel,
    ou_kernel,
    periodic_kernel,
    se_kernel,
)
from causalgp._kernels import clip, gram, kernel_derivatives

# ── pointwise kernels ────────────────────────────────────────────────────


@pytest.mark.parametrize(
    ("args", "expected"),
    [
        ((0, 0, 1, 1), 1.0),
        ((1, 0, 1, 1), math.exp(-0.5)),
        ((0, 0, 2, 0.5), 4.0),
    ],
)
def test_se_kernel(args, expected):
    assert se_kernel(*args) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(
    ("args", "expected"),
    [
        ((0, 0, 1, 1, 24), 1.0),
        ((24, 0, 1, 1, 24), 1.0),
        ((12, 0, 1, 1, 24), math.exp(-0.5)),
    ],
)
def test_periodic_kernel(args, expected):
    assert periodic_kernel(*args) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(
    ("args", "expected"),
    [
        ((0, 0, 1, 1), 1.0),
        ((1, 0, 1, 1), math.exp(-1)),
        ((2, 0, 3, 2), 9 * math.exp(-1)),
    ],
)
def test_ou_kernel(args, expected):
    assert ou_kernel(*args) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("t_m", [-3.0, 0.0, 5.5])
def test_causal_force_kernel_examples(t_m):
    assert causal_force_kernel(t_m - 1, t_m - 2, t_m, 1) == 1.0
    assert causal_force_kernel(t_m + 2, t_m + 2, t_m, 0.5) == 1.0
    # warped difference 1 over ell**2 (no factor 2)
    assert causal_force_kernel(t_m - 1, t_m + 1, t_m, 1) == pytest.approx(math.exp(-1))


def test_clip_is_zero_at_origin():
    assert_allclose(clip([-1.0, 0.0, 2.5]), [0.0, 0.0, 2.5])


@pytest.mark.parametrize(
    "call",
    [
        lambda: se_kernel(0, 0, 0, 1),
        lambda: se_kernel(0, 0, 1, -1),
        lambda: periodic_kernel(0, 0, 1, 1, 0),
        lambda: ou_kernel(0, 0, 1, 0),
        lambda: causal_force_kernel(0, 0, 0, 0),
    ],
)
def test_nonpositive_hyperparameters(call):
    with pytest.raises(ParameterDomainError, match="> 0"):
        call()


# ── properties ───────────────────────────────────────────────────────────


def _specs(rng):
    return [
        KernelSpec(KernelKind.SE, rng.uniform(0.1, 3), rng.uniform(0.1, 5)),
        KernelSpec(KernelKind.OU, rng.uniform(0.1, 3), rng.uniform(0.1, 5)),
        KernelSpec(KernelKind.PERIODIC, rng.uniform(0.1, 3), rng.uniform(0.1, 5), period=rng.uniform(1, 30)),
        KernelSpec(KernelKind.CAUSAL_FORCE, 1.0, rng.uniform(0.1, 5), mark_time=rng.uniform(-5, 5)),
    ]


def test_symmetry_and_bounds():
    rng = np.random.default_rng(1)
    for _ in range(20):
        t = rng.uniform(-10, 10, 15)
        for spec in _specs(rng):
            k = gram(spec, t, t)
            assert_allclose(k, k.T, rtol=0, atol=1e-15)
            diag = np.diag(k)
            assert np.all(k >= 0)
            assert np.all(k <= diag[:, None] * (1 + 1e-12))


def test_causal_flatness_before_mark():
    rng = np.random.default_rng(2)
    t = rng.uniform(-10, 0, 10)
    spec = KernelSpec(KernelKind.CAUSAL_FORCE, length_scale=0.3, mark_time=0.0)
    assert np.all(gram(spec, t, t) == 1.0)


def test_gram_psd():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t = rng.uniform(0, 48, 20)
        for spec in _specs(rng):
            k = gram(spec, t, t)
            assert np.linalg.eigvalsh(k).min() >= -1e-8 * k.diagonal().max()


def test_stationary_kernels_shift_invariant():
    rng = np.random.default_rng(4)
    t, t2 = rng.uniform(0, 10, 8), rng.uniform(0, 10, 8)
    shift = rng.uniform(-100, 100)
    for spec in _specs(rng)[:3]:
        assert_allclose(gram(spec, t, t2), gram(spec, t + shift, t2 + shift), rtol=1e-9, atol=1e-12)


# ── gram ─────────────────────────────────────────────────────────────────


def test_gram_examples():
    spec = KernelSpec(KernelKind.SE, 2.0, 1.0)
    assert_allclose(gram(spec, [0], [0]), [[4.0]])
    unit = KernelSpec(KernelKind.SE, 1.0, 1.0)
    assert_allclose(gram(unit, [0, 1], [0]), [[1.0], [math.exp(-0.5)]])


@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_gram_rejects_non_finite(bad):
    with pytest.raises(InputError, match="finite"):
        gram(KernelSpec(KernelKind.SE), [0.0, bad], [0.0])


# ── KernelSpec ───────────────────────────────────────────────────────────


def test_spec_requires_period_and_mark():
    with pytest.raises(ParameterDomainError, match="period"):
        KernelSpec(KernelKind.PERIODIC)
    with pytest.raises(ParameterDomainError, match="mark_time"):
        KernelSpec(KernelKind.CAUSAL_FORCE)
    with pytest.raises(ParameterDomainError, match="unit output scale"):
        KernelSpec(KernelKind.CAUSAL_FORCE, sigma=2.0, mark_time=0.0)


def test_spec_dict_roundtrip():
    spec = KernelSpec(KernelKind.PERIODIC, 0.7, 1.3, period=24.0)
    assert KernelSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize(
    "spec",
    [
        KernelSpec(KernelKind.SE, 1.3, 2.1),
        KernelSpec(KernelKind.OU, 0.8, 1.7),
        KernelSpec(KernelKind.PERIODIC, 1.1, 0.9, period=5.0),
    ],
)
def test_kernel_derivatives_match_finite_differences(spec):
    t = np.linspace(0, 6, 7)
    derivs = kernel_derivatives(spec, t, t)
    fields = {"sigma": "sigma", "length_scale": "length_scale", "period": "period"}
    h = 1e-6
    for key, deriv in derivs.items():
        value = getattr(spec, fields[key])
        up = KernelSpec(**{**spec.__dict__, fields[key]: value * math.exp(h)})
        down = KernelSpec(**{**spec.__dict__, fields[key]: value * math.exp(-h)})
        numeric = (gram(up, t, t) - gram(down, t, t)) / (2 * h)
        assert_allclose(deriv, numeric, rtol=1e-6, atol=1e-8)
