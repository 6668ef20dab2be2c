import math

import numpy as np
import pytest

from causalgp import ExpDecayMean, ParameterDomainError, exp_decay_mean
from causalgp._means import decay_profiles


def test_constant_before_first_mark():
    params = ExpDecayMean(c=1.5, a=(2.0,), gamma=(0.5,))
    assert exp_decay_mean(0.9, params, [1.0]) == 1.5
    # the indicator is strict, so the mark itself is still baseline
    assert exp_decay_mean(1.0, params, [1.0]) == 1.5


def test_just_after_mark():
    params = ExpDecayMean(c=1.5, a=(2.0,), gamma=(0.5,))
    assert exp_decay_mean(1.0 + 1e-12, params, [1.0]) == pytest.approx(3.5)


def test_decay_value():
    params = ExpDecayMean(c=0.0, a=(2.0,), gamma=(1.0,))
    assert exp_decay_mean(2.0, params, [1.0]) == pytest.approx(2 * math.exp(-1), abs=1e-6)
    assert exp_decay_mean(2.0, params, [1.0]) == pytest.approx(0.735759, abs=1e-6)


def test_administrations_add():
    params = ExpDecayMean(c=0.5, a=(1.0, -2.0), gamma=(1.0, 0.5))
    expected = 0.5 + math.exp(-3.0) - 2.0 * math.exp(-0.5 * 1.0)
    assert exp_decay_mean(4.0, params, [1.0, 3.0]) == pytest.approx(expected, rel=1e-12)


def test_profiles_shape():
    params = ExpDecayMean(c=0.0, a=(1.0, 1.0), gamma=(1.0, 2.0))
    profiles = decay_profiles(np.linspace(0, 5, 11), params, [1.0, 2.0])
    assert profiles.shape == (2, 11)
    assert np.all(profiles >= 0)
    assert np.all(profiles <= 1)


@pytest.mark.parametrize("rate", [0.0, -1.0])
def test_nonpositive_rate(rate):
    with pytest.raises(ParameterDomainError, match="gamma"):
        ExpDecayMean(c=0.0, a=(1.0,), gamma=(rate,))


def test_dict_roundtrip():
    params = ExpDecayMean(c=0.1, a=(1.0, 2.0), gamma=(0.3, 0.4))
    assert ExpDecayMean.from_dict(params.to_dict()) == params
