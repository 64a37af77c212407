"""Shared builders for the test suite.

Everything here is deterministic: each helper takes an explicit seed so
individual tests stay independent of collection order.
"""

import numpy as np
import pytest

from mesonet.netmodel import (
    GAUSSIAN,
    BERNOULLI_LOGIT,
    HypothesisSet,
    NetworkStack,
    TwoSampleData,
)


def gaussian_two_sample(n, m, seed, theta1=None, theta2=None, sigma=1.0):
    """Two samples of gaussian-edge networks around the given means."""
    rng = np.random.default_rng(seed)
    if theta1 is None:
        theta1 = np.zeros((n, n))
    if theta2 is None:
        theta2 = theta1
    layers1 = theta1 + sigma * rng.standard_normal((m, n, n))
    layers2 = theta2 + sigma * rng.standard_normal((m, n, n))
    return TwoSampleData(NetworkStack(layers1), NetworkStack(layers2), GAUSSIAN)


def bernoulli_two_sample(n, m, seed, probs1=None, probs2=None):
    rng = np.random.default_rng(seed)
    if probs1 is None:
        probs1 = np.full((n, n), 0.5)
    if probs2 is None:
        probs2 = probs1
    layers1 = (rng.random((m, n, n)) < probs1).astype(float)
    layers2 = (rng.random((m, n, n)) < probs2).astype(float)
    return TwoSampleData(
        NetworkStack(layers1), NetworkStack(layers2), BERNOULLI_LOGIT
    )


def small_rectangle(n=8, r=3, c=4):
    """Rectangle in the top-right corner of an n-node network."""
    return HypothesisSet.rectangle(range(r), range(n - c, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
