import numpy as np
import pytest

from prunescope import nn, synth


@pytest.fixture
def blobs():
    return synth.two_blobs(60, seed=3)


@pytest.fixture
def small_net():
    return nn.init_network(nn.NetworkSpec(layer_sizes=(2, 8, 2), seed=11))


@pytest.fixture
def identity_classifier():
    """Single-layer 2-class net whose classifier is the 2x2 identity."""
    spec = nn.NetworkSpec(layer_sizes=(2, 2), seed=0, hidden_bias=False)
    layer = nn.Layer(weights=np.eye(2, dtype=np.float32), bias=None, mask=np.ones((2, 2), dtype=np.float32))
    return nn.Network(spec=spec, layers=(layer,))
