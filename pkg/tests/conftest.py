"""Shared independent oracles: straight-line numpy re-implementations used
to cross-check the tape-based pipeline. These never touch the Tape."""

import numpy as np
import pytest


def softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ife_oracle(X, weights, r):
    """Masking -> attention -> amplification -> aggregation, straight line."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    total = np.zeros_like(X)
    for j in range(d):
        masked = X.copy()
        masked[:, j] = 0.0
        z = softmax_rows(masked @ weights[j])          # B x C
        total += z @ np.exp(r * weights[j]).T          # B x d
    return softmax_rows(total / d)


def batchnorm_oracle(X, bn, mode):
    if mode == "train":
        mu = X.mean(axis=0, keepdims=True)
        var = X.var(axis=0, keepdims=True)             # biased, 1/B
    else:
        mu, var = bn.running_mean, bn.running_var
    return (X - mu) / np.sqrt(var + bn.epsilon) * bn.gamma + bn.beta


def ifenet_oracle(X, params, mode):
    """Full classifier forward without the tape."""
    xn = batchnorm_oracle(np.asarray(X, dtype=float), params.bn, mode)
    z = xn if params.ife is None else ife_oracle(xn, params.ife.weights,
                                                 params.ife.r) * xn
    hidden = np.maximum(z @ params.fnn.W1 + params.fnn.b1, 0.0)
    return hidden @ params.fnn.W2 + params.fnn.b2


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
