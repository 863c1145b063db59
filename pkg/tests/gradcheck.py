"""Shared gradient-checking helper for the test suite.

check_grads builds a scalar loss twice: once under a tape for analytic
gradients, and many times without one inside the central-difference oracle.
The Tensor objects wrap the given arrays without copying, so in-place
perturbation by the oracle is visible to the forward closure.
"""
from __future__ import annotations

import numpy as np

from cslab.numerics import GradientTape, Tensor, numeric_gradient, relative_error


def check_grads(build, arrays, h=1e-5):
    """Max relative error between tape and finite-difference gradients.

    build(tensors) -> scalar-loss Tensor, where tensors share storage with
    `arrays` (all float64, perturbed in place by the oracle).
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a) for a in arrays]
    for t, a in zip(tensors, arrays):
        assert t.data is a, "Tensor must alias the array for in-place FD"

    with GradientTape() as tape:
        loss = build(tensors)
    tape.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    numeric = numeric_gradient(lambda: float(build(tensors).data), arrays, h=h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
