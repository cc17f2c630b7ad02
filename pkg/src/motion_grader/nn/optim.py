"""Stochastic gradient descent with Nesterov momentum."""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


def sgd_nesterov_step(params, grads_at_lookahead, velocity, lr, momentum):
    """In-place update of every ``params[i]`` and ``velocity[i]``:

        v <- momentum * v - lr * grad(w + momentum * v)
        w <- w + v

    ``grads_at_lookahead`` must already be evaluated at ``w + momentum * v``.
    """
    for w, g, v in zip(params, grads_at_lookahead, velocity):
        v *= momentum
        v -= lr * g
        w += v


class NesterovSGD:
    """Holds velocity slots for a fixed list of parameter arrays.

    Gradients are taken at the lookahead point::

        with opt.lookahead():
            grads = compute_gradients()
        opt.step(grads)
    """

    def __init__(self, params, lr=0.01, momentum=0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in self.params]

    @contextmanager
    def lookahead(self):
        saved = [p.copy() for p in self.params]
        for p, v in zip(self.params, self.velocity):
            p += self.momentum * v
        try:
            yield
        finally:
            for p, s in zip(self.params, saved):
                p[...] = s

    def step(self, grads):
        sgd_nesterov_step(self.params, grads, self.velocity, self.lr, self.momentum)
