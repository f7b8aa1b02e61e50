"""Stochastic gradient descent with momentum and L2 weight decay"""

from collections.abc import Mapping

import numpy as np

from dacsm.numerics import Tensor


class SGDMomentum:
    """Heavy-ball SGD over a dict of parameter arrays, updated in place"""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ) -> None:
        """Initialize optimizer

        :param dict[str, Tensor] params: arrays to update, keyed by parameter path
        :param float lr: step size
        :param float momentum: velocity decay
        :param float weight_decay: L2 penalty added to every gradient
        """
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, grads: Mapping[str, Tensor]) -> None:
        """Apply one update; parameters without a gradient are left alone"""
        for name, grad in grads.items():
            param = self.params[name]
            if self.weight_decay:
                grad = grad + self.weight_decay * param
            velocity = self.velocity[name]
            velocity *= self.momentum
            velocity += grad
            param -= self.lr * velocity
