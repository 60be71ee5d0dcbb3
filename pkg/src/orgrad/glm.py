"""Loss models ``h(theta, y)`` for linear, logistic and Poisson responses.

The tensor gradient of ``h(<X, T>, y)`` is ``dloss(theta, y) * X``, so the
learner only ever needs the scalar derivative and the covariate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LINK_CLAMP = 30.0
LOG_FLOOR = 1e-15
KINDS = ("linear", "logistic", "poisson")


@dataclass(frozen=True)
class LossModel:
    """One of the three GLM losses.

    Parameters
    ----------
    kind : {"linear", "logistic", "poisson"}
    sigma : float
        Standard deviation of the Gaussian noise (linear only).
    sigma_link : float
        Scale of the logistic link ``f(u) = 1 / (1 + exp(-u / sigma_link))``.
    intensity : float
        Poisson intensity ``I >= 1``; responses are ``Pois(I exp(theta))``.
    """

    kind: str = "linear"
    sigma: float = 0.0
    sigma_link: float = 1.0
    intensity: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.sigma_link <= 0:
            raise ValueError("sigma_link must be positive")
        if self.kind == "poisson" and self.intensity < 1:
            raise ValueError("poisson intensity must be >= 1")

    def link(self, theta):
        """Logistic mean ``f(theta)`` with the argument clamped to +-30."""
        u = np.clip(np.asarray(theta, dtype=float) / self.sigma_link, -LINK_CLAMP, LINK_CLAMP)
        return 1.0 / (1.0 + np.exp(-u))

    def mean(self, theta):
        """Expected response ``E[Y | theta]``."""
        if self.kind == "linear":
            return theta
        if self.kind == "logistic":
            return self.link(theta)
        return self.intensity * np.exp(theta)

    def _check_y(self, y):
        if self.kind == "logistic" and not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic responses must be 0 or 1")
        if self.kind == "poisson" and not np.all((y >= 0) & (np.floor(y) == y)):
            raise ValueError("poisson responses must be non-negative integers")

    def loss(self, theta, y):
        y = np.asarray(y, dtype=float)
        self._check_y(y)
        if self.kind == "linear":
            return 0.5 * (theta - y) ** 2
        if self.kind == "logistic":
            f = self.link(theta)
            return -y * np.log(np.maximum(f, LOG_FLOOR)) - (1 - y) * np.log(np.maximum(1 - f, LOG_FLOOR))
        return -y * theta / self.intensity + np.exp(theta)

    def dloss(self, theta, y):
        """Scalar derivative ``h_theta(theta, y)``."""
        y = np.asarray(y, dtype=float)
        self._check_y(y)
        if self.kind == "linear":
            return theta - y
        if self.kind == "logistic":
            return (self.link(theta) - y) / self.sigma_link
        return -y / self.intensity + np.exp(theta)

    def regularity_constants(self, alpha: float):
        """Closed-form ``(gamma_alpha, mu_alpha, L_alpha)``.

        ``L_alpha`` is only meaningful for the logistic link; the other models
        return ``inf`` as a sentinel.
        """
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == "linear":
            return 1.0, 1.0, math.inf
        if self.kind == "logistic":
            s = self.sigma_link
            a = alpha / s
            # e^a / (1 + e^a)^2 written with e^-a to avoid overflow for large a
            gamma = math.exp(-a) / (1.0 + math.exp(-a)) ** 2 / s**2
            return gamma, 1.0 / (4.0 * s**2), 1.0 / s
        return math.exp(-alpha), math.exp(alpha), math.inf

    def sample_response(self, theta, rng: np.random.Generator):
        """Draw ``Y`` given the linear predictor ``theta``."""
        shape = np.shape(theta)
        if self.kind == "linear":
            # the normal is drawn even at sigma = 0 so streams stay aligned across a sigma grid
            out = np.asarray(theta, dtype=float) + self.sigma * rng.standard_normal(shape)
        elif self.kind == "logistic":
            out = (rng.random(shape) < self.link(theta)).astype(float)
        else:
            out = rng.poisson(self.intensity * np.exp(theta)).astype(float)
        return float(out) if out.ndim == 0 else out
