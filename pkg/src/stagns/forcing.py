"""Analytic velocity fields and manufactured forcings.

The stream-function presets use psi(x) = A * prod_k g(x_k) with a profile g
vanishing to second order at 0 and 1.  The velocity (d_y psi, -d_x psi[, 0])
is divergence free and vanishes on the boundary of the unit square (cube),
so (rho*, u) solves the continuous steady problem with forcing
f = rho* (u . grad) u - mu Laplacian(u).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import SchemeParams


def _bubble_profile(t):
    return (t * t * (1 - t) ** 2,
            2 * t * (1 - t) * (1 - 2 * t),
            2 * (1 - 6 * t + 6 * t * t),
            12 * (2 * t - 1))


def _trig_profile(t):
    s = np.sin(np.pi * t)
    return (s * s,
            np.pi * np.sin(2 * np.pi * t),
            2 * np.pi ** 2 * np.cos(2 * np.pi * t),
            -4 * np.pi ** 3 * np.sin(2 * np.pi * t))


@dataclass(frozen=True)
class StreamFunctionField:
    """Solenoidal velocity u = curl(psi) built from a separable stream function."""

    name: str
    profile: Callable
    amplitude: float
    degree: int                     # quadrature degree used for diamond averages
    profile_degree: int | None      # polynomial degree of the profile, None if transcendental
    fortin_tol: float

    def fortin_degree(self, dim: int) -> int:
        """Quadrature degree integrating the velocity exactly (21 for transcendental profiles)."""
        if self.profile_degree is None:
            return 21
        return self.profile_degree * dim - 1

    def _derivs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X.shape[1], [self.profile(X[:, k]) for k in range(X.shape[1])]

    def _psi(self, g, alpha: Sequence[int]):
        out = self.amplitude * np.ones_like(g[0][0])
        for k, a in enumerate(alpha):
            out = out * g[k][a]
        return out

    @staticmethod
    def _add(alpha, *extra):
        alpha = list(alpha)
        for k in extra:
            alpha[k] += 1
        return alpha

    def velocity(self, X):
        d, g = self._derivs(X)
        ey, ex = self._add([0] * d, 1), self._add([0] * d, 0)
        u = np.zeros((len(g[0][0]), d))
        u[:, 0] = self._psi(g, ey)
        u[:, 1] = -self._psi(g, ex)
        return u

    def velocity_gradient(self, X):
        d, g = self._derivs(X)
        ey, ex = self._add([0] * d, 1), self._add([0] * d, 0)
        G = np.zeros((len(g[0][0]), d, d))
        for j in range(d):
            G[:, 0, j] = self._psi(g, self._add(ey, j))
            G[:, 1, j] = -self._psi(g, self._add(ex, j))
        return G

    def velocity_laplacian(self, X):
        d, g = self._derivs(X)
        ey, ex = self._add([0] * d, 1), self._add([0] * d, 0)
        lap = np.zeros((len(g[0][0]), d))
        for j in range(d):
            lap[:, 0] += self._psi(g, self._add(ey, j, j))
            lap[:, 1] -= self._psi(g, self._add(ex, j, j))
        return lap

    def divergence(self, X):
        return np.zeros(np.atleast_2d(X).shape[0])

    def forcing(self, X, params: SchemeParams):
        u = self.velocity(X)
        G = self.velocity_gradient(X)
        conv = np.einsum("nij,nj->ni", G, u)
        return params.rho_star * conv - params.mu * self.velocity_laplacian(X)


@dataclass(frozen=True)
class GradientBubbleField:
    """u = grad(x^2 (1-x)^2 y^2 (1-y)^2 ...), vanishing on the boundary, not solenoidal."""

    name: str = "gradient_bubble"
    degree: int = 5
    fortin_tol: float = 1e-10

    def fortin_degree(self, dim: int) -> int:
        return 4 * dim - 1

    def velocity(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        g = [_bubble_profile(X[:, k]) for k in range(X.shape[1])]
        u = np.ones_like(X)
        for j in range(X.shape[1]):
            for k in range(X.shape[1]):
                u[:, j] *= g[k][1 if k == j else 0]
        return u

    def divergence(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        g = [_bubble_profile(X[:, k]) for k in range(X.shape[1])]
        out = np.zeros(len(X))
        for j in range(X.shape[1]):
            term = np.ones(len(X))
            for k in range(X.shape[1]):
                term *= g[k][2 if k == j else 0]
            out += term
        return out


STREAM_BUBBLE = StreamFunctionField("stream_bubble", _bubble_profile, 100.0,
                                    degree=5, profile_degree=4, fortin_tol=1e-10)
STREAM_TRIG = StreamFunctionField("stream_trig", _trig_profile, 1.0,
                                  degree=5, profile_degree=None, fortin_tol=1e-8)
GRADIENT_BUBBLE = GradientBubbleField()

PRESETS = {"stream_bubble": STREAM_BUBBLE, "stream_trig": STREAM_TRIG}


def zero_forcing(X, params=None):
    return np.zeros_like(np.atleast_2d(np.asarray(X, dtype=float)))
