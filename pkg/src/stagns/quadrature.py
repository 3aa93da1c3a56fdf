"""Quadrature rules on reference simplices.

Rules are returned in barycentric form: ``bary`` has shape (n, k+1) and the
weights sum to one, so that the integral over a physical simplex S is
``|S| * sum(w * f(bary @ vertices))``.
"""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def simplex_rule(k: int, degree: int):
    """Collapsed Gauss-Legendre rule on the k-simplex, exact to ``degree``.

    The unit k-simplex is mapped from the unit cube with the conical
    product (Duffy) transform; the Jacobian factor (1-t_1)^(k-1) ... raises
    the polynomial degree in each direction by at most k-1, which the number
    of points per direction accounts for.
    """
    if k == 0:
        return np.ones((1, 1)), np.ones(1)
    n = (degree + k) // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    grids = np.meshgrid(*([t] * k), indexing="ij")
    wgrids = np.meshgrid(*([wt] * k), indexing="ij")
    tt = [g.ravel() for g in grids]
    ww = np.prod([g.ravel() for g in wgrids], axis=0)

    coords = np.zeros((tt[0].size, k))
    remaining = np.ones(tt[0].size)
    jac = np.ones(tt[0].size)
    for i in range(k):
        coords[:, i] = tt[i] * remaining
        if i < k - 1:
            jac *= (1.0 - tt[i]) ** (k - 1 - i)
        remaining = remaining * (1.0 - tt[i])
    weights = ww * jac
    weights = weights / weights.sum()
    bary = np.column_stack([1.0 - coords.sum(axis=1), coords])
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights
