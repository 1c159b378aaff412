"""Small numerical helpers: finite-difference Laplacians and power-law fits."""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import FitFailure


def fd_laplacian(f: Callable, X, h: float, richardson: bool = True):
    """Finite-difference Laplacian of ``f`` at points ``X`` (last axis = coords).

    Second-order central differences; with ``richardson`` the steps h and
    h/2 are combined into a fourth-order estimate.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[-1]

    def lap(step):
        f0 = f(X)
        acc = -2.0 * d * f0
        for k in range(d):
            e = np.zeros(d)
            e[k] = step
            acc = acc + f(X + e) + f(X - e)
        return acc / step ** 2

    if not richardson:
        return lap(h)
    return (4.0 * lap(0.5 * h) - lap(h)) / 3.0


def fd_derivative(f: Callable, X, axis: int, h: float = 1e-5):
    X = np.asarray(X, dtype=float)
    e = np.zeros(X.shape[-1])
    e[axis] = h
    return (f(X + e) - f(X - e)) / (2 * h)


class PowerFit(NamedTuple):
    exponent: float
    prefactor: float
    residual: float  # rms of log residuals


def fit_power_law(x, y) -> PowerFit:
    """Least-squares fit of log y = p log x + log C."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise FitFailure("power-law fit needs >= 2 positive samples")
    A = np.vstack([np.log(x), np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    res = np.log(y) - A @ coef
    return PowerFit(float(coef[0]), float(np.exp(coef[1])), float(np.sqrt(np.mean(res ** 2))))


def ball_mask(coords, center, radius):
    c = np.asarray(center, dtype=float)
    return np.sum((coords - c) ** 2, axis=-1) <= radius ** 2 * (1 + 1e-12)
