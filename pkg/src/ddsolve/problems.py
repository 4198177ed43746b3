"""Coefficient functions for ``-div alpha(x, u, grad u) + beta(x, u, grad u) = f``.

Every map is vectorised: ``x`` has shape ``(..., 2)``, ``y`` shape ``(...)``
and ``z`` shape ``(..., 2)``.  ``j_alpha`` returns ``(..., 2, 2)`` with
``j_alpha[..., a, b] = d alpha_a / d z_b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class ProblemDef:
    name: str
    alpha: Callable[[Array, Array, Array], Array]
    beta: Callable[[Array, Array, Array], Array]
    j_alpha: Callable[[Array, Array], Array]
    j_beta: Callable[[Array, Array], Array]
    source: Callable[[Array], Array]
    semilinear: bool


def bubble_source(x: Array) -> Array:
    """``f(x, y) = x y (3 - x)(2 - y)``, vanishing on the boundary of ``[0,3] x [0,2]``."""
    x = np.asarray(x, dtype=float)
    px, py = x[..., 0], x[..., 1]
    return px * py * (3.0 - px) * (2.0 - py)


def _identity(z: Array) -> Array:
    return np.broadcast_to(np.eye(2), z.shape[:-1] + (2, 2)).copy()


def _zeros_like_y(x: Array, y: Array, z: Array | None = None) -> Array:
    return np.zeros(np.shape(y))


def laplace(source=bubble_source) -> ProblemDef:
    """The linear model problem ``-Laplace u = f``."""
    return ProblemDef(
        name="laplace",
        alpha=lambda x, y, z: np.array(z, dtype=float, copy=True),
        beta=_zeros_like_y,
        j_alpha=lambda x, z: _identity(z),
        j_beta=_zeros_like_y,
        source=source,
        semilinear=True,
    )


def semilinear_reaction(source=bubble_source) -> ProblemDef:
    """``-Laplace u + |u| u = f``."""
    return ProblemDef(
        name="semilinear",
        alpha=lambda x, y, z: np.array(z, dtype=float, copy=True),
        beta=lambda x, y, z: np.abs(y) * y,
        j_alpha=lambda x, z: _identity(z),
        j_beta=lambda x, y: 2.0 * np.abs(y),
        source=source,
        semilinear=True,
    )


def quasilinear_sin(gamma: float = 0.1, source=bubble_source) -> ProblemDef:
    """``alpha(z) = z + gamma sin(|z|) (1, 1)``, ``beta = 0``, constant ``gamma``."""
    gamma = float(gamma)
    ones = np.ones(2)

    def alpha(x, y, z):
        z = np.asarray(z, dtype=float)
        s = gamma * np.sin(np.linalg.norm(z, axis=-1))
        return z + s[..., None] * ones

    def j_alpha(x, z):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        # d|z|/dz = z/|z|; the sin term has zero derivative at z = 0
        coef = np.where(r > 0, gamma * np.cos(r) / safe, 0.0)
        J = _identity(z)
        J += coef[..., None, None] * ones[:, None] * z[..., None, :]
        return J

    return ProblemDef(
        name="quasilinear-sin",
        alpha=alpha,
        beta=_zeros_like_y,
        j_alpha=j_alpha,
        j_beta=_zeros_like_y,
        source=source,
        semilinear=gamma == 0.0,
    )


def p_laplace(p: float = 3.0, eps: float = 1e-8, source=bubble_source) -> ProblemDef:
    """``-div(|grad u|^(p-2) grad u) + u = f``.

    Only the Jacobian is regularised (``|z| -> sqrt(|z|^2 + eps^2)``) so that
    Newton steps are defined at ``grad u = 0``; the residual is exact.
    """
    p = float(p)
    if p < 2:
        raise ValueError(f"p-Laplace requires p >= 2, got {p}")

    def alpha(x, y, z):
        z = np.asarray(z, dtype=float)
        if p == 2.0:
            return z.copy()
        r = np.linalg.norm(z, axis=-1)
        return (r ** (p - 2))[..., None] * z

    def j_alpha(x, z):
        z = np.asarray(z, dtype=float)
        if p == 2.0:
            return _identity(z)
        r = np.sqrt(np.sum(z * z, axis=-1) + eps * eps)
        J = (r ** (p - 2))[..., None, None] * _identity(z)
        J += ((p - 2) * r ** (p - 4))[..., None, None] * z[..., :, None] * z[..., None, :]
        return J

    return ProblemDef(
        name="p-laplace",
        alpha=alpha,
        beta=lambda x, y, z: np.array(y, dtype=float, copy=True),
        j_alpha=j_alpha,
        j_beta=lambda x, y: np.ones(np.shape(y)),
        source=source,
        semilinear=p == 2.0,
    )


PROBLEM_NAMES = ("semilinear", "quasilinear-sin", "p-laplace", "laplace")


def get_problem(name: str, gamma: float = 0.1, p: float = 3.0) -> ProblemDef:
    if name == "semilinear":
        return semilinear_reaction()
    if name == "quasilinear-sin":
        return quasilinear_sin(gamma)
    if name == "p-laplace":
        return p_laplace(p)
    if name == "laplace":
        return laplace()
    raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
