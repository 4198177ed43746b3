"""P1 finite-element assembly on a :class:`~ddsolve.mesh.DofSet`.

All kernels are vectorised over triangles.  Nonlinear coefficients are
evaluated pointwise at quadrature points from the interpolated field and its
elementwise constant gradient.  Scatter uses ``np.bincount`` / COO summation
in triangle order, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DofSet


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (Q, 3) barycentric coordinates
    weights: np.ndarray  # (Q,) summing to 1; multiplied by the triangle area at use
    degree: int


def _rule(points, weights, degree):
    return QuadratureRule(np.array(points, dtype=float), np.array(weights, dtype=float), degree)


_a, _b = 0.445948490915965, 0.091576213509771
_wa, _wb = 0.223381589678011, 0.109951743655322

QUADRATURE = {
    1: _rule([[1 / 3, 1 / 3, 1 / 3]], [1.0], 1),
    2: _rule([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]], [1 / 3, 1 / 3, 1 / 3], 2),
    # Dunavant 6-point rule
    4: _rule([[1 - 2 * _a, _a, _a], [_a, 1 - 2 * _a, _a], [_a, _a, 1 - 2 * _a],
              [1 - 2 * _b, _b, _b], [_b, 1 - 2 * _b, _b], [_b, _b, 1 - 2 * _b]],
             [_wa, _wa, _wa, _wb, _wb, _wb], 4),
}
DEFAULT_QUADRATURE = QUADRATURE[2]


def zero_source(x: np.ndarray) -> np.ndarray:
    return np.zeros(x.shape[:-1])


def local_p1_basis(tri_vertices) -> tuple[np.ndarray, float]:
    """Gradients of the three hat functions and the area of one triangle."""
    p = np.asarray(tri_vertices, dtype=float)
    grads, area = _p1_gradients(p[None])
    if not area[0] > 0:
        raise ValueError("degenerate triangle (zero area)")
    return grads[0], float(area[0])


def _p1_gradients(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # p: (T, 3, 2); returns (T, 3, 2) gradients and (T,) areas.
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    area = 0.5 * np.abs(det)
    grads = np.zeros_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            j, l = (k + 1) % 3, (k + 2) % 3
            grads[:, k, 0] = (y[:, j] - y[:, l]) / det
            grads[:, k, 1] = (x[:, l] - x[:, j]) / det
    return grads, area


@dataclass(frozen=True)
class _Geometry:
    grads: np.ndarray  # (T, 3, 2)
    area: np.ndarray   # (T,)
    xq: np.ndarray     # (T, Q, 2) physical quadrature points
    wq: np.ndarray     # (T, Q) area-scaled weights
    phi: np.ndarray    # (Q, 3) basis values at quadrature points


def _geometry(dofs: DofSet, quad: QuadratureRule) -> _Geometry:
    key = ("geometry", quad.degree)
    geo = dofs.cache.get(key)
    if geo is None:
        p = dofs.mesh.nodes[dofs.triangles]
        grads, area = _p1_gradients(p)
        if np.any(area <= 0):
            raise ValueError("mesh contains degenerate triangles")
        xq = np.einsum("qk,tkd->tqd", quad.points, p)
        wq = area[:, None] * quad.weights[None, :]
        geo = _Geometry(grads, area, xq, wq, quad.points)
        dofs.cache[key] = geo
    return geo


def _check_field(dofs: DofSet, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (len(dofs),):
        raise ValueError(f"field must have length {len(dofs)}, got shape {u.shape}")
    return u


def _element_values(dofs: DofSet, u: np.ndarray) -> np.ndarray:
    # pinned vertices index the appended zero
    return np.append(u, 0.0)[dofs.triangle_dofs]


def _scatter_vector(dofs: DofSet, local: np.ndarray) -> np.ndarray:
    idx = dofs.triangle_dofs.ravel()
    keep = idx >= 0
    return np.bincount(idx[keep], weights=local.ravel()[keep], minlength=len(dofs))


def _scatter_matrix(dofs: DofSet, local: np.ndarray) -> sp.csr_matrix:
    td = dofs.triangle_dofs
    rows = np.broadcast_to(td[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(td[:, None, :], local.shape).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = len(dofs)
    return sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()


def assemble_residual(problem, dofs: DofSet, u, f=None,
                      quad: QuadratureRule = DEFAULT_QUADRATURE) -> np.ndarray:
    """Return ``r_j = <A u - f, phi_j>`` for every dof ``j`` in the set.

    ``f`` defaults to ``problem.source``; pass :func:`zero_source` for the
    homogeneous operator.
    """
    u = _check_field(dofs, u)
    f = problem.source if f is None else f
    geo = _geometry(dofs, quad)
    ue = _element_values(dofs, u)
    grad = np.einsum("tk,tkd->td", ue, geo.grads)
    uq = ue @ geo.phi.T
    zq = np.broadcast_to(grad[:, None, :], geo.xq.shape)

    a = problem.alpha(geo.xq, uq, zq)
    b = problem.beta(geo.xq, uq, zq) - f(geo.xq)
    local = np.einsum("tq,tqd,tkd->tk", geo.wq, a, geo.grads)
    local += np.einsum("tq,tq,qk->tk", geo.wq, b, geo.phi)
    return _scatter_vector(dofs, local)


def assemble_jacobian(problem, dofs: DofSet, u,
                      quad: QuadratureRule = DEFAULT_QUADRATURE) -> sp.csr_matrix:
    """Derivative of :func:`assemble_residual` with respect to the dof values."""
    u = _check_field(dofs, u)
    geo = _geometry(dofs, quad)
    ue = _element_values(dofs, u)
    grad = np.einsum("tk,tkd->td", ue, geo.grads)
    uq = ue @ geo.phi.T
    zq = np.broadcast_to(grad[:, None, :], geo.xq.shape)

    ja = problem.j_alpha(geo.xq, zq)
    jb = problem.j_beta(geo.xq, uq)
    local = np.einsum("tq,tqab,tkb,tja->tjk", geo.wq, ja, geo.grads, geo.grads)
    local += np.einsum("tq,tq,qj,qk->tjk", geo.wq, jb, geo.phi, geo.phi)
    return _scatter_matrix(dofs, local)


def assemble_laplace_stiffness(dofs: DofSet) -> sp.csr_matrix:
    """Stiffness matrix of ``(grad u, grad v)`` on the dof set (cached)."""
    K = dofs.cache.get("stiffness")
    if K is None:
        geo = _geometry(dofs, DEFAULT_QUADRATURE)
        local = geo.area[:, None, None] * np.einsum("tjd,tkd->tjk", geo.grads, geo.grads)
        K = dofs.cache["stiffness"] = _scatter_matrix(dofs, local)
    return K


def assemble_mass(dofs: DofSet) -> sp.csr_matrix:
    """Consistent P1 mass matrix on the dof set (cached)."""
    M = dofs.cache.get("mass")
    if M is None:
        geo = _geometry(dofs, DEFAULT_QUADRATURE)
        local = np.einsum("tq,qj,qk->tjk", geo.wq, geo.phi, geo.phi)
        M = dofs.cache["mass"] = _scatter_matrix(dofs, local)
    return M


def assemble_load(dofs: DofSet, f, quad: QuadratureRule = DEFAULT_QUADRATURE) -> np.ndarray:
    geo = _geometry(dofs, quad)
    local = np.einsum("tq,tq,qk->tk", geo.wq, f(geo.xq), geo.phi)
    return _scatter_vector(dofs, local)


def l2_norm(dofs: DofSet, u) -> float:
    u = _check_field(dofs, u)
    return float(np.sqrt(max(u @ (assemble_mass(dofs) @ u), 0.0)))


def h1_seminorm(dofs: DofSet, u) -> float:
    u = _check_field(dofs, u)
    return float(np.sqrt(max(u @ (assemble_laplace_stiffness(dofs) @ u), 0.0)))


def h1_norm(dofs: DofSet, u) -> float:
    """``||u||_L2 + ||grad u||_L2`` (a sum, not a root of squares)."""
    return l2_norm(dofs, u) + h1_seminorm(dofs, u)
