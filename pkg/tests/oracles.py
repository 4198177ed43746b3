"""Brute-force reference computations, written independently of ``ddsolve.fem``.

Everything here loops over triangles in plain Python and builds dense
arrays.  Basis gradients come from inverting the 3x3 matrix ``[1 x y]``
rather than from the closed-form edge formula used by the library.
"""

import numpy as np
from scipy.optimize import fsolve


def hat_coefficients(p):
    """Coefficients ``C`` with ``phi_k(x, y) = C[0,k] + C[1,k] x + C[2,k] y``."""
    M = np.column_stack([np.ones(3), p])
    return np.linalg.inv(M), 0.5 * abs(np.linalg.det(M))


def _midpoints(p):
    return [(p[0] + p[1]) / 2, (p[1] + p[2]) / 2, (p[2] + p[0]) / 2]


def _loc(nodes, n_nodes):
    loc = -np.ones(n_nodes, dtype=int)
    loc[np.asarray(nodes)] = np.arange(len(nodes))
    return loc


def dense_stiffness(mesh, tri_ids, nodes):
    loc = _loc(nodes, mesh.n_nodes)
    K = np.zeros((len(nodes), len(nodes)))
    for t in tri_ids:
        tri = mesh.triangles[t]
        C, area = hat_coefficients(mesh.nodes[tri])
        G = C[1:, :].T
        for a in range(3):
            for b in range(3):
                ia, ib = loc[tri[a]], loc[tri[b]]
                if ia >= 0 and ib >= 0:
                    K[ia, ib] += area * G[a] @ G[b]
    return K


def dense_residual(problem, mesh, tri_ids, nodes, u, f):
    """``<A u - f, phi_j>`` by edge-midpoint quadrature, one triangle at a time."""
    loc = _loc(nodes, mesh.n_nodes)
    r = np.zeros(len(nodes))
    for t in tri_ids:
        tri = mesh.triangles[t]
        p = mesh.nodes[tri]
        C, area = hat_coefficients(p)
        G = C[1:, :].T
        vals = np.array([u[loc[v]] if loc[v] >= 0 else 0.0 for v in tri])
        grad = vals @ G
        for m in _midpoints(p):
            phi = C[0] + C[1] * m[0] + C[2] * m[1]
            um = vals @ phi
            a = np.asarray(problem.alpha(m, um, grad), dtype=float)
            b = float(problem.beta(m, um, grad)) - float(f(m))
            for k in range(3):
                if loc[tri[k]] >= 0:
                    r[loc[tri[k]]] += area / 3 * (a @ G[k] + b * phi[k])
    return r


def dense_load(mesh, tri_ids, nodes, f):
    loc = _loc(nodes, mesh.n_nodes)
    b = np.zeros(len(nodes))
    for t in tri_ids:
        tri = mesh.triangles[t]
        p = mesh.nodes[tri]
        C, area = hat_coefficients(p)
        for m in _midpoints(p):
            phi = C[0] + C[1] * m[0] + C[2] * m[1]
            for k in range(3):
                if loc[tri[k]] >= 0:
                    b[loc[tri[k]]] += area / 3 * float(f(m)) * phi[k]
    return b


def solve_neumann_bruteforce(problem, decomp, i, flux):
    """Solve ``<A_i^0 w, v> = <flux, T_i v>`` with a generic root finder."""
    mesh = decomp.mesh
    tri_ids = np.flatnonzero(decomp.subdomain_of_triangle == i)
    nodes = np.concatenate([decomp.interior_dofs[i - 1], decomp.interface_dofs])
    b = np.zeros(len(nodes))
    b[len(nodes) - decomp.n_interface:] = flux
    zero = lambda x: 0.0  # noqa: E731

    def F(w):
        return dense_residual(problem, mesh, tri_ids, nodes, w, zero) - b

    w, info, ier, msg = fsolve(F, np.zeros(len(nodes)), xtol=1e-14, full_output=True)
    assert ier == 1, msg
    return w
