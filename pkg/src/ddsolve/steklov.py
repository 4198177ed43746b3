"""Discrete Steklov-Poincare residual and the three interface corrections.

Interface functionals are coefficient vectors against the interface nodal
basis functions extended by zero into each subdomain.  Since the interior
residual of ``F_i eta`` vanishes, ``S_i eta`` is simply the interface block
of the subdomain residual.
"""

from __future__ import annotations

import enum

import numpy as np

from . import fem
from .mesh import Decomposition, trace
from .newton import (NewtonConfig, SolveCounter, SolveStats, factorize, linear_solve,
                     solve_dirichlet, solve_nonlinear_neumann)


class PrecondKind(str, enum.Enum):
    NONE = "none"            # nonlinear Neumann-Neumann
    LAPLACE = "laplace"      # fixed Laplace preconditioner
    LINEARIZED = "linearized"


def _check_interface(decomp: Decomposition, v, what="interface vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (decomp.n_interface,):
        raise ValueError(f"{what} must have length {decomp.n_interface}, got shape {v.shape}")
    return v


def apply_S(problem, decomp: Decomposition, eta, f=None, cfg: NewtonConfig = NewtonConfig(),
            warm=None, counter: SolveCounter | None = None):
    """Evaluate ``S^h eta = S_1^h eta + S_2^h eta``.

    Returns ``(d, (u1, u2), stats)`` where ``u_i = F_i^h eta``.  ``warm`` is an
    optional pair of subdomain fields used as Newton starting points.
    """
    eta = _check_interface(decomp, eta)
    d = np.zeros(decomp.n_interface)
    fields = []
    stats = SolveStats()
    for i in (1, 2):
        guess = None if warm is None else warm[i - 1]
        u, st = solve_dirichlet(problem, decomp, i, eta, f, cfg, guess, counter)
        r = fem.assemble_residual(problem, decomp.subdomain_dofs(i), u, f)
        d += r[decomp.trace_index[i - 1]]
        fields.append(u)
        stats = stats + st
    return d, tuple(fields), stats


def _neumann_rhs(decomp: Decomposition, i: int, d: np.ndarray) -> np.ndarray:
    b = np.zeros(decomp.n_local(i))
    b[decomp.trace_index[i - 1]] = d
    return b


def _laplace_factor(decomp: Decomposition, i: int):
    dofs = decomp.subdomain_dofs(i)
    fac = dofs.cache.get("laplace_lu")
    if fac is None:
        fac = factorize(fem.assemble_laplace_stiffness(dofs), f"Laplace Neumann, subdomain {i}")
        dofs.cache["laplace_lu"] = fac
    return fac


def apply_precond_laplace(decomp: Decomposition, d, s1: float, s2: float,
                          counter: SolveCounter | None = None) -> np.ndarray:
    """``(s1 P_1^{-1} + s2 P_2^{-1}) d`` with ``P_i`` the Laplace Steklov-Poincare operators."""
    d = _check_interface(decomp, d, "interface functional")
    out = np.zeros(decomp.n_interface)
    for i, s in ((1, s1), (2, s2)):
        w = linear_solve(_laplace_factor(decomp, i), _neumann_rhs(decomp, i, d), counter)
        out += s * trace(decomp, i, w)
    return out


def apply_precond_linearized(problem, decomp: Decomposition, d, u1, u2, s1: float, s2: float,
                             counter: SolveCounter | None = None) -> np.ndarray:
    """Same as :func:`apply_precond_laplace` with the operator linearised at ``u_i``."""
    d = _check_interface(decomp, d, "interface functional")
    out = np.zeros(decomp.n_interface)
    for i, s, u in ((1, s1, u1), (2, s2, u2)):
        J = fem.assemble_jacobian(problem, decomp.subdomain_dofs(i), u)
        w = linear_solve(J, _neumann_rhs(decomp, i, d), counter,
                         context=f"linearized Neumann, subdomain {i}")
        out += s * trace(decomp, i, w)
    return out


def apply_nn_auxiliary(problem, decomp: Decomposition, d, s1: float, s2: float,
                       cfg: NewtonConfig = NewtonConfig(), counter: SolveCounter | None = None):
    """Correction ``s1 T_1 w_1 + s2 T_2 w_2`` from the nonlinear Neumann problems.

    Returns ``(correction, stats)``.  :class:`~ddsolve.newton.NewtonError`
    propagates to the caller.
    """
    d = _check_interface(decomp, d, "interface functional")
    out = np.zeros(decomp.n_interface)
    stats = SolveStats()
    for i, s in ((1, s1), (2, s2)):
        w, st = solve_nonlinear_neumann(problem, decomp, i, d, cfg, counter)
        out += s * trace(decomp, i, w)
        stats = stats + st
    return out, stats


def _harmonic_factor(decomp: Decomposition, i: int):
    dofs = decomp.subdomain_dofs(i)
    cached = dofs.cache.get("harmonic")
    if cached is None:
        K = fem.assemble_laplace_stiffness(dofs)
        n = decomp.n_interior(i)
        fac = factorize(K[:n, :n], f"harmonic extension, subdomain {i}") if n else None
        cached = dofs.cache["harmonic"] = (K, n, fac)
    return cached


def harmonic_extension(decomp: Decomposition, i: int, eta) -> np.ndarray:
    """Discrete harmonic extension of ``eta`` into subdomain ``i``."""
    eta = _check_interface(decomp, eta)
    K, n, fac = _harmonic_factor(decomp, i)
    u = np.zeros(decomp.n_local(i))
    u[n:] = eta
    if n:
        u[:n] = fac.solve(-(K[:n, n:] @ eta))
    return u


def p_energy_norm(decomp: Decomposition, eta) -> float:
    """``sqrt(<(P_1 + P_2) eta, eta>)`` for the Laplace Steklov-Poincare operators."""
    eta = _check_interface(decomp, eta)
    total = 0.0
    for i in (1, 2):
        K, _, _ = _harmonic_factor(decomp, i)
        u = harmonic_extension(decomp, i, eta)
        total += u @ (K @ u)
    return float(np.sqrt(max(total, 0.0)))
