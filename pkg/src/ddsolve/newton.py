"""Counted sparse direct solves and Newton's method for the subdomain problems."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .mesh import Decomposition

LINEAR_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class NewtonConfig:
    residual_tol: float = 1e-10
    max_iters: int = 50
    warm_start: bool = True

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolveStats:
    newton_iters: int = 0
    linear_solves: int = 0
    final_residual: float = 0.0

    def __add__(self, other: "SolveStats") -> "SolveStats":
        return SolveStats(self.newton_iters + other.newton_iters,
                          self.linear_solves + other.linear_solves,
                          max(self.final_residual, other.final_residual))


class SolveCounter:
    """Thread-safe running total of linear solves."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._count += n


class LinearSolveError(RuntimeError):
    def __init__(self, message: str, context: str | None = None):
        super().__init__(f"{message} [{context}]" if context else message)
        self.context = context


class NewtonError(RuntimeError):
    """Newton did not converge; ``best`` is the iterate with the smallest residual."""

    def __init__(self, message: str, best: np.ndarray, stats: SolveStats, context: str | None = None):
        super().__init__(f"{message} [{context}]" if context else message)
        self.best = best
        self.stats = stats
        self.context = context


class Factorization:
    """Sparse LU factors of a square matrix, reusable across right-hand sides."""

    def __init__(self, matrix, context: str | None = None):
        A = sp.csc_matrix(matrix)
        if A.shape[0] != A.shape[1]:
            raise LinearSolveError(f"system is not square: {A.shape}", context)
        self.matrix = A
        self.context = context
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise LinearSolveError(f"factorization failed: {exc}", context) from exc

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


def factorize(matrix, context: str | None = None) -> Factorization:
    return Factorization(matrix, context)


def linear_solve(system, rhs, counter: SolveCounter | None = None,
                 context: str | None = None) -> np.ndarray:
    """Solve ``A x = b`` with a sparse direct method; counts as one linear solve.

    ``system`` is a sparse matrix or a :class:`Factorization`.  One step of
    iterative refinement is taken if the residual misses the tolerance.
    """
    fac = system if isinstance(system, Factorization) else Factorization(system, context)
    context = context or fac.context
    b = np.asarray(rhs, dtype=float)
    if b.shape != (fac.shape[0],):
        raise LinearSolveError(f"rhs has shape {b.shape}, expected ({fac.shape[0]},)", context)
    if counter is not None:
        counter.add(1)
    if fac.shape[0] == 0:
        return np.zeros(0)

    x = fac.solve(b)
    tol = LINEAR_RESIDUAL_TOL * (1.0 + np.linalg.norm(b))
    res = b - fac.matrix @ x
    if not np.linalg.norm(res) <= tol:
        x = x + fac.solve(res)
        res = b - fac.matrix @ x
    if not np.all(np.isfinite(x)) or not np.linalg.norm(res) <= tol:
        raise LinearSolveError(f"linear solve residual {np.linalg.norm(res):.3e} exceeds {tol:.3e}",
                               context)
    return x


def newton(residual, jacobian, u0: np.ndarray, cfg: NewtonConfig,
           counter: SolveCounter | None = None, context: str | None = None):
    """Plain Newton iteration ``u <- u - J(u)^{-1} r(u)``, no damping.

    Stops when the Euclidean norm of ``r`` drops to ``cfg.residual_tol``.
    Returns ``(u, SolveStats)``; raises :class:`NewtonError` otherwise.
    """
    u = np.array(u0, dtype=float, copy=True)
    stats = SolveStats()
    best, best_res = u.copy(), np.inf
    for it in range(cfg.max_iters + 1):
        r = residual(u)
        res = float(np.linalg.norm(r))
        if res < best_res:
            best, best_res = u.copy(), res
        stats.final_residual = res
        if res <= cfg.residual_tol:
            return u, stats
        if not np.isfinite(res) or it == cfg.max_iters:
            break
        try:
            du = linear_solve(jacobian(u), -r, counter, context=f"{context}, newton step {it + 1}")
        except LinearSolveError as exc:
            stats.final_residual = best_res
            raise NewtonError(f"linear solve failed: {exc}", best, stats, context) from exc
        stats.newton_iters += 1
        stats.linear_solves += 1
        u += du
    stats.final_residual = best_res
    raise NewtonError(f"Newton did not converge in {stats.newton_iters} steps "
                      f"(best residual {best_res:.3e})", best, stats, context)


def solve_dirichlet(problem, decomp: Decomposition, i: int, eta, f=None,
                    cfg: NewtonConfig = NewtonConfig(), guess=None,
                    counter: SolveCounter | None = None):
    """Subdomain solve with interface values ``eta`` (the discrete ``F_i``).

    Newton acts on interior dofs only; the interface entries of the result
    equal ``eta`` exactly.  ``guess`` seeds the interior values when
    ``cfg.warm_start`` is set.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (decomp.n_interface,):
        raise ValueError(f"interface vector must have length {decomp.n_interface}")
    dofs = decomp.subdomain_dofs(i)
    n_int = decomp.n_interior(i)
    u = np.zeros(len(dofs))
    if guess is not None and cfg.warm_start:
        u[:n_int] = np.asarray(guess, dtype=float)[:n_int]
    u[n_int:] = eta

    def residual(ui):
        u[:n_int] = ui
        return fem.assemble_residual(problem, dofs, u, f)[:n_int]

    def jacobian(ui):
        u[:n_int] = ui
        return fem.assemble_jacobian(problem, dofs, u)[:n_int, :n_int]

    ui, stats = newton(residual, jacobian, u[:n_int], cfg, counter,
                       context=f"Dirichlet solve, subdomain {i}")
    out = np.empty(len(dofs))
    out[:n_int] = ui
    out[n_int:] = eta
    return out, stats


def solve_nonlinear_neumann(problem, decomp: Decomposition, i: int, flux,
                            cfg: NewtonConfig = NewtonConfig(),
                            counter: SolveCounter | None = None):
    """Find ``w`` with ``<A_i^0 w, v> = <flux, T_i v>`` for all subdomain test functions.

    ``A_i^0`` is the subdomain operator with zero source; Newton starts at 0.
    """
    flux = np.asarray(flux, dtype=float)
    if flux.shape != (decomp.n_interface,):
        raise ValueError(f"interface functional must have length {decomp.n_interface}")
    dofs = decomp.subdomain_dofs(i)
    b = np.zeros(len(dofs))
    b[decomp.trace_index[i - 1]] = flux

    def residual(w):
        return fem.assemble_residual(problem, dofs, w, fem.zero_source) - b

    def jacobian(w):
        return fem.assemble_jacobian(problem, dofs, w)

    return newton(residual, jacobian, np.zeros(len(dofs)), cfg, counter,
                  context=f"Neumann solve, subdomain {i}")
