"""Outer interface iteration ``eta <- eta - P^{-1} S eta`` for NN, MNN1 and MNN2."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .mesh import Decomposition, trace
from .newton import (LinearSolveError, NewtonConfig, NewtonError, SolveCounter, newton,
                     solve_nonlinear_neumann)
from .steklov import (apply_S, apply_precond_laplace,
                      apply_precond_linearized, p_energy_norm)

log = logging.getLogger(__name__)


class MethodKind(str, enum.Enum):
    NN = "nn"
    MNN1 = "mnn1"
    MNN2 = "mnn2"


@dataclass
class TraceRow:
    n: int
    rel_error: float
    cumulative_linear_solves: int
    newton_iters: int
    update_norm: float
    failed: bool = False


@dataclass
class IterationTrace:
    method: MethodKind
    rows: list = field(default_factory=list)
    failed: bool = False
    message: str = ""

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.rel_error for r in self.rows])

    @property
    def solves(self) -> np.ndarray:
        return np.array([r.cumulative_linear_solves for r in self.rows])


def monolithic_solve(problem, decomp: Decomposition, f=None, cfg: NewtonConfig = NewtonConfig(),
                     counter: SolveCounter | None = None):
    """Newton solve of the undecomposed discrete problem, restricted to both subdomains."""
    dofs = decomp.global_dofs()
    u, _ = newton(lambda v: fem.assemble_residual(problem, dofs, v, f),
                  lambda v: fem.assemble_jacobian(problem, dofs, v),
                  np.zeros(len(dofs)), cfg, counter, context="monolithic solve")
    return decomp.restrict(1, u), decomp.restrict(2, u)


def relative_error(decomp: Decomposition, fields, reference) -> float:
    """``sum_i ||u_i - u_i^h||_{V_i} / sum_i ||u_i^h||_{V_i}``."""
    num = den = 0.0
    for i in (1, 2):
        dofs = decomp.subdomain_dofs(i)
        num += fem.h1_norm(dofs, np.asarray(fields[i - 1]) - np.asarray(reference[i - 1]))
        den += fem.h1_norm(dofs, reference[i - 1])
    if den == 0.0:
        raise ValueError("reference solution is zero; relative error undefined")
    return num / den


def contraction_factor(errors, min_decreasing: int = 5):
    """Geometric rate fitted by least squares to ``log e_n`` over the last half.

    Returns ``None`` when fewer than ``min_decreasing`` steps decrease the error.
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 2 or np.count_nonzero(np.diff(e) < 0) < min_decreasing:
        return None
    n = np.arange(len(e))
    tail = slice(len(e) // 2, len(e))
    ee = e[tail]
    if len(ee) < 2 or np.any(ee <= 0):
        return None
    slope = np.polyfit(n[tail], np.log(ee), 1)[0]
    return float(np.exp(slope))


def run(method, problem, decomp: Decomposition, f=None, s1: float = 0.2, s2: float = 0.2,
        eta0=None, max_outer: int = 30, stop_tol: float = 1e-8,
        cfg: NewtonConfig = NewtonConfig(), reference=None) -> IterationTrace:
    """Run one interface iteration and record the error of ``F_i eta^n`` for each ``n``.

    Row ``n`` holds the error of the subdomain solves at ``eta^n`` and the
    linear solves spent to obtain them.  A Newton failure in the NN auxiliary
    problem flags the row and continues from the best Newton iterate; any
    other inner failure stops the run with a flagged trace.
    """
    method = MethodKind(method)
    if not (s1 > 0 and s2 > 0):
        raise ValueError("s1 and s2 must be positive")
    if reference is None:
        reference = monolithic_solve(problem, decomp, f, cfg)
    eta = np.zeros(decomp.n_interface) if eta0 is None else np.array(eta0, dtype=float)

    counter = SolveCounter()
    record = IterationTrace(method)
    warm = None
    pending_iters = 0
    pending_failed = False
    update = 0.0
    for n in range(max_outer + 1):
        try:
            d, fields, st = apply_S(problem, decomp, eta, f, cfg, warm, counter)
        except (NewtonError, LinearSolveError) as exc:
            record.failed, record.message = True, f"iteration {n}: {exc}"
            log.warning("stopping: %s", record.message)
            break
        warm = fields if cfg.warm_start else None
        err = relative_error(decomp, fields, reference)
        record.rows.append(TraceRow(n, err, counter.count, pending_iters + st.newton_iters,
                                   update, pending_failed))
        if err < stop_tol or n == max_outer:
            break

        pending_iters, pending_failed = 0, False
        try:
            if method is MethodKind.NN:
                corr, pending_iters, msg = _nn_correction(problem, decomp, d, s1, s2, cfg, counter)
                if msg:
                    pending_failed = record.failed = True
                    record.message = record.message or f"iteration {n}: {msg}"
            elif method is MethodKind.MNN1:
                corr = apply_precond_laplace(decomp, d, s1, s2, counter)
            else:
                corr = apply_precond_linearized(problem, decomp, d, *fields, s1, s2, counter)
        except (NewtonError, LinearSolveError) as exc:
            record.failed, record.message = True, f"iteration {n}: {exc}"
            log.warning("stopping: %s", record.message)
            break
        eta = eta - corr
        update = p_energy_norm(decomp, corr)
    return record


def _nn_correction(problem, decomp, d, s1, s2, cfg, counter):
    """NN correction that falls back to the best Newton iterate on failure.

    Returns ``(correction, newton_iters, failure_message)``.
    """
    out = np.zeros(decomp.n_interface)
    iters, msg = 0, ""
    for i, s in ((1, s1), (2, s2)):
        try:
            w, st = solve_nonlinear_neumann(problem, decomp, i, d, cfg, counter)
        except NewtonError as exc:
            log.info("NN auxiliary solve failed, using best iterate: %s", exc)
            w, st, msg = exc.best, exc.stats, msg or str(exc)
        iters += st.newton_iters
        out += s * trace(decomp, i, w)
    return out, iters, msg
