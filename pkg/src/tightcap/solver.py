"""Damped Gauss-Newton over sparse residual blocks.

Blocks map a parameter vector to (residuals, jacobian); any weighting is
folded into the residuals by the block itself (sqrt of the energy weight),
so the solver only ever minimizes 0.5 * ||r||^2. Rotation-like parameters
use the retraction hook: after every accepted step the problem folds the
increment into its own state and hands back a fresh (zero) vector, so
jacobians are always evaluated at the identity increment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

Jacobian = Union[np.ndarray, sp.spmatrix]
BlockFn = Callable[[np.ndarray], Tuple[np.ndarray, Jacobian]]


class SolverError(RuntimeError):
    pass


@dataclass
class ResidualBlock:
    name: str
    fn: BlockFn

    def __call__(self, x: np.ndarray) -> Tuple[np.ndarray, Jacobian]:
        r, J = self.fn(x)
        r = np.asarray(r, dtype=np.float64).ravel()
        if not sp.issparse(J):
            J = np.asarray(J, dtype=np.float64)
        if J.shape != (r.size, x.size):
            raise SolverError(
                f"block '{self.name}': jacobian shape {J.shape} != "
                f"({r.size}, {x.size})")
        return r, J


@dataclass
class SolveOptions:
    max_iters: int = 4
    damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_retries: int = 8
    cg_tol: float = 1e-10
    cg_max_iters: int = 800
    step_tol: float = 1e-12
    verbose: bool = False


class SolveResult(NamedTuple):
    x: np.ndarray
    cost: float
    cost_history: List[float]
    iterations: int
    converged: bool


def _conjugate_gradient(matvec, b, tol, max_iters):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    b_norm = np.sqrt(float(b @ b))
    if b_norm == 0.0:
        return x
    for _ in range(max_iters):
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            break  # damping keeps H PD; bail to the best iterate on breakdown
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= tol * b_norm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    if not np.isfinite(x).all():
        raise SolverError("conjugate gradient produced non-finite step")
    return x


def _gather(blocks: Sequence[ResidualBlock], x: np.ndarray):
    rs, Js = [], []
    for b in blocks:
        r, J = b(x)
        rs.append(r)
        Js.append(sp.csr_matrix(J))
    r = np.concatenate(rs) if rs else np.zeros(0)
    J = sp.vstack(Js, format="csr") if Js else sp.csr_matrix((0, x.size))
    return r, J


def solve(blocks: Sequence[ResidualBlock],
          x0: np.ndarray,
          options: Optional[SolveOptions] = None,
          retract: Optional[Callable[[np.ndarray], np.ndarray]] = None
          ) -> SolveResult:
    """Levenberg-damped Gauss-Newton; cost never increases across iterations."""
    opts = options or SolveOptions()
    if not blocks:
        raise SolverError("no residual blocks")
    x = np.asarray(x0, dtype=np.float64).copy()
    lam = opts.damping
    r, J = _gather(blocks, x)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise SolverError("initial residuals are not finite")
    history = [cost]
    iters_done = 0
    converged = False
    for _ in range(opts.max_iters):
        H = (J.T @ J).tocsr()
        g = J.T @ r
        accepted = False
        for _ in range(opts.max_retries):
            def matvec(v, H=H, lam=lam):
                return H @ v + lam * v
            step = _conjugate_gradient(matvec, -g, opts.cg_tol, opts.cg_max_iters)
            x_try = x + step
            r_try, J_try = _gather(blocks, x_try)
            cost_try = 0.5 * float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try <= cost:
                x, r, J, cost = x_try, r_try, J_try, cost_try
                lam = max(lam * opts.damping_down, 1e-12)
                accepted = True
                break
            lam *= opts.damping_up
        iters_done += 1
        history.append(cost)
        if accepted and retract is not None:
            x = retract(x)
            r, J = _gather(blocks, x)
        step_norm = float(np.linalg.norm(step)) if accepted else 0.0
        if not accepted or step_norm < opts.step_tol:
            converged = True
            break
    return SolveResult(x=x, cost=cost, cost_history=history,
                       iterations=iters_done, converged=converged)


class GradientCheck(NamedTuple):
    max_error: float
    worst_param: int
    ok: bool


def check_gradient(block: ResidualBlock, x: np.ndarray,
                   eps: float = 1e-5, threshold: float = 1e-4) -> GradientCheck:
    """Central-difference validation of a block jacobian.

    Relative error per entry uses a 1e-8 floor in the denominator so
    near-zero rows do not blow up the ratio. The step keeps subtraction
    noise (ulp/eps) well under the floor for unit-scale residuals.
    """
    x = np.asarray(x, dtype=np.float64)
    _, J = block(x)
    if sp.issparse(J):
        J = J.toarray()
    worst = 0.0
    worst_i = -1
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = eps
        rp, _ = block(x + d)
        rm, _ = block(x - d)
        fd = (rp - rm) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(J[:, i])), 1e-8)
        err = float(np.max(np.abs(fd - J[:, i]) / denom))
        if err > worst:
            worst, worst_i = err, i
    return GradientCheck(max_error=worst, worst_param=worst_i,
                         ok=worst <= threshold)
