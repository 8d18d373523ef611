"""Sparse LP feasibility with Farkas infeasibility certificates.

The feasibility question  "exists x >= 0 with A.x = v"  is relaxed to the
optimization  max -1.s  subject to  A.(x - s) = v, x >= 0, s >= 0, whose
optimum is 0 exactly when the original system is feasible.  The dual
  min y.v   subject to  0 <= y.A <= 1
prices the degree of infeasibility; any dual-feasible y with y.v < 0 is an
infeasibility certificate.

Two solve paths share this contract: a direct path for materialized systems
and a column-generation path for systems whose columns are enumerated lazily
(the quaternary inflation LP).  Certificates are always re-checked by
``verify_certificate``, which uses nothing but sparse arithmetic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse.linalg import lsqr

from .errors import DomainError, StateError
from .inflation import AssembledLp, SparseMatrix

FEAS_TOL = 1e-8          # |objective| below this is feasible
INFEAS_TOL = 1e-6        # objective below -this is hard infeasibility
CERT_SLACK_TOL = 1e-10   # allowed negative slack in y.A
PRICE_TOL = 1e-9


@dataclass
class LpResult:
    status: str                       # feasible | infeasible | ambiguous
    objective: float                  # optimum of max -1.s (<= 0)
    x: np.ndarray | None = None       # primal solution when feasible
    y: np.ndarray | None = None       # dual certificate when infeasible
    iterations: int = 0
    runtime: float = 0.0
    columns_used: int | None = None
    rescaled: bool = False
    notes: dict = field(default_factory=dict)


def _as_csr(A):
    if isinstance(A, SparseMatrix):
        return A.to_scipy()
    return sparse.csr_matrix(A)


def _span_certificate(A_csr, v):
    """Separating vector when v is not even in the column span of A:
    the negated least-squares residual satisfies y.A ~ 0 and y.v < 0."""
    sol = lsqr(A_csr, v, atol=1e-14, btol=1e-14, iter_lim=10000)
    residual = v - A_csr @ sol[0]
    norm = np.linalg.norm(residual)
    if norm == 0.0:
        return None
    return -residual / norm


def _status_from_objective(obj):
    if obj >= -FEAS_TOL:
        return "feasible"
    if obj <= -INFEAS_TOL:
        return "infeasible"
    return "ambiguous"


def solve_feasibility(A, v, rescale_on_ambiguity: bool = True) -> LpResult:
    """Direct path: decide  exists x >= 0 : A.x = v  on a materialized A."""
    t0 = time.perf_counter()
    A_csr = _as_csr(A)
    v = np.asarray(v, dtype=float).reshape(-1)
    if A_csr.shape[0] != v.size:
        raise DomainError(f"A has {A_csr.shape[0]} rows but v has length {v.size}")
    result = _solve_once(A_csr, v)
    if result.status == "ambiguous" and rescale_on_ambiguity:
        # row equilibration and one re-solve before giving up
        row_max = np.maximum(np.abs(A_csr).max(axis=1).toarray().ravel(), 1e-30)
        D = sparse.diags(1.0 / row_max)
        result2 = _solve_once(D @ A_csr, v / row_max)
        if result2.status != "ambiguous":
            if result2.y is not None:
                result2.y = result2.y / row_max
                result2 = _finalize_certificate(result2, A_csr, v)
            result2.rescaled = True
            result2.runtime = time.perf_counter() - t0
            return result2
        result.rescaled = True
    result.runtime = time.perf_counter() - t0
    return result


def _solve_once(A_csr, v) -> LpResult:
    n = A_csr.shape[1]
    A_eq = sparse.hstack([A_csr, -A_csr], format="csr")
    cost = np.concatenate([np.zeros(n), np.ones(n)])
    res = linprog(cost, A_eq=A_eq, b_eq=v, bounds=(0, None), method="highs")
    if res.status == 2:  # relaxation infeasible: v outside the column span
        y = _span_certificate(A_csr, v)
        if y is None:
            return LpResult(status="ambiguous", objective=0.0)
        out = LpResult(status="infeasible", objective=float(y @ v), y=y)
        return _finalize_certificate(out, A_csr, v)
    if res.status != 0:
        raise StateError(f"LP solver failed with status {res.status}: {res.message}")
    objective = -float(res.fun)  # optimum of max -1.s
    nit = int(getattr(res, "nit", 0))
    status = _status_from_objective(objective)
    if status == "feasible":
        x = res.x[:n] - res.x[n:]
        if np.min(x) < -1e-10 or np.abs(A_csr @ x - v).max() > FEAS_TOL:
            return LpResult(status="ambiguous", objective=objective, iterations=nit)
        return LpResult(status="feasible", objective=objective, x=x, iterations=nit)
    y = -np.asarray(res.eqlin.marginals, dtype=float)
    out = LpResult(status=status, objective=objective, y=y, iterations=nit)
    if status == "infeasible":
        out = _finalize_certificate(out, A_csr, v)
    return out


def _finalize_certificate(result: LpResult, A_csr, v) -> LpResult:
    """Demote to ambiguous unless the claimed certificate verifies."""
    ok, min_slack, y_dot_v = verify_certificate(result.y, A_csr, v)
    result.notes["min_slack"] = min_slack
    result.notes["y_dot_v"] = y_dot_v
    if not ok:
        result.status = "ambiguous"
        result.y = None
    return result


def extract_certificate(assembled: AssembledLp, result: LpResult | None = None):
    """De-twirled Farkas certificate of an infeasible assembled system:
    the dual vector lifted to the d**6 marginal-pair space (every class
    member uniformly carries its class coefficient) plus its margin -y.v."""
    if result is None:
        result = solve_assembled(assembled)
    if result.status != "infeasible" or result.y is None:
        raise StateError(
            f"certificate extraction requires an infeasible solve, "
            f"got {result.status}")
    y_full = assembled.detwirl(result.y)
    return y_full, -float(y_full @ assembled.v_full)


def verify_certificate(y, A, v, tol: float = CERT_SLACK_TOL):
    """Independent Farkas check: min(y.A) >= -tol and y.v < 0.

    Pure sparse arithmetic; accepts certificates from any solve path.
    Returns (ok, min_slack, y_dot_v).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if isinstance(A, SparseMatrix):
        slacks = A.transpose_dot(y)
    else:
        slacks = np.asarray(sparse.csr_matrix(A).T @ y).ravel()
    min_slack = float(slacks.min()) if slacks.size else 0.0
    y_dot_v = float(y @ np.asarray(v, dtype=float).reshape(-1))
    return (min_slack >= -tol and y_dot_v < 0.0), min_slack, y_dot_v


# ---------------------------------------------------------------------------
# column generation for lazily-enumerated systems
# ---------------------------------------------------------------------------

def solve_feasibility_colgen(assembled: AssembledLp,
                             batch: int = 4000,
                             max_rounds: int = 200) -> LpResult:
    """Column-generation path for an AssembledLp with lazy columns.

    The restricted master carries signed per-row artificials (a permanently
    feasible phase-I form of the same relaxation); pricing sweeps all column
    representatives vectorized.  On convergence with a positive infeasibility
    degree, the master's dual prices out every column, which is exactly the
    Farkas certificate condition.
    """
    t0 = time.perf_counter()
    v = assembled.v
    m = v.size
    # start from the columns most aligned with v plus a spread of others
    rc0 = assembled.price_columns(v / max(np.linalg.norm(v), 1e-30))
    order = np.argsort(rc0)
    seed_ids = np.unique(np.concatenate([
        order[-min(batch, order.size):],
        order[:: max(1, order.size // batch)],
    ]))
    active = seed_ids
    cols = assembled.columns_for(assembled.col_reps[active]).to_scipy()
    rounds = 0
    total_iters = 0
    while True:
        rounds += 1
        if rounds > max_rounds:
            raise StateError(f"column generation failed to converge in {max_rounds} rounds")
        A_eq = sparse.hstack([cols, sparse.eye(m), -sparse.eye(m)], format="csr")
        cost = np.concatenate([np.zeros(cols.shape[1]), np.ones(2 * m)])
        res = linprog(cost, A_eq=A_eq, b_eq=v, bounds=(0, None), method="highs")
        if res.status != 0:
            raise StateError(f"restricted master failed: {res.message}")
        total_iters += int(getattr(res, "nit", 0))
        objective = -float(res.fun)
        y = np.asarray(res.eqlin.marginals, dtype=float)
        # dual of the min form: price = y.A; columns violate when price > 0
        prices = assembled.price_columns(y)
        worst = prices.max() if prices.size else 0.0
        if worst > PRICE_TOL:
            take = np.argsort(prices)[-batch:]
            take = take[prices[take] > PRICE_TOL]
            new = np.setdiff1d(take, active)
            if new.size:
                active = np.concatenate([active, new])
                cols = sparse.hstack(
                    [cols, assembled.columns_for(assembled.col_reps[new]).to_scipy()],
                    format="csr")
                continue
            # violating columns already active: numerically stuck; fall
            # through with the true worst so the certificate check decides
        status = _status_from_objective(objective)
        runtime = time.perf_counter() - t0
        if status == "feasible":
            x = res.x[:cols.shape[1]]
            return LpResult(status="feasible", objective=objective, x=x,
                            iterations=total_iters, runtime=runtime,
                            columns_used=int(cols.shape[1]),
                            notes={"active_reps": active})
        cert = -y
        min_slack = float(-worst) if prices.size else 0.0
        y_dot_v = float(cert @ v)
        ok = min_slack >= -CERT_SLACK_TOL and y_dot_v < 0.0
        result = LpResult(status=status if ok else "ambiguous",
                          objective=objective,
                          y=cert if ok else None,
                          iterations=total_iters, runtime=runtime,
                          columns_used=int(cols.shape[1]),
                          notes={"min_slack": min_slack, "y_dot_v": y_dot_v})
        return result


def solve_assembled(assembled: AssembledLp, **kwargs) -> LpResult:
    """Dispatch: direct solve when the matrix is materialized, column
    generation otherwise."""
    if assembled.matrix is not None:
        return solve_feasibility(assembled.matrix, assembled.v, **kwargs)
    return solve_feasibility_colgen(assembled)


# ---------------------------------------------------------------------------
# rationalization (publication-grade certificates)
# ---------------------------------------------------------------------------

def rationalize(y: np.ndarray, max_denominator: int = 10**6) -> list[Fraction]:
    return [Fraction(float(t)).limit_denominator(max_denominator) for t in y]


def exact_reduced_check(assembled: AssembledLp, y_reduced_fracs,
                        chunk: int = 1 << 20) -> bool:
    """Exact-arithmetic nonnegativity of the de-twirled certificate on every
    column, done on the reduced system with integer orbit counts.

    The de-twirled coefficient on class k is y_k / |C_k|; a column built from
    representative x contributes count(k, x) hits with weight 1/|G|, so the
    exact slack sign equals the sign of sum_k n_k * L / (den_k * |C_k|) with
    a common denominator L.  Everything fits in int64 for the sizes at hand.
    """
    import math

    fr = list(y_reduced_fracs)
    sizes = assembled.row_classes.sizes
    lcm = 1
    for f, s in zip(fr, sizes):
        lcm = math.lcm(lcm, f.denominator * int(s))
        if lcm > 2**44:
            raise DomainError(
                "rationalized certificate denominators too coarse for an "
                "exact int64 check"
            )
    nums = np.array([int(f * lcm) // int(s) for f, s in zip(fr, sizes)],
                    dtype=np.int64)
    if np.abs(nums).max(initial=0) > 2**44:
        raise DomainError("rationalized certificate too coarse for exact int64 check")
    d = assembled.d
    reps_all = assembled.col_reps
    if reps_all is None:
        reps_all = np.arange(assembled.matrix.cols, dtype=np.int64)
    from .inflation import _index_dtype, marginal_after

    ok = True
    for lo in range(0, reps_all.size, chunk):
        reps = reps_all[lo:lo + chunk].astype(_index_dtype(d))
        acc = np.zeros(reps.size, dtype=np.int64)
        for g in assembled.col_group or assembled.problem.group:
            acc += nums[assembled.row_classes.ids[marginal_after(g, reps, d)]]
        if acc.min(initial=0) < 0:
            ok = False
            break
    return ok
