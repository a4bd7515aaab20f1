"""Small dense convex QP solver.

Dual active-set method in the Goldfarb-Idnani style: start from the
equality-constrained optimum and add violated inequalities one at a time,
taking dual steps (dropping blocking constraints) when a full primal step is
not possible. Finite for strictly convex problems; the cost matrix gets a
tiny diagonal regularization so rank-deficient Hessians (common here: some
costs touch a single linear functional of the variables) become strictly
convex.

Problems are given as

    min 1/2 x'Hx + f'x
    s.t. A_eq x = b_eq
         lb <= A_in x <= ub          (either side may be infinite)

Sizes stay tiny (n <= 128), so every step direction is computed from a fresh
dense KKT solve instead of maintaining factorizations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

REGULARIZATION = 1e-10
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200

# multiplier/zero-direction thresholds, scale-free for our problem sizes
_DUAL_EPS = 1e-12
_DIR_EPS = 1e-13


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


class QpValidationError(ValueError):
    pass


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = self.f.shape[0]
        if n > 128:
            raise QpValidationError(f"variable count {n} exceeds 128")
        if self.H.shape != (n, n):
            raise QpValidationError(f"H shape {self.H.shape} vs n={n}")
        if not np.allclose(self.H, self.H.T, atol=1e-9, rtol=1e-9):
            raise QpValidationError("H must be symmetric")
        if np.linalg.eigvalsh(self.H).min() < -1e-8 * max(1.0, np.abs(self.H).max()):
            raise QpValidationError("H must be positive semidefinite")
        for name in ("A_eq", "b_eq", "A_in", "lb", "ub"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))
        me = 0 if self.A_eq is None else self.A_eq.shape[0]
        if (self.b_eq.shape[0] if self.b_eq is not None else 0) != me:
            raise QpValidationError("A_eq/b_eq row mismatch")
        if self.A_eq is not None and self.A_eq.shape[1] != n:
            raise QpValidationError("A_eq column mismatch")
        mi = 0 if self.A_in is None else self.A_in.shape[0]
        if self.A_in is not None and self.A_in.shape[1] != n:
            raise QpValidationError("A_in column mismatch")
        for name in ("lb", "ub"):
            v = getattr(self, name)
            if mi and (v is None or v.shape[0] != mi):
                raise QpValidationError(f"{name} must have one entry per A_in row")

    @property
    def n(self) -> int:
        return self.f.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray | None
    status: QpStatus
    kkt_residual: float
    iterations: int
    # one (row, side) pair per active inequality; side +1 upper, -1 lower
    active_set: tuple = ()
    multipliers: np.ndarray | None = None
    eq_multipliers: np.ndarray | None = None


def _kkt_solve(G, M, rhs_top, rhs_bot):
    n = G.shape[0]
    m = 0 if M is None else M.shape[0]
    if m == 0:
        return np.linalg.solve(G, rhs_top), np.zeros(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = G
    K[:n, n:] = M.T
    K[n:, :n] = M
    rhs = np.concatenate([rhs_top, rhs_bot])
    sol = np.linalg.solve(K, rhs)
    # one refinement step keeps equality residuals near machine precision
    sol += np.linalg.solve(K, rhs - K @ sol)
    return sol[:n], sol[n:]


def _independent_rows(A: np.ndarray) -> np.ndarray:
    """Indices of a maximal independent row subset (rank-revealing QR)."""
    if A.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, r, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int)
    rank = int((diag > 1e-11 * diag[0]).sum())
    return np.sort(piv[:rank])


def solve(
    problem: QpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warm_start: tuple = (),
) -> QpSolution:
    """Solve the QP. `warm_start` is an ordering hint: the listed (row, side)
    pairs are examined for violation before the rest, which reproduces the
    previous active set in one pass when the problem has barely changed. The
    converged solution is independent of the hint."""
    n = problem.n
    G = 0.5 * (problem.H + problem.H.T) + REGULARIZATION * np.eye(n)
    f = problem.f

    # equality preprocessing: drop dependent rows, detect inconsistency
    if problem.A_eq is not None and problem.A_eq.shape[0]:
        keep = _independent_rows(problem.A_eq)
        Ae = problem.A_eq[keep]
        be = problem.b_eq[keep]
        if keep.size < problem.A_eq.shape[0]:
            x_ls, *_ = np.linalg.lstsq(problem.A_eq, problem.b_eq, rcond=None)
            if np.abs(problem.A_eq @ x_ls - problem.b_eq).max() > 1e-7:
                return QpSolution(None, QpStatus.INFEASIBLE, np.inf, 0)
    else:
        Ae = np.zeros((0, n))
        be = np.zeros(0)
    me = Ae.shape[0]

    # expand two-sided rows into one-sided constraints  normal'x >= bound
    normals: list[np.ndarray] = []
    bounds: list[float] = []
    keys: list[tuple] = []
    if problem.A_in is not None:
        for i in range(problem.A_in.shape[0]):
            lo = problem.lb[i]
            hi = problem.ub[i]
            if np.isfinite(lo) and np.isfinite(hi) and lo > hi + tol:
                return QpSolution(None, QpStatus.INFEASIBLE, np.inf, 0)
            if np.isfinite(lo):
                normals.append(problem.A_in[i])
                bounds.append(lo)
                keys.append((i, -1))
            if np.isfinite(hi):
                normals.append(-problem.A_in[i])
                bounds.append(-hi)
                keys.append((i, +1))
    n_rows = len(normals)

    try:
        x, lam_eq = _kkt_solve(G, Ae if me else None, -f, be)
    except np.linalg.LinAlgError:
        return QpSolution(None, QpStatus.INFEASIBLE, np.inf, 0)
    if me and np.abs(Ae @ x - be).max() > max(1e-7, 10 * tol):
        return QpSolution(None, QpStatus.INFEASIBLE, np.inf, 0)

    order = list(range(n_rows))
    if warm_start:
        hinted = set(warm_start)
        order.sort(key=lambda k: 0 if keys[k] in hinted else 1)

    working: list[int] = []
    mult: list[float] = []

    def _finish(status: QpStatus, iters: int) -> QpSolution:
        if status is QpStatus.INFEASIBLE:
            return QpSolution(None, status, np.inf, iters)
        mu = np.zeros(n_rows)
        for k, m in zip(working, mult):
            mu[k] = m
        resid = _kkt_residual(problem, x, normals, bounds, mu, Ae, be, lam_eq, tol)
        return QpSolution(
            x=x.copy(),
            status=status,
            kkt_residual=resid,
            iterations=iters,
            active_set=tuple(keys[k] for k in working),
            multipliers=mu,
            eq_multipliers=lam_eq.copy(),
        )

    iters = 0
    while True:
        iters += 1
        if iters > max_iter:
            return _finish(QpStatus.MAX_ITER, iters - 1)
        p = -1
        worst = tol
        for k in order:
            if k in working:
                continue
            v = bounds[k] - normals[k] @ x
            if v > worst:
                worst = v
                p = k
                if warm_start and keys[k] in set(warm_start):
                    break  # take hinted rows eagerly
        if p < 0:
            return _finish(QpStatus.OPTIMAL, iters - 1)

        n_p = normals[p]
        b_p = bounds[p]
        mu_p = 0.0
        for _ in range(2 * (n_rows + n) + 4):
            M = np.vstack([Ae] + [normals[k][None, :] for k in working])
            try:
                z, v = _kkt_solve(G, M if M.shape[0] else None, n_p, np.zeros(M.shape[0]))
            except np.linalg.LinAlgError:
                return _finish(QpStatus.MAX_ITER, iters)
            v_in = v[me:]
            npz = n_p @ z
            t1 = np.inf
            j1 = -1
            for jj in range(len(working)):
                if v_in[jj] > _DUAL_EPS:
                    cand = mult[jj] / v_in[jj]
                    if cand < t1:
                        t1, j1 = cand, jj
            t2 = (b_p - n_p @ x) / npz if npz > _DIR_EPS else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                return _finish(QpStatus.INFEASIBLE, iters)
            if npz > _DIR_EPS:
                x = x + t * z
                lam_eq = lam_eq - t * v[:me]
            mult = [m - t * vi for m, vi in zip(mult, v_in)]
            mu_p += t
            if t2 <= t1:
                working.append(p)
                mult.append(mu_p)
                break
            working.pop(j1)
            mult.pop(j1)
        else:
            return _finish(QpStatus.MAX_ITER, iters)


def _kkt_residual(problem, x, normals, bounds, mu, Ae, be, lam_eq, tol) -> float:
    """Stationarity / primal feasibility / complementarity, max norm."""
    if x is None:
        return np.inf
    g = problem.H @ x + problem.f + REGULARIZATION * x
    for nk, m in zip(normals, mu):
        g -= m * nk
    if Ae.shape[0]:
        g -= Ae.T @ lam_eq
    stat = np.abs(g).max() if g.size else 0.0
    primal = float(np.abs(Ae @ x - be).max()) if Ae.shape[0] else 0.0
    comp = 0.0
    for nk, bk, m in zip(normals, bounds, mu):
        slack = nk @ x - bk
        primal = max(primal, -slack)
        comp = max(comp, abs(m * slack))
        if m < -tol:
            stat = max(stat, -m)
    return max(stat, primal, comp)


def check_kkt(problem: QpProblem, x: np.ndarray, tol: float = 1e-6) -> dict:
    """Independent optimality certificate for a candidate point.

    Deliberately shares no code with the solver: multipliers are re-estimated
    from scratch by a nonnegative least-squares fit of the stationarity
    condition over the constraints that are active at `x`.
    """
    x = np.asarray(x, dtype=float)
    n = problem.n
    grad = problem.H @ x + problem.f + REGULARIZATION * x
    rows = []
    signs = []
    if problem.A_eq is not None and problem.A_eq.shape[0]:
        eq_res = float(np.abs(problem.A_eq @ x - problem.b_eq).max())
        for r in problem.A_eq:
            rows.append(r)
            signs.append(0)  # free sign
    else:
        eq_res = 0.0
    in_res = 0.0
    if problem.A_in is not None:
        vals = problem.A_in @ x
        for i in range(problem.A_in.shape[0]):
            if np.isfinite(problem.lb[i]):
                slack = vals[i] - problem.lb[i]
                in_res = max(in_res, -slack)
                if slack < tol:
                    rows.append(problem.A_in[i])
                    signs.append(-1)
            if np.isfinite(problem.ub[i]):
                slack = problem.ub[i] - vals[i]
                in_res = max(in_res, -slack)
                if slack < tol:
                    rows.append(-problem.A_in[i])
                    signs.append(-1)
    if rows:
        A = np.vstack(rows).T  # n x m
        # grad = sum lambda_i * row_i with lambda >= 0 on inequality rows
        lam, stat = _signed_ls(A, grad, signs)
    else:
        stat = float(np.abs(grad).max())
    ok = stat <= max(tol, 1e-6) and eq_res <= tol and in_res <= tol
    return {
        "stationarity": stat,
        "equality_violation": eq_res,
        "inequality_violation": float(in_res),
        "ok": bool(ok),
    }


def _signed_ls(A: np.ndarray, g: np.ndarray, signs: list) -> tuple[np.ndarray, float]:
    """Least-squares fit g = A lam with lam >= 0 where signs[i] < 0.

    Small active sets: solve unconstrained LS, clip negatives to zero and
    refit on the survivors (one pass of NNLS-style pruning, adequate for a
    certificate at tolerance 1e-6).
    """
    m = A.shape[1]
    lam, *_ = np.linalg.lstsq(A, g, rcond=None)
    for _ in range(m + 1):
        bad = [i for i in range(m) if signs[i] < 0 and lam[i] < -1e-9]
        if not bad:
            break
        keep = [i for i in range(m) if i not in bad]
        lam = np.zeros(m)
        if keep:
            sub, *_ = np.linalg.lstsq(A[:, keep], g, rcond=None)
            lam[keep] = sub
    lam = np.where((np.array(signs) < 0) & (lam < 0), 0.0, lam)
    return lam, float(np.abs(A @ lam - g).max())
