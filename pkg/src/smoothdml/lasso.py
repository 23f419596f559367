"""Coordinate-descent Lasso in covariance form.

Both solvers minimize the same quadratic-plus-l1 objective

    -2 M'b + b'G b + 2 * sum_j w_j |b_j|

``lasso_regression`` uses G = X'X/n, M = X'y/n (so the objective equals
(1/n)||y - Xb||^2 + 2*lam*sum|b_j| up to a constant) with an unpenalized
intercept; ``riesz_lasso`` takes G and M directly and penalizes every
coordinate. The factor 2 on the penalty is deliberate: it lets
lam = sqrt(log(p+1)/n) and r = n^(-1/4) be plugged in as written.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DataError, InvalidArgumentError


@dataclass(frozen=True)
class SolverOptions:
    coef_tol: float = 1e-9
    kkt_tol: float = 1e-7
    max_iter: int = 100_000
    trace: bool = False


@dataclass(frozen=True, eq=False)
class LassoFit:
    coefficients: np.ndarray
    penalty: float
    iterations: int
    converged: bool
    max_kkt_violation: float
    objective: float
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _objective(M, rho, resid, pen):
    # resid = M - G rho, so rho'G rho = rho'M - rho'resid
    val = 0.0
    for j in range(rho.shape[0]):
        val += -M[j] * rho[j] - rho[j] * resid[j] + 2.0 * pen[j] * abs(rho[j])
    return val


@njit(cache=True)
def _kkt(rho, resid, pen):
    worst = 0.0
    for j in range(rho.shape[0]):
        g = -resid[j]
        if rho[j] > 0:
            v = abs(g + pen[j])
        elif rho[j] < 0:
            v = abs(g - pen[j])
        else:
            v = abs(g) - pen[j]
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _chol_solve(A, b):
    # returns (ok, x); ok is False when A is not numerically positive definite
    k = A.shape[0]
    L = np.zeros((k, k))
    scale = 0.0
    for i in range(k):
        if A[i, i] > scale:
            scale = A[i, i]
    for i in range(k):
        for j in range(i + 1):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            if i == j:
                if s <= 1e-13 * max(scale, 1e-300):
                    return False, np.zeros(k)
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.zeros(k)
    for i in range(k):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * y[m]
        y[i] = s / L[i, i]
    x = np.zeros(k)
    for i in range(k - 1, -1, -1):
        s = y[i]
        for m in range(i + 1, k):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]
    return True, x


@njit(cache=True)
def _polish(G, M, pen, rho):
    """Exact solution on the current active set and sign pattern, if consistent."""
    p = rho.shape[0]
    active = np.empty(p, dtype=np.int64)
    k = 0
    for j in range(p):
        if rho[j] != 0.0:
            active[k] = j
            k += 1
    cand = np.zeros(p)
    if k == 0:
        return False, cand
    A = np.empty((k, k))
    b = np.empty(k)
    for a in range(k):
        ja = active[a]
        b[a] = M[ja] - pen[ja] * np.sign(rho[ja])
        for c in range(k):
            A[a, c] = G[ja, active[c]]
    ok, x = _chol_solve(A, b)
    if not ok:
        return False, cand
    for a in range(k):
        ja = active[a]
        if pen[ja] > 0 and np.sign(x[a]) != np.sign(rho[ja]):
            return False, cand
        cand[ja] = x[a]
    return True, cand


@njit(cache=True)
def _cd_solve(G, M, pen, rho, coef_tol, kkt_tol, max_iter, trace):
    p = rho.shape[0]
    resid = M - G @ rho
    obj = _objective(M, rho, resid, pen)
    history = np.empty(max_iter + 1 if trace else 1)
    history[0] = obj
    signs_prev = np.sign(rho)
    stable = 0
    it = 0
    kkt = _kkt(rho, resid, pen)
    while it < max_iter and kkt > kkt_tol:
        it += 1
        max_change = 0.0
        for j in range(p):
            gjj = G[j, j]
            old = rho[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                new = _soft(resid[j] + gjj * old, pen[j]) / gjj
            delta = new - old
            if delta != 0.0:
                rho[j] = new
                for i in range(p):
                    resid[i] -= G[i, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        signs = np.sign(rho)
        if np.all(signs == signs_prev):
            stable += 1
        else:
            stable = 0
        signs_prev = signs
        obj = _objective(M, rho, resid, pen)
        kkt = _kkt(rho, resid, pen)
        if stable >= 2 and kkt > kkt_tol:
            ok, cand = _polish(G, M, pen, rho)
            if ok:
                cand_resid = M - G @ cand
                cand_obj = _objective(M, cand, cand_resid, pen)
                cand_kkt = _kkt(cand, cand_resid, pen)
                if cand_obj <= obj + 1e-15 * max(1.0, abs(obj)) and cand_kkt < kkt:
                    rho[:] = cand
                    resid[:] = cand_resid
                    obj = min(cand_obj, obj)
                    kkt = cand_kkt
        if trace:
            history[it] = obj
        if max_change < coef_tol:
            break
    return rho, it, kkt, obj, history[:it + 1] if trace else history


def _solve(G, M, pen, opts, start=None):
    p = len(M)
    rho0 = np.zeros(p) if start is None else np.array(start, dtype=float)
    rho, it, kkt, obj, hist = _cd_solve(
        np.ascontiguousarray(G, dtype=float), np.ascontiguousarray(M, dtype=float),
        np.ascontiguousarray(pen, dtype=float), rho0, float(opts.coef_tol), float(opts.kkt_tol),
        int(opts.max_iter), bool(opts.trace))
    return rho, int(it), float(kkt), float(obj), (hist if opts.trace else np.empty(0))


def lasso_regression(X, y, penalty: float, opts: SolverOptions = SolverOptions(),
                     unpenalized=(), start=None) -> LassoFit:
    """Lasso fit of ``y`` on ``X``; columns listed in ``unpenalized`` carry no penalty.

    The reported objective omits the constant y'y/n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite entries in lasso inputs")
    if not penalty >= 0:
        raise InvalidArgumentError(f"penalty must be nonnegative, got {penalty}")
    n = X.shape[0]
    G = X.T @ X / n
    M = X.T @ y / n
    pen = np.full(X.shape[1], float(penalty))
    pen[list(unpenalized)] = 0.0
    rho, it, kkt, obj, hist = _solve(G, M, pen, opts, start)
    return LassoFit(rho, float(penalty), it, kkt <= opts.kkt_tol, kkt, obj, hist)


def check_psd(G, tol: float = 1e-8) -> None:
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidArgumentError(f"G must be square, got shape {G.shape}")
    scale = max(1.0, float(np.abs(G).max(initial=0.0)))
    if np.abs(G - G.T).max(initial=0.0) > tol * scale:
        raise InvalidArgumentError("G is not symmetric")
    if G.size and np.linalg.eigvalsh((G + G.T) / 2).min() < -tol * scale:
        raise InvalidArgumentError("G is not positive semidefinite")


def riesz_lasso(G, M, penalty: float, opts: SolverOptions = SolverOptions(),
                start=None) -> LassoFit:
    """argmin over rho of -2 M'rho + rho'G rho + 2 r sum_j |rho_j|."""
    G = np.asarray(G, dtype=float)
    M = np.asarray(M, dtype=float)
    check_psd(G)
    if M.shape != (G.shape[0],):
        raise InvalidArgumentError(f"M has shape {M.shape}, expected ({G.shape[0]},)")
    if not (np.isfinite(G).all() and np.isfinite(M).all()):
        raise DataError("non-finite entries in Riesz moments")
    if not penalty >= 0:
        raise InvalidArgumentError(f"penalty must be nonnegative, got {penalty}")
    pen = np.full(len(M), float(penalty))
    rho, it, kkt, obj, hist = _solve(G, M, pen, opts, start)
    return LassoFit(rho, float(penalty), it, kkt <= opts.kkt_tol, kkt, obj, hist)


def quadratic_objective(G, M, rho, penalty_weights) -> float:
    rho = np.asarray(rho, dtype=float)
    return float(-2 * M @ rho + rho @ G @ rho + 2 * np.sum(np.asarray(penalty_weights) * np.abs(rho)))
