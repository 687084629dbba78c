"""Minimum-norm point of a polyhedron ``{r : N r >= b}``.

Dual active-set method of Goldfarb and Idnani specialised to the identity
Hessian. Starting from the unconstrained minimiser ``r = 0`` it adds the most
violated constraint, dropping active constraints whose multipliers would go
negative. The iterate always satisfies ``r = N_A^T u`` with ``u >= 0``, so a
primal-feasible iterate is optimal. Infeasibility is detected when a violated
constraint is linearly dependent on the active set with no multiplier to
release.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QPResult:
    r: np.ndarray
    multipliers: np.ndarray  # one per constraint, zero for inactive ones
    feasible: bool
    iterations: int


def min_norm_point(N, b, tol: float = 1e-12, max_iter: int | None = None) -> QPResult:
    """Solve ``min ||r||^2  s.t.  N r >= b``.

    ``N`` has one constraint normal per row. When the constraints are
    contradictory the result has ``feasible=False`` and ``r`` is the last
    iterate.
    """
    N = np.atleast_2d(np.asarray(N, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    k, d = N.shape
    if b.shape[0] != k:
        raise ValueError("N and b disagree on the number of constraints")
    if max_iter is None:
        max_iter = 20 * (k + d) + 100
    scale = max(1.0, float(np.max(np.abs(b))) if k else 1.0)
    feas_tol = tol * scale
    row_norms = np.linalg.norm(N, axis=1) if k else np.zeros(0)

    r = np.zeros(d)
    active: list[int] = []
    u = np.zeros(0)
    it = 0
    while True:
        slack = N @ r - b
        if k == 0 or slack.min() >= -feas_tol:
            break
        p = int(np.argmin(slack))
        u_plus = np.append(u, 0.0)
        n_p = N[p]
        while True:
            it += 1
            if it > max_iter:
                return _result(r, active, u, k, False, it)
            q = len(active)
            if q:
                Na = N[active].T
                coef = np.linalg.lstsq(Na, n_p, rcond=None)[0]
                z = n_p - Na @ coef
            else:
                coef = np.zeros(0)
                z = n_p.copy()
            # largest dual step that keeps active multipliers nonnegative
            t1, drop = np.inf, -1
            for i in range(q):
                if coef[i] > 1e-14:
                    ratio = u_plus[i] / coef[i]
                    if ratio < t1:
                        t1, drop = ratio, i
            zz = float(z @ z)
            if zz <= (1e-11 * max(row_norms[p], 1e-300)) ** 2:
                if drop < 0:
                    return _result(r, active, u_plus[:q], k, False, it)
                u_plus[:q] -= t1 * coef
                u_plus[q] += t1
                u_plus = np.delete(u_plus, drop)
                active.pop(drop)
                continue
            t2 = -(float(n_p @ r) - b[p]) / zz
            t = min(t1, t2)
            r = r + t * z
            u_plus[:q] -= t * coef
            u_plus[q] += t
            if t2 <= t1:
                active.append(p)
                u = u_plus
                break
            u_plus = np.delete(u_plus, drop)
            active.pop(drop)
    if active:
        # polish: re-solve the active equality system to remove drift
        Aa = N[active]
        r_pol = np.linalg.lstsq(Aa, b[active], rcond=None)[0]
        if np.all(N @ r_pol - b >= -feas_tol * 10) and r_pol @ r_pol <= r @ r * (1 + 1e-9):
            r = r_pol
            u = np.linalg.lstsq(Aa.T, r, rcond=None)[0]
    return _result(r, active, u, k, True, it)


def _result(r, active, u, k, feasible, it) -> QPResult:
    lam = np.zeros(k)
    for idx, val in zip(active, u):
        lam[idx] = max(val, 0.0)
    return QPResult(r=r, multipliers=lam, feasible=feasible, iterations=it)


def kkt_residual(N, b, res: QPResult) -> float:
    """Max violation over stationarity, primal/dual feasibility and complementarity."""
    N = np.atleast_2d(np.asarray(N, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    lam = res.multipliers
    slack = N @ res.r - b
    stat = np.linalg.norm(res.r - N.T @ lam, ord=np.inf)
    primal = max(0.0, -float(slack.min())) if slack.size else 0.0
    dual = max(0.0, -float(lam.min())) if lam.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if lam.size else 0.0
    return max(stat, primal, dual, comp)
