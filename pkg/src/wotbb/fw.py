"""Away-step Frank-Wolfe over a transportation polytope.

Both barycentric weak transport and the alpha/beta functional minimize

    F(P) = alpha * sum_x mu(x) |b_x(P) - x|^2 - beta * sum_{w,y} P(w, y) <z_w, y>

over couplings P of a source measure (atoms w) and nu (atoms y), where each
source atom w belongs to a group x = group[w] and b_x(P) is the conditional
mean of y over the rows of group x. For WOT the source is mu itself
(beta = 0); for T^{alpha,beta} the source is mu (x) gamma_hat with z_w the
Gaussian coordinate. The gradient is <s_w, y> with
s_w = 2 alpha (b_x - x) - beta z_w, so in d=1 the linear minimization oracle
is the anti-comonotone coupling of s with y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import NonConvergenceError
from .ot import _northwest, transport_lp

DEFAULT_MAX_ITER = 100_000
_RECOMPUTE_EVERY = 200


@dataclass
class FWProblem:
    source_weights: np.ndarray  # (N,)
    group: np.ndarray  # (N,) index into x atoms
    x_points: np.ndarray  # (n, d)
    x_weights: np.ndarray  # (n,)
    y_points: np.ndarray  # (m, d)
    y_weights: np.ndarray  # (m,)
    alpha: float = 1.0
    beta: float = 0.0
    z_points: Optional[np.ndarray] = None  # (N, d); required when beta != 0

    def __post_init__(self):
        n_src = len(self.source_weights)
        self._agg = sparse.csr_matrix(
            (np.ones(n_src), (self.group, np.arange(n_src))), shape=(len(self.x_weights), n_src)
        )
        if self.z_points is None:
            self.z_points = np.zeros((n_src, self.y_points.shape[1]))
        # <z_w, y> for the linear part
        self._zy = self.z_points @ self.y_points.T

    def barycenters(self, P: np.ndarray) -> np.ndarray:
        return (self._agg @ P) @ self.y_points / self.x_weights[:, None]

    def objective(self, P: np.ndarray) -> float:
        b = self.barycenters(P)
        quad = self.x_weights @ np.sum((b - self.x_points) ** 2, axis=1)
        return float(self.alpha * quad - self.beta * np.sum(P * self._zy))

    def slopes(self, P: np.ndarray) -> np.ndarray:
        b = self.barycenters(P)
        return 2.0 * self.alpha * (b - self.x_points)[self.group] - self.beta * self.z_points

    def gradient(self, P: np.ndarray) -> np.ndarray:
        return self.slopes(P) @ self.y_points.T

    def lmo(self, P: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.y_points.shape[1] == 1:
            s = self.slopes(P)[:, 0]
            order = np.argsort(s, kind="stable")
            # y is sorted ascending; pair the smallest slope with the largest y
            vertex = np.empty_like(P)
            vertex[order] = _northwest(self.source_weights[order], self.y_weights[::-1], flip=True)
            return vertex
        plan, _ = transport_lp(self.source_weights, self.y_weights, grad)
        return plan

    def face_minimizer(self, P: np.ndarray, support: np.ndarray):
        """Minimize F on the affine hull of the face {Q : Q = 0 off ``support``}.

        Solves the KKT system of the equality-constrained quadratic program
        (marginal constraints only, nonnegativity dropped) in the least-squares
        sense; the objective is only quadratic in the barycenters, so the
        Hessian is singular and the minimum-norm step is taken.

        Returns ``(D, u, v, bounded)``. When the face problem is bounded, D is
        the step to its minimizer and grad = u_w + v_y on the face at P + D.
        Otherwise F decreases linearly along the zero-curvature direction D
        (the null-space part of the KKT residual) and u, v are meaningless.
        """
        rows, cols = np.nonzero(support)
        k = len(rows)
        n_src, m = P.shape
        n, d = self.x_points.shape
        g = self.group[rows]
        # G p = sum over the face of p * y, stacked per (group, coordinate)
        G = np.zeros((n * d, k))
        for c in range(d):
            G[g * d + c, np.arange(k)] = self.y_points[cols, c]
        inv_w = np.repeat(1.0 / self.x_weights, d)
        target = (self.x_weights[:, None] * self.x_points).ravel()
        H = 2.0 * self.alpha * (G.T * inv_w) @ G
        lin = 2.0 * self.alpha * (G.T * inv_w) @ target + self.beta * self._zy[rows, cols]
        A = np.zeros((n_src + m, k))
        A[rows, np.arange(k)] = 1.0
        A[n_src + cols, np.arange(k)] = 1.0
        kkt = np.block([[H, A.T], [A, np.zeros((n_src + m, n_src + m))]])
        # solve for the step from the current (feasible) point
        p0 = P[rows, cols]
        rhs = np.concatenate([lin - H @ p0, np.zeros(n_src + m)])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        resid = rhs - kkt @ sol
        bounded = np.linalg.norm(resid) <= 1e-9 * (1.0 + np.linalg.norm(rhs))
        D = np.zeros_like(P)
        D[rows, cols] = sol[:k] if bounded else resid[:k]
        lam = -sol[k:]
        return D, lam[:n_src], lam[n_src:], bool(bounded)

    def curvature(self, D: np.ndarray) -> float:
        """Second-order coefficient of F along direction D."""
        db = self.barycenters(D)
        return float(self.alpha * (self.x_weights @ np.sum(db**2, axis=1)))


@dataclass
class FWResult:
    plan: np.ndarray
    value: float
    fw_gap: float
    iterations: int
    history: list = field(default_factory=list)


def frank_wolfe(problem: FWProblem, tol: float, max_iter: int = DEFAULT_MAX_ITER,
                init: Optional[np.ndarray] = None, record: bool = True,
                polish_every: int = 20) -> FWResult:
    """Away-step Frank-Wolfe with exact line search and periodic face polishing.

    Stops once the Frank-Wolfe gap <grad, P - s> is at most ``tol * (1 + |F|)``.
    The gap upper-bounds F(P) - min F. Every ``polish_every`` iterations the
    iterate is moved to the minimizer of F over its current support face
    (active-set style, with a ratio test keeping P >= 0); the LMO then supplies
    entering entries. ``polish_every=0`` gives plain away-step FW.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = np.outer(problem.source_weights, problem.y_weights) if init is None else init.copy()
    atoms = [P.copy()]
    lam = [1.0]
    keys = {None: 0}
    value = problem.objective(P)
    history = [value] if record else []
    gap = np.inf
    for it in range(max_iter + 1):
        grad = problem.gradient(P)
        s = problem.lmo(P, grad)
        gap = float(np.sum(grad * (P - s)))
        if gap <= tol * (1.0 + abs(value)):
            return FWResult(P, value, max(gap, 0.0), it, history)
        if it == max_iter:
            break
        scores = [float(np.sum(grad * a)) for a in atoms]
        k = int(np.argmax(scores))
        away_gap = scores[k] - float(np.sum(grad * P))
        toward = gap >= away_gap or lam[k] >= 1.0
        if toward:
            D, t_max, slope = s - P, 1.0, -gap
        else:
            D, t_max, slope = P - atoms[k], lam[k] / (1.0 - lam[k]), -away_gap
        curv = problem.curvature(D)
        t = t_max if curv <= 0 else min(t_max, -slope / (2.0 * curv))
        if t <= 0:
            break
        if toward:
            key = s.round(14).tobytes()
            if t >= 1.0:
                atoms, lam, keys = [s], [1.0], {key: 0}
            else:
                lam = [(1.0 - t) * l for l in lam]
                j = keys.get(key)
                if j is None:
                    keys[key] = len(atoms)
                    atoms.append(s)
                    lam.append(t)
                else:
                    lam[j] += t
        else:
            lam = [(1.0 + t) * l for l in lam]
            lam[k] -= t
            if t >= t_max or lam[k] <= 1e-15:
                atoms, lam, keys = _drop(atoms, lam, keys, k)
        P = P + t * D
        if polish_every and (it + 1) % polish_every == 0:
            P = _polish(problem, P)
            atoms, lam, keys = [P.copy()], [1.0], {None: 0}
        elif (it + 1) % _RECOMPUTE_EVERY == 0:
            total = sum(lam)
            lam = [l / total for l in lam]
            P = sum(l * a for l, a in zip(lam, atoms))
        value = problem.objective(P)
        if record:
            history.append(value)
    raise NonConvergenceError(
        f"Frank-Wolfe did not reach tol={tol:g} within {max_iter} iterations (gap {gap:.3e})",
        last_gap=gap, iterations=max_iter,
    )


def _polish(problem: FWProblem, P: np.ndarray, max_rounds: int = 200) -> np.ndarray:
    """Primal active-set passes on the support of P.

    Each round steps to the minimizer over the current face (ratio test keeps
    P >= 0, blocking entries leave the support). At a face optimum, entries
    are priced with the face potentials and the most negative reduced cost
    enters. Entries that block immediately after entering are set aside until
    the objective next decreases.
    """
    thresh = 1e-15 * P.max()
    support = P > thresh
    base = problem.objective(P)
    tabu = np.zeros_like(support)
    entered = None
    for _ in range(max_rounds):
        D, u, v, bounded = problem.face_minimizer(P, support)
        neg = (D < 0) & support
        t = 1.0 if bounded else np.inf
        if np.any(neg):
            ratios = np.full(P.shape, np.inf)
            ratios[neg] = P[neg] / -D[neg]
            t = min(t, float(ratios.min()))
        if not np.isfinite(t):
            break
        Q = P + t * D
        if t < 1.0 or not bounded:
            Q[neg & (ratios <= t)] = 0.0
        Q = np.clip(Q, 0.0, None)
        Q[~support] = 0.0
        value = problem.objective(Q)
        if value > base + 1e-15 * (1.0 + abs(base)):
            break
        if value < base - 1e-15 * (1.0 + abs(base)):
            tabu[:] = False
        P, base = Q, value
        if t < 1.0 or not bounded:
            leaving = support & (P <= thresh)
            if entered is not None and leaving[entered]:
                tabu[entered] = True
            support &= ~leaving
            entered = None
            continue
        grad = problem.gradient(P)
        r = grad - u[:, None] - v[None, :]
        r[support | tabu] = np.inf
        k = np.unravel_index(int(np.argmin(r)), r.shape)
        if not r[k] < -1e-13 * (1.0 + np.abs(grad).max()):
            break
        support[k] = True
        entered = k
    return P


def _drop(atoms, lam, keys, k):
    atoms = atoms[:k] + atoms[k + 1:]
    lam = lam[:k] + lam[k + 1:]
    keys = {key: (j if j < k else j - 1) for key, j in keys.items() if j != k}
    return atoms, lam, keys
