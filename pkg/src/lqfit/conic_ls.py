"""Convex subsolvers shared by policy fitting and the constrained fitter.

Contains the PSD-cone projection, the Huber penalty, the ridge/Huber
least-squares step in the gain K, and a cone-constrained least-squares
solver in the triple (P, Q, R).  The (P, Q, R) problem is

    minimize ||Q + A^T P F - P + Y1/rho||_F^2 + ||R K + B^T P F + Y2/rho||_F^2
    subject to P >= 0,  Q >= 0,  R >= I,          (F = A + B K)

a linear least squares over a product of semidefinite cones.  It is solved
by operator splitting (ADMM on the variable/copy pair) in an orthonormal
svec parameterization, with penalty self-rescaling and an exact
"polish" solve on the active face of the cones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linsys import (STABILITY_MARGIN, DemoSet, LinearDynamics, _sym,
                     solve_lyapunov_stein, spectral_radius)

_SQRT2 = math.sqrt(2.0)


class SingularFitError(RuntimeError):
    """Normal equations are singular (lambda = 0, rho = 0, rank-deficient data)."""


@dataclass(frozen=True)
class LossSpec:
    """Demonstration loss: squared Euclidean or entrywise Huber.

    For ``kind="quadratic"`` the per-pair loss is ||K x - u||_2^2; for
    ``kind="huber"`` it is the sum of the Huber penalty (threshold
    ``huber_m``) over the entries of K x - u.
    """

    kind: str = "quadratic"
    huber_m: float | None = None

    def __post_init__(self):
        if self.kind not in ("quadratic", "huber"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber":
            if self.huber_m is None or self.huber_m <= 0:
                raise ValueError("huber loss requires huber_m > 0")


@dataclass(frozen=True)
class RegularizerSpec:
    """Ridge regularizer r(K) = weight * ||K||_F^2."""

    kind: str = "ridge"
    weight: float = 0.01

    def __post_init__(self):
        if self.kind != "ridge":
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.weight < 0:
            raise ValueError("ridge weight must be nonnegative")


def project_psd(S: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Frobenius-nearest symmetric matrix with all eigenvalues >= floor.

    The input is symmetrized first; floor=0 is the PSD projection, floor=1
    projects onto {R : R >= I}.
    """
    w, V = np.linalg.eigh(_sym(np.asarray(S, dtype=float)))
    return _sym(V @ (np.maximum(w, floor)[:, None] * V.T))


def huber_value(a: float, M: float):
    """Huber penalty: a^2/2 for |a| <= M, else M|a| - M^2/2."""
    if M <= 0:
        raise ValueError("huber parameter M must be positive")
    a = np.abs(np.asarray(a, dtype=float))
    out = np.where(a <= M, 0.5 * a * a, M * a - 0.5 * M * M)
    return float(out) if out.ndim == 0 else out


def _huber_weights(E: np.ndarray, M: float) -> np.ndarray:
    """Majorize-minimize weights: phi(e) <= (w/2) e^2 + const, w = min(1, M/|e|)."""
    a = np.abs(E)
    with np.errstate(divide="ignore"):
        return np.where(a <= M, 1.0, M / np.maximum(a, 1e-300))


def _penalty_terms(rho, dyn, P, Q, R, Y1, Y2):
    """Hessian/rhs contribution of (rho/2)||[G K - H1; S K - H2]||_F^2."""
    A, B = dyn.A, dyn.B
    G = A.T @ P @ B
    S = R + B.T @ P @ B
    H1 = P - Q - A.T @ P @ A - Y1 / rho
    H2 = -B.T @ P @ A - Y2 / rho
    return rho * (G.T @ G + S.T @ S), rho * (G.T @ H1 + S.T @ H2)


def _weighted_normal_solve(X, U, coeff, lam, pen_H, pen_rhs, n, m):
    """Solve for K in the stacked normal equations, row-major vec(K).

    Data term sum_{i,j} coeff[i,j] (K_j x_i - u_ij)^2, ridge lam||K||^2 and
    the coupled penalty (pen_H acting on rows of K).
    """
    H = np.kron(pen_H, np.eye(n)) + 2.0 * lam * np.eye(m * n)
    D = 2.0 * np.einsum("ij,ik,il->jkl", coeff, X, X)
    for j in range(m):
        H[j * n:(j + 1) * n, j * n:(j + 1) * n] += D[j]
    rhs = (2.0 * (coeff * U).T @ X + pen_rhs).ravel()
    try:
        return np.linalg.solve(H, rhs).reshape(m, n)
    except np.linalg.LinAlgError as e:
        raise SingularFitError("normal equations are singular") from e


def solve_k_step(demos: DemoSet, loss: LossSpec, reg: RegularizerSpec,
                 rho: float, P, Q, R, Y1, Y2,
                 dyn: LinearDynamics) -> np.ndarray:
    """Minimize L(K) + r(K) + (rho/2)||[A'PB K - (P-Q-A'PA-Y1/rho);
    (R+B'PB) K - (-B'PA-Y2/rho)]||_F^2 over K.

    Exact linear solve for the quadratic loss; IRLS around the same solve
    for the Huber loss.  rho = 0 drops the penalty entirely (plain policy
    fitting).  Raises SingularFitError when lam = 0, rho = 0 and the
    demonstration states are rank deficient.
    """
    X, U = demos.states, demos.inputs
    # canonical demo order: makes the fit bit-identical under permutation
    order = np.lexsort(np.hstack([X, U]).T[::-1])
    X, U = X[order], U[order]
    n, m = dyn.n, dyn.m
    lam = reg.weight
    if rho > 0:
        pen_H, pen_rhs = _penalty_terms(rho, dyn, P, Q, R, Y1, Y2)
    else:
        pen_H, pen_rhs = np.zeros((m, m)), np.zeros((m, n))
    if lam == 0.0 and rho == 0.0 and np.linalg.matrix_rank(X) < n:
        raise SingularFitError(
            "rank-deficient demonstrations with no regularization")
    ones = np.ones_like(U)
    K = _weighted_normal_solve(X, U, ones, lam, pen_H, pen_rhs, n, m)
    if loss.kind == "quadratic":
        return K
    for _ in range(100):
        E = X @ K.T - U
        coeff = 0.5 * _huber_weights(E, loss.huber_m)
        K_new = _weighted_normal_solve(X, U, coeff, lam, pen_H, pen_rhs, n, m)
        if np.linalg.norm(K_new - K, "fro") < 1e-9:
            return K_new
        K = K_new
    return K


def pqr_objective(dyn: LinearDynamics, K, P, Q, R, Y1=None, Y2=None,
                  rho: float = 1.0) -> float:
    """Objective of the (P, Q, R) subproblem at the given point."""
    A, B = dyn.A, dyn.B
    K = np.asarray(K, dtype=float)
    F = A + B @ K
    M1 = Q + A.T @ P @ F - P
    M2 = R @ K + B.T @ P @ F
    if Y1 is not None:
        M1 = M1 + Y1 / rho
    if Y2 is not None:
        M2 = M2 + Y2 / rho
    return float(np.sum(M1 * M1) + np.sum(M2 * M2))


@dataclass(frozen=True, eq=False)
class PqrStepResult:
    """Cone-feasible (P, Q, R) with solver diagnostics.

    ``objective`` is the subproblem value at (P, Q, R); when ``converged``
    is False the primal/dual residuals estimate the remaining
    suboptimality.  ``dual`` is opaque warm-start state for the next call.
    """

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    objective: float
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    dual: np.ndarray


class _SvecOps:
    """Orthonormal svec <-> symmetric matrix maps for a fixed size."""

    def __init__(self, n: int):
        iu = np.triu_indices(n)
        self.n = n
        self.iu = iu
        self.scale = np.where(iu[0] == iu[1], 1.0, _SQRT2)
        self.dim = len(self.scale)

    def svec(self, M):
        return M[self.iu] * self.scale

    def smat(self, t):
        M = np.zeros((self.n, self.n))
        vals = t / self.scale
        M[self.iu] = vals
        M.T[self.iu] = vals
        return M

    def basis(self):
        E = np.zeros((self.dim, self.n, self.n))
        k = np.arange(self.dim)
        E[k, self.iu[0], self.iu[1]] = 1.0 / self.scale
        E[k, self.iu[1], self.iu[0]] = 1.0 / self.scale
        return E


class _SplitSolver:
    """Operator-splitting solver for the (P, Q, R) cone least squares."""

    def __init__(self, A, B, K):
        n, m = A.shape[0], B.shape[1]
        self.A, self.B, self.K = A, B, K
        self.F = A + B @ K
        self.sn, self.sm = _SvecOps(n), _SvecOps(m)
        dn, dm = self.sn.dim, self.sm.dim
        self.n, self.m, self.dn, self.dm = n, m, dn, dm
        En, Em = self.sn.basis(), self.sm.basis()
        colP1 = (np.einsum("ab,kbc,cd->kad", A.T, En, self.F) - En).reshape(dn, n * n)
        colP2 = np.einsum("ab,kbc,cd->kad", B.T, En, self.F).reshape(dn, m * n)
        colR = np.einsum("kab,bc->kac", Em, K).reshape(dm, m * n)
        p = 2 * dn + dm
        Mat = np.zeros((n * n + m * n, p))
        Mat[:n * n, :dn] = colP1.T
        Mat[n * n:, :dn] = colP2.T
        Mat[:n * n, dn:2 * dn] = En.reshape(dn, n * n).T
        Mat[n * n:, 2 * dn:] = colR.T
        self.Mat = Mat
        self.p = p
        self.G = 2.0 * (Mat.T @ Mat)

    def objective(self, P, Q, R, T1, T2):
        A, B, F, K = self.A, self.B, self.F, self.K
        M1 = Q + A.T @ P @ F - P + T1
        M2 = R @ K + B.T @ P @ F + T2
        return float(np.sum(M1 * M1) + np.sum(M2 * M2))

    def refine(self, T1, T2, P, Q, R, iters):
        """Accelerated projected-gradient polish (FISTA with restart)."""
        A, B, K, F = self.A, self.B, self.K, self.F
        L = float(np.linalg.eigvalsh(self.G).max())
        if L <= 0.0:
            return self.objective(P, Q, R, T1, T2), P, Q, R
        t = 1.0 / (1.05 * L)
        Yp, Yq, Yr = P, Q, R
        tk = 1.0
        f_prev = math.inf
        best = (self.objective(P, Q, R, T1, T2), P, Q, R)
        for _ in range(iters):
            M1 = Yq + A.T @ Yp @ F - Yp + T1
            M2 = Yr @ K + B.T @ Yp @ F + T2
            gP = 2.0 * _sym(A @ M1 @ F.T - M1 + B @ M2 @ F.T)
            gQ = 2.0 * _sym(M1)
            gR = 2.0 * _sym(M2 @ K.T)
            Pn = project_psd(Yp - t * gP, 0.0)
            Qn = project_psd(Yq - t * gQ, 0.0)
            Rn = project_psd(Yr - t * gR, 1.0)
            f = self.objective(Pn, Qn, Rn, T1, T2)
            if f < best[0]:
                best = (f, Pn, Qn, Rn)
            if f > f_prev:
                Yp, Yq, Yr, tk = Pn, Qn, Rn, 1.0
            else:
                tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
                beta = (tk - 1.0) / tn
                Yp = Pn + beta * (Pn - P)
                Yq = Qn + beta * (Qn - Q)
                Yr = Rn + beta * (Rn - R)
                tk = tn
            P, Q, R, f_prev = Pn, Qn, Rn, f
        return best

    def run(self, T1, T2, P0, Q0, R0, u0=None, max_iter=4000, eps=1e-11,
            polish=True, refine=True, target=0.0):
        sn, sm, dn = self.sn, self.sm, self.dn
        stop_at = max(target, 1e-24)
        c = np.concatenate([T1.ravel(), T2.ravel()])
        q = 2.0 * (self.Mat.T @ c)
        sigma = max(np.trace(self.G) / self.p, 1e-12)
        z = np.concatenate([sn.svec(P0), sn.svec(Q0), sm.svec(R0)])
        u = np.zeros(self.p) if u0 is None else np.array(u0, dtype=float)
        alpha = 1.6
        P, Q, R = P0, Q0, R0
        best = (self.objective(P0, Q0, R0, T1, T2), P0, Q0, R0)
        if best[0] <= stop_at:
            return best, 0, True, 0.0, 0.0, u
        Minv = np.linalg.inv(self.G + sigma * np.eye(self.p))
        rp = rd = math.inf
        it_done = 0
        converged = False
        for it in range(max_iter):
            it_done = it + 1
            x = Minv @ (sigma * (z - u) - q)
            xr = alpha * x + (1.0 - alpha) * z
            v = xr + u
            PQ = np.stack([sn.smat(v[:dn]), sn.smat(v[dn:2 * dn])])
            w, V = np.linalg.eigh(PQ)
            w = np.maximum(w, 0.0)
            PQ = V @ (w[..., None] * np.swapaxes(V, -1, -2))
            PQ = 0.5 * (PQ + np.swapaxes(PQ, -1, -2))
            wr, Vr = np.linalg.eigh(sm.smat(v[2 * dn:]))
            R = _sym(Vr @ (np.maximum(wr, 1.0)[:, None] * Vr.T))
            P, Q = PQ[0], PQ[1]
            znew = np.concatenate([sn.svec(P), sn.svec(Q), sm.svec(R)])
            u += xr - znew
            nz = np.linalg.norm(znew)
            rp = np.linalg.norm(x - znew)
            rd = sigma * np.linalg.norm(znew - z)
            z = znew
            if rp <= eps * (1.0 + nz) and rd <= eps * (1.0 + nz):
                converged = True
                break
            # penalty self-rescaling when primal/dual residuals drift apart
            if (it + 1) % 50 == 0 and rp > 0 and rd > 0:
                ratio = math.sqrt(rp / rd)
                if ratio > 5.0 or ratio < 0.2:
                    sigma *= ratio
                    u /= ratio
                    Minv = np.linalg.inv(self.G + sigma * np.eye(self.p))
            if polish and (it + 1) % 200 == 0:
                f_cur = self.objective(P, Q, R, T1, T2)
                if f_cur < best[0]:
                    best = (f_cur, P, Q, R)
                pol = self._polish(T1, T2, *best[1:])
                if pol is not None and pol[0] < best[0]:
                    best = pol
                if best[0] <= stop_at:
                    break
        f_cur = self.objective(P, Q, R, T1, T2)
        if f_cur < best[0]:
            best = (f_cur, P, Q, R)
        if polish:
            pol = self._polish(T1, T2, *best[1:])
            if pol is not None and pol[0] < best[0]:
                best = pol
        if refine and not converged and best[0] > stop_at:
            ref = self.refine(T1, T2, *best[1:], iters=max_iter)
            if ref[0] < best[0]:
                best = ref
            if polish:
                pol = self._polish(T1, T2, *best[1:])
                if pol is not None and pol[0] < best[0]:
                    best = pol
        return best, it_done, converged, rp, rd, u

    def _face_basis(self, V):
        r = V.shape[1]
        out = []
        for i in range(r):
            out.append(np.outer(V[:, i], V[:, i]))
            for j in range(i + 1, r):
                out.append((np.outer(V[:, i], V[:, j])
                            + np.outer(V[:, j], V[:, i])) / _SQRT2)
        return out

    def _polish(self, T1, T2, P, Q, R, thresholds=(1e-5, 1e-9)):
        """Exact least squares on the active face of the cones.

        The face is read off the eigenstructure of the current iterate;
        the nearest correction within the face is applied and accepted only
        if cone-feasible.  Returns (objective, P, Q, R) or None.
        """
        n, m = self.n, self.m
        A, B, K, F = self.A, self.B, self.K, self.F
        wp, Vp = np.linalg.eigh(_sym(P))
        wq, Vq = np.linalg.eigh(_sym(Q))
        wr, Vr = np.linalg.eigh(_sym(R))
        for act_tol in thresholds:
            VP = Vp[:, wp > act_tol * (1.0 + wp.max(initial=0.0))]
            VQ = Vq[:, wq > act_tol * (1.0 + wq.max(initial=0.0))]
            VR = Vr[:, (wr - 1.0) > act_tol * (1.0 + wr.max(initial=0.0))]
            basP, basQ, basR = (self._face_basis(V) for V in (VP, VQ, VR))
            cols = []
            for E in basP:
                cols.append(np.concatenate([(A.T @ E @ F - E).ravel(),
                                            (B.T @ E @ F).ravel()]))
            for E in basQ:
                cols.append(np.concatenate([E.ravel(), np.zeros(m * n)]))
            for E in basR:
                cols.append(np.concatenate([np.zeros(n * n), (E @ K).ravel()]))
            theta0 = ([float(np.sum(E * P)) for E in basP]
                      + [float(np.sum(E * Q)) for E in basQ]
                      + [float(np.sum(E * (R - np.eye(m)))) for E in basR])
            c = np.concatenate([T1.ravel(), (K + T2).ravel()])
            if not cols:
                Pn = np.zeros((n, n))
                Qn = np.zeros((n, n))
                Rn = np.eye(m)
            else:
                Mt = np.stack(cols, axis=1)
                r0 = Mt @ np.array(theta0) + c
                dth, *_ = np.linalg.lstsq(Mt, -r0, rcond=None)
                theta = np.array(theta0) + dth
                off = 0
                Pn = np.zeros((n, n))
                for E in basP:
                    Pn += theta[off] * E
                    off += 1
                Qn = np.zeros((n, n))
                for E in basQ:
                    Qn += theta[off] * E
                    off += 1
                Rn = np.eye(m)
                for E in basR:
                    Rn += theta[off] * E
                    off += 1
            ok = True
            out = []
            for Mmat, floor in ((Pn, 0.0), (Qn, 0.0), (Rn, 1.0)):
                w, V = np.linalg.eigh(_sym(Mmat))
                if w.min() < floor - 1e-9 * (1.0 + np.abs(w).max()):
                    ok = False
                    break
                out.append(_sym(V @ (np.maximum(w, floor)[:, None] * V.T)))
            if ok:
                Pn, Qn, Rn = out
                return self.objective(Pn, Qn, Rn, T1, T2), Pn, Qn, Rn
        return None


def _value_form_init(dyn: LinearDynamics, K: np.ndarray):
    """Candidate start from the Lyapunov value identity under (Q, R) = (I, I).

    If K is LQR-optimal for (I, I) this is an exact zero-residual
    certificate; otherwise it is a cone-feasible point at the right scale.
    Only available when the closed loop is stable.
    """
    F = dyn.closed_loop(K)
    if spectral_radius(F) >= STABILITY_MARGIN:
        return None
    K = np.asarray(K, dtype=float)
    P0 = solve_lyapunov_stein(F, np.eye(dyn.n) + K.T @ K)
    Q0 = project_psd(P0 - dyn.A.T @ P0 @ F)
    C = -dyn.B.T @ P0 @ F
    # nearest symmetric R >= I with R K ~= C, via one least squares + clamp
    sm = _SvecOps(dyn.m)
    cols = np.stack([(E @ K).ravel() for E in sm.basis()], axis=1)
    theta, *_ = np.linalg.lstsq(cols, C.ravel(), rcond=None)
    R0 = project_psd(sm.smat(theta), 1.0)
    return P0, Q0, R0


def solve_pqr_step(dyn: LinearDynamics, K, Y1, Y2, rho: float,
                   tol: float = 1e-11, max_iter: int = 4000,
                   init=None, dual0=None, polish: bool = True,
                   refine: bool = True, target: float = 0.0) -> PqrStepResult:
    """Cone-constrained least squares in (P, Q, R) for a fixed gain K.

    ``init`` is an optional (P0, Q0, R0) warm start and ``dual0`` the
    ``dual`` field of a previous result; both default to the cold start
    (0, 0, I).  With no warm start the solver additionally tries a
    Lyapunov-based start, which lands exactly on the certificate whenever K
    is optimal for unit cost weights.  An objective value at or below
    ``target`` counts as solved and stops early (feasibility checks pass
    their tolerance here).  Hitting ``max_iter`` is not an error: the best
    iterate is returned with ``converged=False`` and the residuals as a
    suboptimality estimate.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    K = np.asarray(K, dtype=float)
    n, m = dyn.n, dyn.m
    if K.shape != (m, n):
        raise ValueError(f"gain must be {m}x{n}, got shape {K.shape}")
    T1 = np.asarray(Y1, dtype=float) / rho
    T2 = np.asarray(Y2, dtype=float) / rho
    engine = _SplitSolver(dyn.A, dyn.B, K)
    starts = []
    if init is not None:
        P0, Q0, R0 = (np.asarray(Mmat, dtype=float) for Mmat in init)
        starts.append((P0, Q0, R0))
    else:
        # the Lyapunov start is exact for gains optimal under unit weights,
        # so try it first and skip the cold solve when it lands at zero
        extra = _value_form_init(dyn, K)
        if extra is not None:
            starts.append(extra)
        starts.append((np.zeros((n, n)), np.zeros((n, n)), np.eye(m)))
    best = None
    for P0, Q0, R0 in starts:
        out, iters, conv, rp, rd, u = engine.run(
            T1, T2, P0, Q0, R0, u0=dual0, max_iter=max_iter, eps=tol,
            polish=polish, refine=refine, target=target)
        cand = PqrStepResult(P=out[1], Q=out[2], R=out[3], objective=out[0],
                             iterations=iters, converged=conv,
                             primal_residual=rp, dual_residual=rd, dual=u)
        if best is None or cand.objective < best.objective:
            best = cand
        if best.objective <= max(target, 1e-24):
            break
    return best
