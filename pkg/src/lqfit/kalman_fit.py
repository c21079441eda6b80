"""Policy fitting under a Kalman (LQR-optimality) constraint.

Solves

    minimize   L(K) + r(K)
    subject to Q + A^T P (A + B K) - P = 0
               R K + B^T P (A + B K)   = 0
               P >= 0,  Q >= 0,  R >= I

with variables (K, P, Q, R).  The constraints are bi-affine, so the
problem is attacked with the alternating direction method of multipliers
on the augmented Lagrangian: a K step (regularized policy fit), a
(P, Q, R) step (cone-constrained least squares), and a dual update on the
stacked constraint residual.  This is a heuristic: it need not converge,
and non-convergence is reported, not raised.  Runs start from a zero
initialization plus a configurable number of random initializations, and
the gain with the lowest fitted objective wins.

Besides the raw final iterate K, each report carries ``K_certified``: the
gain re-synthesized by solving the Riccati equation with the recovered
(Q, R), which satisfies the optimality constraints exactly and inherits
LQR stability margins whenever the re-solve succeeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic_ls, fitting, riccati
from .conic_ls import LossSpec, RegularizerSpec
from .linsys import DemoSet, LinearDynamics


@dataclass(frozen=True)
class AdmmConfig:
    """Parameters of the alternating-direction fitting loop.

    ``rho`` is the penalty weight, ``n_iter`` the iteration cap, ``eps``
    the Frobenius threshold on successive gains for early termination,
    ``n_random_inits`` the number of random restarts on top of the zero
    start, and ``seed`` the master seed for those restarts.  ``pqr_iters``
    bounds the inner cone-least-squares solver per iteration.
    """

    rho: float = 1.0
    n_iter: int = 200
    eps: float = 1e-6
    n_random_inits: int = 5
    seed: int = 0
    pqr_iters: int = 40
    pqr_tol: float = 1e-11

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.n_random_inits < 0:
            raise ValueError("n_random_inits must be nonnegative")


@dataclass(frozen=True, eq=False)
class AdmmState:
    """One iterate of the alternating-direction loop (dual blocks Y1, Y2)."""

    K: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    iter: int = 0
    pqr_dual: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class KalmanFitReport:
    """Result of the constrained fit.

    ``K`` is the final iterate of the winning run (the algorithm's own
    output); ``K_certified`` re-solves the LQR problem for the recovered
    (Q, R) and is None only if that re-solve failed.  ``certificate``
    holds the final (P, Q, R) with the constraint residual at ``K``.
    """

    K: np.ndarray
    K_certified: np.ndarray | None
    certificate: riccati.KalmanCertificate
    objective: float
    converged: bool
    iterations: int
    init_index: int

    def to_dict(self) -> dict:
        return {
            "K": self.K.tolist(),
            "K_certified": None if self.K_certified is None
            else self.K_certified.tolist(),
            "P": self.certificate.P.tolist(),
            "Q": self.certificate.Q.tolist(),
            "R": self.certificate.R.tolist(),
            "residual": self.certificate.residual,
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "init_index": self.init_index,
        }


def zero_state(dyn: LinearDynamics) -> AdmmState:
    """The zero initialization: K = 0, P = Q = 0, R = I, Y = 0."""
    n, m = dyn.n, dyn.m
    return AdmmState(K=np.zeros((m, n)), P=np.zeros((n, n)),
                     Q=np.zeros((n, n)), R=np.eye(m),
                     Y1=np.zeros((n, n)), Y2=np.zeros((m, n)))


def random_state(dyn: LinearDynamics, rng: np.random.Generator) -> AdmmState:
    """A random restart: K standard normal, P = Q = I, R = I, Y = 0."""
    n, m = dyn.n, dyn.m
    return AdmmState(K=rng.standard_normal((m, n)), P=np.eye(n),
                     Q=np.eye(n), R=np.eye(m),
                     Y1=np.zeros((n, n)), Y2=np.zeros((m, n)))


def admm_iterate(state: AdmmState, demos: DemoSet, loss: LossSpec,
                 reg: RegularizerSpec, dyn: LinearDynamics, rho: float,
                 pqr_iters: int = 60, pqr_tol: float = 1e-11) -> AdmmState:
    """One sweep: K step, (P, Q, R) step, then dual update Y <- Y + rho M.

    The constraint matrix M in the dual update is evaluated at the freshly
    updated iterates.  Subsolver failures are re-raised with the iteration
    number attached.
    """
    try:
        K = conic_ls.solve_k_step(demos, loss, reg, rho, state.P, state.Q,
                                  state.R, state.Y1, state.Y2, dyn)
        step = conic_ls.solve_pqr_step(dyn, K, state.Y1, state.Y2, rho,
                                       tol=pqr_tol, max_iter=pqr_iters,
                                       init=(state.P, state.Q, state.R),
                                       dual0=state.pqr_dual, refine=False)
    except (conic_ls.SingularFitError, np.linalg.LinAlgError) as e:
        raise RuntimeError(
            f"subsolver failed at iteration {state.iter + 1}: {e}") from e
    M1, M2 = riccati.kalman_residual_matrices(dyn, K, step.P, step.Q, step.R)
    return AdmmState(K=K, P=step.P, Q=step.Q, R=step.R,
                     Y1=state.Y1 + rho * M1, Y2=state.Y2 + rho * M2,
                     iter=state.iter + 1, pqr_dual=step.dual)


def _run(state: AdmmState, demos, loss, reg, dyn, config):
    """Iterate to the cap or until ||K_{k+1} - K_k||_F < eps."""
    converged = False
    for _ in range(config.n_iter):
        new = admm_iterate(state, demos, loss, reg, dyn, config.rho,
                           pqr_iters=config.pqr_iters, pqr_tol=config.pqr_tol)
        if not (np.all(np.isfinite(new.K)) and np.all(np.isfinite(new.P))
                and np.all(np.isfinite(new.Q)) and np.all(np.isfinite(new.R))):
            raise FloatingPointError(
                f"non-finite iterate at iteration {new.iter}")
        delta = np.linalg.norm(new.K - state.K, "fro")
        state = new
        if delta < config.eps:
            converged = True
            break
    return state, converged


def fit_kalman(demos: DemoSet, loss: LossSpec, reg: RegularizerSpec,
               dyn: LinearDynamics, config: AdmmConfig = AdmmConfig()
               ) -> KalmanFitReport:
    """Multi-start constrained policy fit; the lowest-objective run wins.

    Restart k > 0 draws its initialization from a stream derived from
    (config.seed, k), so reports are bit-reproducible for a fixed config.
    Ties in the objective break toward the lowest init index.  Raises
    RuntimeError only if every run produced non-finite iterates.
    """
    results = []
    failures = []
    for idx in range(1 + config.n_random_inits):
        if idx == 0:
            start = zero_state(dyn)
        else:
            rng = np.random.default_rng(np.random.SeedSequence((config.seed, idx)))
            start = random_state(dyn, rng)
        try:
            final, converged = _run(start, demos, loss, reg, dyn, config)
        except FloatingPointError as e:
            failures.append(f"init {idx}: {e}")
            continue
        objective = fitting.fit_objective(demos, final.K, loss, reg)
        results.append((objective, idx, final, converged))
    if not results:
        raise RuntimeError("all runs diverged: " + "; ".join(failures))
    objective, idx, final, converged = min(results, key=lambda r: (r[0], r[1]))
    P = conic_ls.project_psd(final.P, 0.0)
    Q = conic_ls.project_psd(final.Q, 0.0)
    R = conic_ls.project_psd(final.R, 1.0)
    residual = float(np.sqrt(conic_ls.pqr_objective(dyn, final.K, P, Q, R)))
    certificate = riccati.KalmanCertificate(P=P, Q=Q, R=R, residual=residual)
    try:
        K_certified = riccati.solve_lqr(dyn, (certificate.Q, certificate.R)).K
    except (riccati.ConvergenceError, np.linalg.LinAlgError):
        K_certified = None
    return KalmanFitReport(K=final.K, K_certified=K_certified,
                           certificate=certificate, objective=objective,
                           converged=converged, iterations=final.iter,
                           init_index=idx)
