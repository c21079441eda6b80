"""Plain linear policy fitting: minimize L(K) + r(K) over gains K."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic_ls
from .conic_ls import LossSpec, RegularizerSpec, SingularFitError
from .linsys import DemoSet


@dataclass(frozen=True, eq=False)
class FitReport:
    """Fitted gain with its achieved objective L(K) + r(K)."""

    K: np.ndarray
    objective: float
    loss: LossSpec
    reg: RegularizerSpec


def fit_objective(demos: DemoSet, K: np.ndarray, loss: LossSpec,
                  reg: RegularizerSpec) -> float:
    """L(K) + r(K) for the given demonstrations."""
    K = np.asarray(K, dtype=float)
    E = demos.states @ K.T - demos.inputs
    if loss.kind == "quadratic":
        L = float(np.sum(E * E))
    else:
        L = float(np.sum(conic_ls.huber_value(E, loss.huber_m)))
    return L + reg.weight * float(np.sum(K * K))


def policy_fit(demos: DemoSet,
               loss: LossSpec = LossSpec("quadratic"),
               reg: RegularizerSpec = RegularizerSpec("ridge", 0.01)) -> FitReport:
    """Fit a linear policy to demonstrations by convex minimization.

    Quadratic loss with ridge is an exact linear solve; Huber loss runs
    IRLS around it.  With no regularization and rank-deficient noiseless
    data the quadratic fit falls back to the minimum-norm least-squares
    solution; for Huber loss that case raises SingularFitError.
    """
    n = demos.states.shape[1]
    m = demos.inputs.shape[1]
    trivial_dyn = _fitting_dims(n, m)
    zeros_n = np.zeros((n, n))
    try:
        K = conic_ls.solve_k_step(demos, loss, reg, rho=0.0,
                                  P=zeros_n, Q=zeros_n, R=np.eye(m),
                                  Y1=zeros_n, Y2=np.zeros((m, n)),
                                  dyn=trivial_dyn)
    except SingularFitError:
        if loss.kind != "quadratic":
            raise
        order = np.lexsort(np.hstack([demos.states, demos.inputs]).T[::-1])
        K = np.linalg.lstsq(demos.states[order], demos.inputs[order],
                            rcond=None)[0].T
    return FitReport(K=K, objective=fit_objective(demos, K, loss, reg),
                     loss=loss, reg=reg)


def _fitting_dims(n: int, m: int):
    """A zero system of the right shape; rho = 0 ignores its matrices."""
    from .linsys import LinearDynamics

    return LinearDynamics(A=np.zeros((n, n)), B=np.zeros((n, m)),
                          W=np.zeros((n, n)))
