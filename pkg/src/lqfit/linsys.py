"""Linear dynamical systems: representation, simulation, demonstrations.

Everything here works with the discrete-time stochastic system

    x_{t+1} = A x_t + B u_t + w_t,    E[w_t w_t^T] = W,

closed by a linear state-feedback policy u_t = K x_t.  The module provides
the system container, the infinite-horizon average quadratic cost of a gain
(computed through a discrete Lyapunov equation), a Monte-Carlo cost
estimator used as a cross-check, and a generator of noisy "expert"
demonstrations, optionally corrupted by sign-flip outliers.

Conventions: gains are plain (m, n) numpy arrays acting as u = K x; the
closed-loop matrix is A + B K.  An unstable closed loop has infinite
average cost, represented by ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

# Closed loops with spectral radius above this are treated as unstable:
# the Lyapunov iteration is meaningless that close to marginal stability.
STABILITY_MARGIN = 1.0 - 1e-9


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {M.shape}")
    M.flags.writeable = False
    return M


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _check_symmetric(M: np.ndarray, name: str, atol_scale: float = 1e-8) -> None:
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, atol=atol_scale * (1.0 + np.abs(M).max())):
        raise ValueError(f"{name} must be symmetric")


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(_sym(M)).min())


def _psd_factor(M: np.ndarray) -> np.ndarray:
    """Factor L with L L^T = M for symmetric PSD M (tiny negatives clipped)."""
    w, V = np.linalg.eigh(_sym(M))
    return V * np.sqrt(np.maximum(w, 0.0))


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """A known linear system (A, B) with disturbance covariance W.

    Parameters
    ----------
    A : (n, n) array
        State transition matrix.
    B : (n, m) array
        Input matrix.
    W : (n, n) array
        Disturbance covariance; must be symmetric positive semidefinite
        up to roundoff.
    """

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, "B"))
        object.__setattr__(self, "W", _as_matrix(self.W, "W"))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {self.A.shape}")
        if self.B.shape[0] != n:
            raise ValueError(
                f"B must have {n} rows to match A, got shape {self.B.shape}"
            )
        _check_symmetric(self.W, "W")
        if self.W.shape != (n, n):
            raise ValueError(f"W must be {n}x{n}, got shape {self.W.shape}")
        if _min_eig(self.W) < -1e-10 * (1.0 + np.linalg.norm(self.W)):
            raise ValueError("W must be positive semidefinite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def controllability_matrix(self) -> np.ndarray:
        """[B, AB, ..., A^{n-1} B], shape (n, n*m)."""
        blocks = [self.B]
        for _ in range(self.n - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)

    def is_controllable(self, tol: float | None = None) -> bool:
        C = self.controllability_matrix()
        return np.linalg.matrix_rank(C, tol=tol) == self.n

    def closed_loop(self, K: np.ndarray) -> np.ndarray:
        K = np.asarray(K, dtype=float)
        if K.shape != (self.m, self.n):
            raise ValueError(
                f"gain must be {self.m}x{self.n}, got shape {K.shape}"
            )
        return self.A + self.B @ K

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "W": self.W.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearDynamics":
        A = np.array(d["A"], dtype=float)
        W = d.get("W")
        if W is None:
            W = np.zeros_like(A)
        return cls(A=A, B=np.array(d["B"], dtype=float), W=np.array(W, dtype=float))


@dataclass(frozen=True, eq=False)
class CostMatrices:
    """Quadratic stage-cost weights (Q, R) with the normalization R >= I.

    Scaling (Q, R) jointly does not change the optimal gain, so R is pinned
    to the closed constraint R >= I; rescale (Q, R) accordingly before
    construction.
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", _as_matrix(self.Q, "Q"))
        object.__setattr__(self, "R", _as_matrix(self.R, "R"))
        _check_symmetric(self.Q, "Q")
        _check_symmetric(self.R, "R")
        if _min_eig(self.Q) < -1e-10 * (1.0 + np.linalg.norm(self.Q)):
            raise ValueError("Q must be positive semidefinite")
        if _min_eig(self.R) < 1.0 - 1e-8:
            raise ValueError("R must satisfy R >= I (rescale the cost pair)")

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "R": self.R.tolist()}


def cost_pair(cost) -> tuple[np.ndarray, np.ndarray]:
    """Accept CostMatrices or a plain (Q, R) pair of arrays."""
    if isinstance(cost, CostMatrices):
        return cost.Q, cost.R
    Q, R = cost
    return np.asarray(Q, dtype=float), np.asarray(R, dtype=float)


@dataclass(frozen=True, eq=False)
class DemoSet:
    """Expert demonstrations: N state/input pairs (x_i, u_i).

    ``states`` is (N, n) and ``inputs`` is (N, m).  Pairs need not be
    ordered in time and may repeat states with different inputs.
    """

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _as_matrix(self.states, "states"))
        object.__setattr__(self, "inputs", _as_matrix(self.inputs, "inputs"))
        if self.states.shape[0] != self.inputs.shape[0]:
            raise ValueError(
                f"states and inputs must have the same length, got "
                f"{self.states.shape[0]} and {self.inputs.shape[0]}"
            )
        if self.states.shape[0] < 1:
            raise ValueError("need at least one demonstration")

    def __len__(self) -> int:
        return self.states.shape[0]

    def to_dict(self) -> dict:
        return {"states": self.states.tolist(), "inputs": self.inputs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DemoSet":
        return cls(states=np.array(d["states"], dtype=float),
                   inputs=np.array(d["inputs"], dtype=float))


def spectral_radius(M: np.ndarray) -> float:
    """max |lambda_i(M)| over the eigenvalues of a square matrix M."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got shape {M.shape}")
    return float(np.abs(np.linalg.eigvals(M)).max())


def solve_lyapunov_stein(F: np.ndarray, C: np.ndarray,
                         tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Solve P = C + F^T P F for symmetric C with rho(F) < 1.

    Fixed-point iteration with squaring (P accumulates sum F^{T k} C F^k
    while F is repeatedly squared), quadratically convergent.  The
    stationary state covariance X = F X F^T + W is the transposed variant:
    pass F.T.
    """
    P = _sym(np.asarray(C, dtype=float))
    Fk = np.asarray(F, dtype=float).copy()
    for _ in range(max_iter):
        Pn = _sym(P + Fk.T @ P @ Fk)
        Fk = Fk @ Fk
        if np.linalg.norm(Pn - P, "fro") <= tol * (1.0 + np.linalg.norm(Pn, "fro")):
            return Pn
        P = Pn
    return P


def stationary_covariance(dyn: LinearDynamics, K: np.ndarray,
                          input_noise_cov: np.ndarray | None = None) -> np.ndarray:
    """Stationary state covariance X = F X F^T + W_eff of the closed loop.

    With input noise z ~ N(0, Sigma) on top of u = K x, the effective
    disturbance covariance is W + B Sigma B^T.
    """
    F = dyn.closed_loop(K)
    if spectral_radius(F) >= STABILITY_MARGIN:
        raise ValueError("closed loop is not stable: no stationary distribution")
    Weff = dyn.W
    if input_noise_cov is not None:
        Weff = Weff + dyn.B @ np.asarray(input_noise_cov, float) @ dyn.B.T
    return solve_lyapunov_stein(F.T, Weff)


def closed_loop_cost(dyn: LinearDynamics, cost, K: np.ndarray) -> float:
    """Infinite-horizon average cost of the gain K, or inf if unstable.

    Computed as trace(W P_cl) where P_cl solves the discrete Lyapunov
    equation P_cl = Q + K^T R K + F^T P_cl F with F = A + B K.
    """
    Q, R = cost_pair(cost)
    F = dyn.closed_loop(K)
    if spectral_radius(F) >= STABILITY_MARGIN:
        return math.inf
    K = np.asarray(K, dtype=float)
    Pcl = solve_lyapunov_stein(F, Q + K.T @ R @ K)
    return float(np.sum(dyn.W * Pcl))


def _simulate_closed_loop(F: np.ndarray, x0: np.ndarray,
                          disturbances: np.ndarray) -> np.ndarray:
    """States x_0..x_{T-1} under x_{t+1} = F x_t + d_t, vectorized.

    Diagonalizes F and runs each eigen-coordinate as a scalar AR(1) filter;
    falls back to the plain recursion when F is too far from diagonalizable.
    """
    n, T = disturbances.shape[0], disturbances.shape[1] + 1
    lam, V = np.linalg.eig(F)
    use_fast = True
    try:
        Vinv = np.linalg.inv(V)
        if np.linalg.cond(V) > 1e8:
            use_fast = False
    except np.linalg.LinAlgError:
        use_fast = False
    if use_fast:
        E = Vinv @ disturbances
        y0 = Vinv @ x0
        Y = np.empty((n, T), dtype=complex)
        Y[:, 0] = y0
        for i in range(n):
            Y[i, 1:] = signal.lfilter(
                [1.0], [1.0, -lam[i]], E[i], zi=np.array([lam[i] * y0[i]])
            )[0]
        return np.ascontiguousarray((V @ Y).real)
    X = np.empty((n, T))
    X[:, 0] = x0
    for t in range(T - 1):
        X[:, t + 1] = F @ X[:, t] + disturbances[:, t]
    return X


def rollout_cost_estimate(dyn: LinearDynamics, cost, K: np.ndarray,
                          horizon: int, rng_seed,
                          input_noise_cov: np.ndarray | None = None) -> float:
    """Monte-Carlo estimate of the average cost from one simulated trajectory.

    Simulates ``horizon`` steps with Gaussian disturbances of covariance W,
    starting from a draw of the stationary closed-loop distribution, and
    returns (1/T) sum_t (x_t^T Q x_t + u_t^T R u_t).  With
    ``input_noise_cov`` set, the applied input is u_t = K x_t + z_t with
    z_t ~ N(0, Sigma); this is the noisy-expert policy used in the
    experiments.  Intended as an independent cross-check of
    :func:`closed_loop_cost`.
    """
    Q, R = cost_pair(cost)
    K = np.asarray(K, dtype=float)
    F = dyn.closed_loop(K)
    if spectral_radius(F) >= STABILITY_MARGIN:
        raise ValueError("closed loop is not stable: rollout cost diverges")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(rng_seed)
    Xstat = stationary_covariance(dyn, K, input_noise_cov)
    x0 = _psd_factor(Xstat) @ rng.standard_normal(dyn.n)
    Lw = _psd_factor(dyn.W)
    disturbances = Lw @ rng.standard_normal((dyn.n, horizon - 1)) if horizon > 1 \
        else np.zeros((dyn.n, 0))
    Z = None
    if input_noise_cov is not None:
        Lz = _psd_factor(np.asarray(input_noise_cov, dtype=float))
        Z = Lz @ rng.standard_normal((dyn.m, horizon))
        if horizon > 1:
            disturbances = disturbances + dyn.B @ Z[:, :-1]
    X = _simulate_closed_loop(F, x0, disturbances)
    state_cost = np.einsum("it,ij,jt->", X, Q, X)
    U = K @ X
    if Z is not None:
        U = U + Z
    input_cost = np.einsum("it,ij,jt->", U, R, U)
    return float((state_cost + input_cost) / horizon)


def generate_demos(dyn: LinearDynamics, expert: np.ndarray,
                   input_noise_cov: np.ndarray, n_demos: int,
                   outlier_prob: float, rng_seed,
                   state_dist: str = "stationary") -> DemoSet:
    """Draw N demonstration pairs from a noisy expert.

    States are drawn i.i.d. from the expert's stationary closed-loop
    distribution (or standard normal with ``state_dist="standard_normal"``),
    inputs are u_i = K_expert x_i + z_i with z_i ~ N(0, Sigma), and then
    every scalar input entry is independently sign-flipped with probability
    ``outlier_prob``.

    Draw order (fixed for reproducibility): state normals (n, N), input
    normals (m, N), then flip uniforms (N, m); the flip uniforms are drawn
    even when ``outlier_prob`` is zero.
    """
    expert = np.asarray(expert, dtype=float)
    Sigma = np.asarray(input_noise_cov, dtype=float)
    if not 0.0 <= outlier_prob <= 1.0:
        raise ValueError("outlier_prob must be in [0, 1]")
    if n_demos < 1:
        raise ValueError("need at least one demonstration")
    _check_symmetric(Sigma, "input_noise_cov")
    if _min_eig(Sigma) < -1e-10 * (1.0 + np.linalg.norm(Sigma)):
        raise ValueError("input_noise_cov must be positive semidefinite")
    rng = np.random.default_rng(rng_seed)
    if state_dist == "stationary":
        Lx = _psd_factor(stationary_covariance(dyn, expert))
    elif state_dist == "standard_normal":
        Lx = np.eye(dyn.n)
    else:
        raise ValueError(f"unknown state_dist {state_dist!r}")
    states = (Lx @ rng.standard_normal((dyn.n, n_demos))).T
    noise = (_psd_factor(Sigma) @ rng.standard_normal((dyn.m, n_demos))).T
    inputs = states @ expert.T + noise
    flips = rng.random((n_demos, dyn.m)) < outlier_prob
    inputs = np.where(flips, -inputs, inputs)
    return DemoSet(states=states, inputs=inputs)
