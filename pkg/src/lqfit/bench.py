"""Experiment harness: imperfect-LQR and outlier benchmarks, CSV/JSON output.

Reproduces the demonstration-count sweeps: build a system, synthesize the
expert gain from the true cost, draw noisy demonstrations, fit a gain with
and without the optimality constraint, and evaluate everything under the
true cost.  Three built-in experiments:

* ``small_random`` - n=4, m=2, standard normal (A, B) with A rescaled to
  spectral radius one, Q = R = I, W = 0.25 I, Sigma = 4 I;
* ``aircraft`` - linearized 747 level-flight model, Q = R = I,
  Sigma = 25 I;
* ``outliers`` - the small random setup with sign-flip probability 0.1 on
  every input entry and Huber loss (M = 0.5);
* ``custom`` - system loaded from a JSON file.

Results go to a CSV (one row per seed/N/method) plus a JSON summary of
per-N mean finite costs and fractions finite.  Everything is seeded, so a
re-run with the same config is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import fitting, kalman_fit, riccati
from .conic_ls import LossSpec, RegularizerSpec, project_psd
from .kalman_fit import AdmmConfig
from .linsys import (CostMatrices, LinearDynamics, closed_loop_cost,
                     generate_demos, rollout_cost_estimate, spectral_radius)

EXPERIMENTS = ("small_random", "aircraft", "outliers", "custom")
METHODS = ("pf", "kalman", "expert", "optimal")

CSV_HEADER = "experiment,N,seed,method,cost,finite,spectral_radius,kalman_residual"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "small_random"
    N_values: tuple = (1, 2, 3, 4, 5, 7, 10, 15, 20)
    seeds: tuple = tuple(range(10))
    sigma: object = None          # scalar, matrix, or None for the default
    outlier_prob: float = 0.0
    loss: LossSpec = LossSpec("quadratic")
    reg: RegularizerSpec = RegularizerSpec("ridge", 0.01)
    admm: AdmmConfig = AdmmConfig()
    dynamics_path: str | None = None
    certify: bool = True          # evaluate the certified gain in the kalman row
    expert_eval_horizon: int = 100_000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.N_values:
            raise ValueError("N_values must be nonempty")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.experiment == "custom" and not self.dynamics_path:
            raise ValueError("custom experiment requires dynamics_path")
        object.__setattr__(self, "N_values", tuple(int(v) for v in self.N_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True, eq=False)
class ResultRow:
    experiment: str
    N: int
    seed: int
    method: str
    cost: float
    finite: bool
    spectral_radius: float
    kalman_residual: float | None = None

    def to_csv(self) -> str:
        resid = "" if self.kalman_residual is None else repr(self.kalman_residual)
        return (f"{self.experiment},{self.N},{self.seed},{self.method},"
                f"{self.cost!r},{'true' if self.finite else 'false'},"
                f"{self.spectral_radius!r},{resid}")


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Experiment presets; keyword overrides are applied on top."""
    base = {"experiment": experiment}
    if experiment == "outliers":
        base.update(outlier_prob=0.1, loss=LossSpec("huber", huber_m=0.5))
    cfg = ExperimentConfig(**base)
    return replace(cfg, **overrides) if overrides else cfg


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config from parsed JSON, starting from the experiment preset."""
    d = dict(d)
    experiment = d.pop("experiment", "small_random")
    kwargs = {}
    if "loss" in d:
        kwargs["loss"] = LossSpec(**d.pop("loss"))
    if "reg" in d:
        kwargs["reg"] = RegularizerSpec(**d.pop("reg"))
    if "admm" in d:
        kwargs["admm"] = AdmmConfig(**d.pop("admm"))
    for key in ("N_values", "seeds", "sigma", "outlier_prob", "dynamics_path",
                "certify", "expert_eval_horizon"):
        if key in d:
            kwargs[key] = d.pop(key)
    if d:
        raise ValueError(f"unknown config fields: {sorted(d)}")
    return default_config(experiment, **kwargs)


def config_to_dict(config: ExperimentConfig) -> dict:
    d = dataclasses.asdict(config)
    d["N_values"] = list(config.N_values)
    d["seeds"] = list(config.seeds)
    if isinstance(config.sigma, np.ndarray):
        d["sigma"] = config.sigma.tolist()
    return d


def build_small_random(seed) -> tuple[LinearDynamics, CostMatrices, np.ndarray]:
    """Random 4-state/2-input system with A rescaled to spectral radius one."""
    rng = np.random.default_rng(seed)
    while True:
        A = rng.standard_normal((4, 4))
        rho = spectral_radius(A)
        if rho >= 1e-12:
            break
    A = A / rho
    B = rng.standard_normal((4, 2))
    dyn = LinearDynamics(A=A, B=B, W=0.25 * np.eye(4))
    return dyn, CostMatrices(Q=np.eye(4), R=np.eye(2)), 4.0 * np.eye(2)


# 747 in level flight at 40000 ft, 774 ft/s; states (u, v, q, theta),
# inputs (elevator, thrust), discretized at 0.01 s.
_AIRCRAFT_A = [[1.0, 0.039, 0.0, -0.322],
               [-0.065, 0.997, 7.74, 0.0],
               [0.02, -0.101, 0.996, 0.0],
               [0.0, 0.0, 1.0, 1.0]]
_AIRCRAFT_B = [[0.0001, 0.0],
               [-0.0018, -0.0004],
               [-0.0116, 0.00598],
               [0.0, 0.0]]
_AIRCRAFT_W = [[0.100, -0.003, 0.002, 0.0],
               [-0.003, 0.1, -0.010, 0.0],
               [0.002, -0.010, 0.001, 0.0],
               [0.0, 0.0, 0.0, 0.0]]


def build_aircraft() -> tuple[LinearDynamics, CostMatrices, np.ndarray]:
    """The 747 model with wind covariance W, Q = R = I, Sigma = 25 I.

    The three-decimal wind covariance as printed is indefinite at the
    1e-5 level (a rounding artifact), so its active 3x3 block is projected
    onto the PSD cone; the zero row/column is preserved exactly.
    """
    W = np.array(_AIRCRAFT_W)
    W[:3, :3] = project_psd(W[:3, :3], 0.0)
    dyn = LinearDynamics(A=np.array(_AIRCRAFT_A), B=np.array(_AIRCRAFT_B), W=W)
    return dyn, CostMatrices(Q=np.eye(4), R=np.eye(2)), 25.0 * np.eye(2)


def load_custom_system(path) -> tuple[LinearDynamics, CostMatrices, np.ndarray]:
    with open(path) as f:
        d = json.load(f)
    dyn = LinearDynamics.from_dict(d)
    Q = np.array(d.get("Q", np.eye(dyn.n).tolist()), dtype=float)
    R = np.array(d.get("R", np.eye(dyn.m).tolist()), dtype=float)
    sigma = d.get("Sigma")
    sigma = np.eye(dyn.m) if sigma is None else np.array(sigma, dtype=float)
    return dyn, CostMatrices(Q=Q, R=R), sigma


def _resolve_sigma(config: ExperimentConfig, default: np.ndarray, m: int):
    if config.sigma is None:
        return default
    sig = np.asarray(config.sigma, dtype=float)
    if sig.ndim == 0:
        return float(sig) * np.eye(m)
    return sig


def _build_system(config: ExperimentConfig, seed: int):
    if config.experiment in ("small_random", "outliers"):
        dyn, cost, sigma = build_small_random(seed)
    elif config.experiment == "aircraft":
        dyn, cost, sigma = build_aircraft()
    else:
        dyn, cost, sigma = load_custom_system(config.dynamics_path)
    return dyn, cost, _resolve_sigma(config, sigma, dyn.m)


def _derived_seed(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence(tuple(int(p) for p in parts))


def run_cell(config: ExperimentConfig, dyn, cost, sigma, Kstar, seed: int,
             N: int):
    """Fit both methods on one (seed, N) cell; returns (pf_row, kalman_row)."""
    demos = generate_demos(dyn, Kstar, sigma, N, config.outlier_prob,
                           rng_seed=_derived_seed(seed, N, 1))
    name = config.experiment
    try:
        pf = fitting.policy_fit(demos, config.loss, config.reg)
        sr = spectral_radius(dyn.closed_loop(pf.K))
        pf_row = ResultRow(name, N, seed, "pf",
                           closed_loop_cost(dyn, cost, pf.K),
                           finite=sr < 1.0 - 1e-9, spectral_radius=sr)
    except Exception as e:  # recorded, not fatal
        print(f"warning: pf failed at seed={seed} N={N}: {e}", file=sys.stderr)
        pf_row = ResultRow(name, N, seed, "pf", math.inf, False, math.inf)
    try:
        admm_seed = int(_derived_seed(config.admm.seed, seed, N).generate_state(1)[0])
        report = kalman_fit.fit_kalman(
            demos, config.loss, config.reg, dyn,
            replace(config.admm, seed=admm_seed))
        K_eval = report.K
        if config.certify and report.K_certified is not None:
            K_eval = report.K_certified
        sr = spectral_radius(dyn.closed_loop(K_eval))
        kalman_row = ResultRow(name, N, seed, "kalman",
                               closed_loop_cost(dyn, cost, K_eval),
                               finite=sr < 1.0 - 1e-9, spectral_radius=sr,
                               kalman_residual=report.certificate.residual)
    except Exception as e:
        print(f"warning: kalman fit failed at seed={seed} N={N}: {e}",
              file=sys.stderr)
        kalman_row = ResultRow(name, N, seed, "kalman", math.inf, False,
                               math.inf)
        report = None
    return pf_row, kalman_row, demos, report


def run_experiment(config: ExperimentConfig, output_path=None):
    """Full sweep over seeds and demonstration counts.

    Returns the list of ResultRows and the summary dict; when
    ``output_path`` is given, writes ``<output_path>`` as CSV and the
    summary next to it with a ``_summary.json`` suffix.
    """
    rows = []
    for seed in config.seeds:
        dyn, cost, sigma = _build_system(config, seed)
        Kstar = riccati.solve_lqr(dyn, cost).K
        sr_star = spectral_radius(dyn.closed_loop(Kstar))
        optimal_cost = closed_loop_cost(dyn, cost, Kstar)
        expert_cost = rollout_cost_estimate(
            dyn, cost, Kstar, horizon=config.expert_eval_horizon,
            rng_seed=_derived_seed(seed, 0, 2), input_noise_cov=sigma)
        name = config.experiment
        for N in config.N_values:
            pf_row, kalman_row, _, _ = run_cell(config, dyn, cost, sigma,
                                                Kstar, seed, N)
            rows.append(pf_row)
            rows.append(kalman_row)
            rows.append(ResultRow(name, N, seed, "expert", expert_cost,
                                  True, sr_star))
            rows.append(ResultRow(name, N, seed, "optimal", optimal_cost,
                                  finite=sr_star < 1.0 - 1e-9,
                                  spectral_radius=sr_star))
    summary = summarize(config.experiment, rows)
    if output_path is not None:
        write_csv(rows, output_path)
        write_summary(summary, _summary_path(output_path))
    return rows, summary


def summarize(experiment: str, rows) -> dict:
    per_N = {}
    for row in rows:
        bucket = per_N.setdefault(row.N, {m: [] for m in METHODS})
        bucket[row.method].append(row)
    out = []
    for N in sorted(per_N):
        mean_cost = {}
        fraction_finite = {}
        for method in METHODS:
            cells = per_N[N][method]
            finite = [r.cost for r in cells if r.finite]
            mean_cost[method] = (sum(finite) / len(finite)) if finite else None
            fraction_finite[method] = (len(finite) / len(cells)) if cells else 0.0
        out.append({"N": N, "mean_cost": mean_cost,
                    "fraction_finite": fraction_finite})
    return {"experiment": experiment, "per_N": out}


def _summary_path(output_path) -> str:
    path = str(output_path)
    if path.endswith(".csv"):
        path = path[:-4]
    return path + "_summary.json"


def write_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(row.to_csv() + "\n")


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
