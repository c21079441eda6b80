import json
import math

import numpy as np
import pytest

from lqfit.bench import (CSV_HEADER, ExperimentConfig, build_aircraft,
                         build_small_random, config_from_dict, default_config,
                         run_experiment)
from lqfit.kalman_fit import AdmmConfig
from lqfit.linsys import spectral_radius


class TestBuilders:
    def test_small_random_shapes_and_scaling(self):
        dyn, cost, sigma = build_small_random(0)
        assert dyn.A.shape == (4, 4)
        assert dyn.B.shape == (4, 2)
        assert spectral_radius(dyn.A) == pytest.approx(1.0, abs=1e-10)
        assert np.array_equal(dyn.W, 0.25 * np.eye(4))
        assert np.array_equal(cost.Q, np.eye(4))
        assert np.array_equal(cost.R, np.eye(2))
        assert np.array_equal(sigma, 4.0 * np.eye(2))

    def test_small_random_deterministic(self):
        a, _, _ = build_small_random(7)
        b, _, _ = build_small_random(7)
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.B, b.B)

    def test_small_random_varies_with_seed(self):
        a, _, _ = build_small_random(1)
        b, _, _ = build_small_random(2)
        assert not np.array_equal(a.A, b.A)

    def test_aircraft_matrix_entries(self):
        dyn, cost, sigma = build_aircraft()
        assert dyn.A[1][2] == 7.74
        assert dyn.A[0].tolist() == [1.0, 0.039, 0.0, -0.322]
        assert dyn.B[0][0] == 0.0001
        assert dyn.B[2].tolist() == [-0.0116, 0.00598]
        assert dyn.W[3][3] == 0.0
        # wind covariance is the printed one up to the PSD projection
        assert dyn.W[0][0] == pytest.approx(0.100, abs=1e-4)
        assert dyn.W[0][1] == pytest.approx(-0.003, abs=1e-4)
        assert np.linalg.eigvalsh(dyn.W).min() >= -1e-12
        assert np.array_equal(sigma, 25.0 * np.eye(2))

    def test_aircraft_controllable(self):
        dyn, _, _ = build_aircraft()
        assert dyn.is_controllable()


class TestConfig:
    def test_outliers_preset(self):
        cfg = default_config("outliers")
        assert cfg.outlier_prob == 0.1
        assert cfg.loss.kind == "huber"
        assert cfg.loss.huber_m == 0.5

    def test_from_dict_roundtrip(self):
        cfg = config_from_dict({
            "experiment": "small_random",
            "N_values": [1, 2],
            "seeds": [0, 1],
            "admm": {"n_iter": 10, "seed": 3},
            "loss": {"kind": "huber", "huber_m": 0.4},
        })
        assert cfg.N_values == (1, 2)
        assert cfg.admm.n_iter == 10
        assert cfg.admm.rho == 1.0
        assert cfg.loss.huber_m == 0.4

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"bogus": 1})

    def test_custom_requires_path(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="custom")

    def test_empty_sweeps_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(N_values=())
        with pytest.raises(ValueError):
            ExperimentConfig(seeds=())


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench") / "results.csv"
    cfg = ExperimentConfig(
        experiment="small_random", N_values=(1, 4), seeds=(0, 1),
        admm=AdmmConfig(n_iter=25, n_random_inits=1, seed=0),
        expert_eval_horizon=20_000)
    rows, summary = run_experiment(cfg, out)
    return cfg, rows, summary, out


class TestRunExperiment:
    def test_row_count(self, tiny_run):
        cfg, rows, summary, out = tiny_run
        assert len(rows) == len(cfg.seeds) * len(cfg.N_values) * 4
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + len(rows)

    def test_rows_internally_consistent(self, tiny_run):
        _, rows, _, _ = tiny_run
        for row in rows:
            assert row.finite == (row.cost < math.inf)
            if row.finite:
                assert row.spectral_radius < 1.0
            else:
                assert row.spectral_radius >= 1.0 - 1e-9
            if row.method == "kalman":
                assert row.kalman_residual is not None
            else:
                assert row.kalman_residual is None

    def test_summary_structure(self, tiny_run):
        cfg, rows, summary, out = tiny_run
        assert summary["experiment"] == "small_random"
        assert [e["N"] for e in summary["per_N"]] == sorted(cfg.N_values)
        for entry in summary["per_N"]:
            assert set(entry["mean_cost"]) == {"pf", "kalman", "expert",
                                               "optimal"}
            assert set(entry["fraction_finite"]) == {"pf", "kalman", "expert",
                                                     "optimal"}
        with open(str(out)[:-4] + "_summary.json") as f:
            on_disk = json.load(f)
        assert on_disk == json.loads(json.dumps(summary))

    def test_optimal_beats_expert(self, tiny_run):
        _, rows, summary, _ = tiny_run
        for entry in summary["per_N"]:
            assert entry["mean_cost"]["optimal"] <= entry["mean_cost"]["expert"]
            # noisy expert is strictly worse under Sigma > 0
            assert entry["mean_cost"]["optimal"] < entry["mean_cost"]["expert"]

    def test_rerun_byte_identical(self, tiny_run, tmp_path):
        cfg, _, _, out = tiny_run
        out2 = tmp_path / "again.csv"
        run_experiment(cfg, out2)
        assert out.read_bytes() == out2.read_bytes()

    def test_certified_rows_finite(self, tiny_run):
        _, rows, summary, _ = tiny_run
        for entry in summary["per_N"]:
            assert entry["fraction_finite"]["kalman"] == 1.0
            assert entry["fraction_finite"]["optimal"] == 1.0
            assert entry["fraction_finite"]["expert"] == 1.0


def test_convergence_toward_optimal_at_scale():
    # desk-scale analogue of the cost-vs-N curves: with plenty of (noisy)
    # demonstrations the certified constrained fit approaches the optimal
    # cost and clearly beats plain fitting
    from lqfit.conic_ls import LossSpec, RegularizerSpec
    from lqfit.kalman_fit import fit_kalman
    from lqfit.linsys import closed_loop_cost, generate_demos
    from lqfit.fitting import policy_fit
    from lqfit.riccati import solve_lqr

    quad, ridge = LossSpec("quadratic"), RegularizerSpec("ridge", 0.01)
    k_costs, pf_costs, o_costs = [], [], []
    for seed in range(12):
        dyn, cost, sigma = build_small_random(seed)
        Kstar = solve_lqr(dyn, cost).K
        demos = generate_demos(dyn, Kstar, sigma, 200, 0.0,
                               np.random.SeedSequence((seed, 200, 1)))
        rep = fit_kalman(demos, quad, ridge, dyn, AdmmConfig(seed=seed))
        k_costs.append(closed_loop_cost(dyn, cost, rep.K_certified))
        J_pf = closed_loop_cost(dyn, cost, policy_fit(demos, quad, ridge).K)
        if math.isfinite(J_pf):
            pf_costs.append(J_pf)
        o_costs.append(closed_loop_cost(dyn, cost, Kstar))
    mean_k = sum(k_costs) / len(k_costs)
    mean_o = sum(o_costs) / len(o_costs)
    assert mean_k <= 1.6 * mean_o
    assert mean_k < sum(pf_costs) / len(pf_costs)


def test_custom_experiment(tmp_path):
    dyn, cost, _ = build_small_random(5)
    path = tmp_path / "system.json"
    payload = dyn.to_dict()
    payload["Q"] = np.eye(4).tolist()
    payload["R"] = np.eye(2).tolist()
    payload["Sigma"] = (0.5 * np.eye(2)).tolist()
    path.write_text(json.dumps(payload))
    cfg = ExperimentConfig(
        experiment="custom", dynamics_path=str(path), N_values=(4,),
        seeds=(0,), admm=AdmmConfig(n_iter=10, n_random_inits=0),
        expert_eval_horizon=5_000)
    rows, summary = run_experiment(cfg)
    assert len(rows) == 4
    assert summary["experiment"] == "custom"
