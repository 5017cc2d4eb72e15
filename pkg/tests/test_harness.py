"""Harness tests: config contracts, regret accounting, fits, CSV shape.

Fit coefficients are pinned on synthetic curves where the answer is the
curve's own constant; regret accounting is pinned by hand on tiny
decision sequences.  End-to-end runs only assert structural facts
(shapes, determinism, column conventions) at desk scale -- rate-shape
claims live in the acceptance suite.
"""

import io
import json
import math
import os

import numpy as np
import pytest

from bobw.harness import (
    CSV_HEADER,
    ExperimentConfig,
    checkpoints,
    config_from_json,
    config_to_json,
    csv_text,
    decision_mean_matrix,
    fit_csv,
    pseudo_regret,
    run_experiment,
    run_sweep,
    slope_fit,
    stochastic_verdict,
)

RNG = np.random.default_rng


# ------------------------------------------------------------------ config


def test_config_defaults_per_setting():
    c = ExperimentConfig(setting="mab", means=[0.2, 0.5])
    assert (c.base, c.corral) == ("logbarrier", "strong")
    c = ExperimentConfig(setting="graph-weak", means=[0.2, 0.5],
                         graph_edges=[[0, 0], [0, 1], [1, 0], [1, 1]])
    assert (c.base, c.corral) == ("weakexp3", "two-thirds")


def test_config_rejects_incompatible_combinations():
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", base="exp2", means=[0.2, 0.5])
    with pytest.raises(ValueError):
        ExperimentConfig(setting="graph-strong", corral="strong",
                         means=[0.2, 0.5], graph_edges=[[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        ExperimentConfig(setting="contextual", regime="adversarial",
                         ctx_means=[[0.1, 0.9]], policies=[[0], [1]])
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", regime="adversarial")  # no script
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", regime="corrupted", means=[0.2, 0.5])
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", stack="nope", means=[0.2, 0.5])
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", means=[0.2, 0.5], seeds=[])


def test_config_delta_shorthand():
    c = ExperimentConfig(setting="mab", delta=0.25, num_actions=4)
    assert c.means == (0.25, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", delta=0.25)
    with pytest.raises(ValueError):
        ExperimentConfig(setting="mab", delta=0.7, num_actions=4)


def test_config_json_round_trip():
    c = ExperimentConfig(setting="mab", means=[0.25, 0.5], horizon=128,
                         seeds=[3, 4], corral="dd")
    c2 = config_from_json(config_to_json(c))
    assert c2 == c


def test_config_json_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        config_from_json(json.dumps({"setting": "mab", "means": [0.2, 0.5],
                                     "learning_rate": 3}))


def test_config_json_from_file(tmp_path):
    pth = tmp_path / "cfg.json"
    pth.write_text(config_to_json(ExperimentConfig(setting="mab",
                                                   means=[0.2, 0.5])))
    assert config_from_json(str(pth)).means == (0.2, 0.5)


# -------------------------------------------------------------- accounting


def test_checkpoints_grid():
    assert checkpoints(1) == [1]
    assert checkpoints(16) == [16]
    assert checkpoints(100) == [16, 32, 64, 100]
    grid = checkpoints(2 ** 16)
    assert grid[0] == 16 and grid[-1] == 2 ** 16 and len(grid) == 13


def test_pseudo_regret_hand_example():
    # two arms with means (0.25, 0.5); playing the worse arm ten rounds
    means = np.tile([0.25, 0.5], (10, 1))
    curve, best = pseudo_regret(np.ones(10, dtype=int), means)
    assert best == 0
    assert curve[-1] == pytest.approx(2.5, abs=1e-12)
    assert np.allclose(curve, 0.25 * np.arange(1, 11))


def test_pseudo_regret_optimal_play_is_zero():
    means = np.tile([0.25, 0.5], (7, 1))
    curve, _ = pseudo_regret(np.zeros(7, dtype=int), means)
    assert np.all(curve == 0.0)


def test_decision_mean_matrix_contextual():
    # two contexts, two arms; policy 0 = identity, policy 1 = swap
    means = np.array([[0.1, 0.9], [0.8, 0.2]])
    contexts = np.array([0, 1, 1])
    path_means = means[contexts]
    policies = np.array([[0, 1], [1, 0]])

    class P:
        pass

    path = P()
    path.means = path_means
    path.contexts = contexts
    path.horizon = 3
    m = decision_mean_matrix(path, policies)
    # policy 0 plays arm=context: rounds (0.1, 0.2, 0.2); policy 1 swaps
    assert np.allclose(m[:, 0], [0.1, 0.2, 0.2])
    assert np.allclose(m[:, 1], [0.9, 0.8, 0.8])


# -------------------------------------------------------------------- fits


def test_slope_fit_exact_log_curve():
    ts = np.array(checkpoints(2 ** 16), dtype=float)
    fit = slope_fit(ts, 5.0 * np.log(ts))
    assert fit.log_coef == pytest.approx(5.0, abs=1e-6)
    assert fit.log_r2 == pytest.approx(1.0, abs=1e-9)


def test_slope_fit_exact_sqrt_curve():
    ts = np.array(checkpoints(2 ** 16), dtype=float)
    fit = slope_fit(ts, 3.0 * np.sqrt(ts))
    assert fit.sqrt_coef == pytest.approx(3.0, abs=1e-6)
    assert fit.sqrt_r2 == pytest.approx(1.0, abs=1e-9)


def test_slope_fit_noisy_log_prefers_log():
    ts = np.array(checkpoints(2 ** 16), dtype=float)
    rng = RNG(0)
    fit = slope_fit(ts, 5.0 * np.log(ts) + rng.uniform(-1, 1, ts.size))
    assert fit.log_r2 > fit.sqrt_r2


def test_slope_fit_preconditions():
    good = np.array(checkpoints(2 ** 16), dtype=float)
    with pytest.raises(ValueError, match="at least 8"):
        slope_fit(good[:5], np.log(good[:5]))
    bad = good.copy()
    bad[3] = bad[2]  # not strictly increasing
    with pytest.raises(ValueError, match="increasing"):
        slope_fit(bad, np.log(good))
    narrow = np.linspace(100, 900, 9)
    with pytest.raises(ValueError, match="decades"):
        slope_fit(narrow, np.log(narrow))


def test_stochastic_verdict_rule():
    ts = np.array(checkpoints(2 ** 16), dtype=float)
    v = stochastic_verdict(ts, 5.0 * np.log(ts))
    assert v.passed and v.ratio_end < 0.5 * v.ratio_earlier
    v = stochastic_verdict(ts, 3.0 * np.sqrt(ts))
    # regret/sqrt(t) constant: the halving clause fails
    assert not v.passed
    assert v.ratio_end == pytest.approx(v.ratio_earlier, rel=1e-9)


# -------------------------------------------------------------- end to end


def _tiny(**kw):
    base = dict(setting="mab", stack="full", regime="stochastic",
                means=[0.25, 0.5], horizon=64, seeds=[0, 1])
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_shapes_and_candidate_column():
    r = run_experiment(_tiny())
    assert r.ts.tolist() == [16, 32, 64]
    assert r.regret.shape == (2, 3)
    assert r.one_minus_p.shape == (2, 3)
    assert np.all((0 <= r.candidates) & (r.candidates < 2))
    r = run_experiment(_tiny(stack="base-only"))
    assert np.all(r.candidates == -1)
    r = run_experiment(_tiny(stack="base+corral", candidate=1))
    assert np.all(r.candidates == 1)


def test_one_minus_p_best_is_cumulative():
    r = run_experiment(_tiny(horizon=128))
    for row in r.one_minus_p:
        assert np.all(np.diff(row) >= -1e-12)
        assert row[0] >= -1e-12


def test_horizon_one_single_record():
    for stack in ("base-only", "base+corral", "full"):
        r = run_experiment(_tiny(stack=stack, horizon=1, seeds=[0]))
        assert r.ts.tolist() == [1]
        assert -2.0 <= r.regret[0, 0] <= 2.0


def test_zero_gap_rejected():
    with pytest.raises(ValueError, match="gap"):
        run_experiment(_tiny(means=[0.5, 0.5]))


def test_csv_shape_and_determinism():
    cfg = _tiny(horizon=32, seeds=[0, 5])
    text = csv_text(run_experiment(cfg))
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1 + 2 * len(checkpoints(32))
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "16"
    assert first[5] == "mab" and first[6] == "full"
    again = csv_text(run_experiment(cfg))
    assert text == again


def test_csv_output_file_and_fit_round_trip(tmp_path):
    out = tmp_path / "res.csv"
    cfg = ExperimentConfig(setting="mab", stack="base+corral", regime="stochastic",
                           means=[0.25, 0.5], horizon=2 ** 11,
                           seeds=list(range(4)), output=str(out))
    run_experiment(cfg)
    report = fit_csv(str(out))
    assert len(report["ts"]) == len(checkpoints(2 ** 11))
    assert isinstance(report["stochastic_verdict"], bool)
    json.dumps(report)  # every value must be a plain Python scalar/list
    assert report["log_coef"] == pytest.approx(
        fit_csv(out.read_text())["log_coef"])


def test_threads_env_var_parity():
    cfg = _tiny(horizon=64, seeds=[0, 1, 2])
    serial = run_experiment(cfg)
    os.environ["BOBW_THREADS"] = "3"
    try:
        pooled = run_experiment(cfg)
    finally:
        del os.environ["BOBW_THREADS"]
    assert np.array_equal(serial.regret, pooled.regret)
    assert np.array_equal(serial.one_minus_p, pooled.one_minus_p)
    assert np.array_equal(serial.candidates, pooled.candidates)


def test_adversarial_script_cycles():
    cfg = ExperimentConfig(setting="mab", stack="base-only",
                           regime="adversarial",
                           script=[[1.0, 0.0], [0.0, 1.0]], horizon=48,
                           seeds=[0])
    r = run_experiment(cfg)
    # alternating script: every fixed arm collects half the rounds
    assert abs(r.regret[0, -1]) <= 24.0


def test_graph_model_size_mismatch_rejected():
    cfg = ExperimentConfig(setting="graph-strong", stack="base-only",
                           regime="stochastic", means=[0.2, 0.5, 0.5],
                           graph_edges=[[0, 0], [1, 1], [0, 1], [1, 0]])
    with pytest.raises(ValueError, match="nodes"):
        run_experiment(cfg)


def test_sweep_grid_labels_and_outputs(tmp_path):
    base = ExperimentConfig(setting="mab", stack="base+corral",
                            regime="stochastic", means=[0.25, 0.5],
                            horizon=32, seeds=[0],
                            output=str(tmp_path / "sweep.csv"))
    out = run_sweep(base, deltas=[0.1, 0.25], budgets=None, horizons=[16, 32])
    assert [label for label, _ in out] == [
        "d0.1_CNone_T16", "d0.1_CNone_T32",
        "d0.25_CNone_T16", "d0.25_CNone_T32"]
    for label, res in out:
        assert (tmp_path / f"sweep_{label}.csv").exists()
    corr = run_sweep(base, deltas=None, budgets=[0.0, 4.0], horizons=None)
    assert all(res.config.regime == "corrupted" for _, res in corr)


def test_contextual_full_stack_runs():
    cfg = ExperimentConfig(setting="contextual", stack="full",
                           regime="stochastic",
                           ctx_means=[[0.2, 0.7], [0.7, 0.2]],
                           policies=[[0, 1], [1, 0], [0, 0]],
                           horizon=64, seeds=[0])
    r = run_experiment(cfg)
    assert r.regret.shape == (1, len(checkpoints(64)))
    # decisions are policies: the candidate column is a policy index
    assert np.all((0 <= r.candidates) & (r.candidates < 3))
