import numpy as np
import orjson
import pytest

from edgesense.config import get_settings
from edgesense.dkf import Topology
from edgesense.experiments import (
    build_components,
    default_beta_list,
    derive_seed,
    run_bounds,
    run_eval,
    run_fig5,
    run_fig6,
    run_table1,
    run_train,
    window_observability,
)
from edgesense.linsys import jordanize
from edgesense.main import main
from edgesense.models import parse_config


@pytest.fixture
def small_config(small_config_text):
    return parse_config(small_config_text)


def test_silent_plan_costs_open_loop_prediction(small_config_text):
    config = parse_config(small_config_text + "\n[observability]\nfixed_bounds = [0.0, 0.0]\n")
    config = config.model_copy(update={"evaluation": config.evaluation.model_copy(
        update={"horizon": 1})})
    sys = build_components(config).sys
    predicted = np.trace(sys.A @ sys.Gamma0 @ sys.A.T + sys.Qnoise)

    result = run_eval(config, "spm", H=1, check_observability=False)
    assert result.summary["mean_cost"] == pytest.approx(0.1 * 2 * predicted, rel=1e-12)
    assert result.summary["power_term"] == 0.0


def test_eval_is_seed_deterministic(small_config):
    first = run_eval(small_config, "rsm")
    second = run_eval(small_config, "rsm")

    assert first.runs.equals(second.runs)
    assert len(first.runs) == 2
    assert 0.0 <= first.summary["observability"] <= 1.0


def test_eval_records_trajectories(small_config):
    result = run_eval(small_config, "psm", H=1, trajectory=True)

    assert list(result.trajectories["k"]) == list(range(1, 7))


def test_unknown_policy_is_rejected(small_config):
    with pytest.raises(ValueError):
        run_eval(small_config, "greedy")


def test_train_and_evaluate_actor(small_config):
    result = run_train(small_config)
    summary = run_eval(small_config, "oidm", H=1, agent=result.agent)

    assert len(result.log) == 1
    assert np.isfinite(summary.summary["mean_cost"])


def test_window_observability_extremes(chain_system, pair_complete):
    jf = jordanize(chain_system)
    full = [np.ones((2, 3), dtype=int)] * 6
    silent = [np.zeros((2, 3), dtype=int)] * 6

    assert window_observability(jf, full, pair_complete, 3) == 1.0
    assert window_observability(jf, silent, pair_complete, 3) == 0.0
    assert window_observability(jf, full, Topology.isolated(2), 3, sliding=True) == 1.0
    assert np.isnan(window_observability(jf, full[:2], pair_complete, 3))


def test_bounds_table(small_config):
    row = run_bounds(small_config).iloc[0]

    assert 0.0 <= row["mu_lo"] <= row["mu_hi"] <= 1.0
    assert row["width"] == pytest.approx(row["mu_hi"] - row["mu_lo"])
    assert 0.0 <= row["phi_mc"] <= 1.0
    assert row["phi_lo"] >= small_config.observability.p0 - 1e-9
    assert row["phi_lo_gap"] == pytest.approx(row["phi_mc"] - row["phi_lo"])
    assert row["phi_mc_stderr"] >= 0.0


def test_bounds_table_without_monte_carlo(small_config_text):
    config = parse_config(small_config_text + "\n[observability]\nmc_trials = 0\n")
    row = run_bounds(config).iloc[0]

    assert np.isnan(row["phi_mc"])
    assert np.isnan(row["phi_lo_gap"])


def test_interval_grid_rows(small_config):
    frame = run_fig6(small_config)

    assert len(frame) == 4
    assert set(frame["status"]) == {"ok"}
    assert frame["phi_mc"].between(0.0, 1.0).all()
    assert list(frame.columns[-5:]) == ["phi_lo", "phi_mc", "phi_mc_stderr", "phi_lo_gap",
                                        "narrowest_at_min_L"]
    for _, group in frame.groupby("L"):
        assert group["mu_lo"].is_monotonic_increasing
        assert group["mu_hi"].is_monotonic_increasing


def test_derived_seeds_are_independent():
    a = derive_seed(7, 2, 0, 0).generate_state(2)
    b = derive_seed(7, 2, 0, 1).generate_state(2)

    assert not np.array_equal(a, b)
    assert np.array_equal(a, derive_seed(7, 2, 0, 0).generate_state(2))


def test_default_beta_list(small_config):
    assert default_beta_list(small_config) == pytest.approx([0.0, 0.01, 0.1, 1.0])
    assert default_beta_list(small_config, [0.5]) == [0.5]


def test_cli_bounds_and_eval(tmp_path, small_config_text):
    config = tmp_path / "exp.toml"
    config.write_text(small_config_text)
    out = tmp_path / "out"

    assert main(["bounds", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "bounds.csv").exists()

    code = main(["eval", "--config", str(config), "--out", str(out), "--policy", "spm",
                 "--trajectory"])
    assert code == 0
    manifest = orjson.loads((out / "manifest.json").read_bytes())
    assert manifest["command"] == "eval"
    assert manifest["seed"] == 7
    assert manifest["environment"] == get_settings().env
    assert manifest["tolerances"]["rank_tol"] == 1e-9
    assert set(manifest["results"]) == {"summary.csv", "runs.csv", "trajectory.csv",
                                        "dkf_trace.csv"}


def test_cli_reports_config_errors(tmp_path, capsys):
    config = tmp_path / "bad.toml"
    config.write_text("[cost]\nalpha = -1\n")

    assert main(["bounds", "--config", str(config)]) == 2
    assert "bad.toml:2:" in capsys.readouterr().err


def _with_sections(text, **sections):
    for name, body in sections.items():
        text += f"\n[{name}]\n{body}\n"
    return parse_config(text)


def test_cost_sweep_columns(small_config):
    frame = run_fig5(small_config, beta_list=[0.0, 1.0])

    assert list(frame.columns) == ["beta", "policy", "mean_cost", "stderr", "accuracy_term",
                                   "power_term"]
    assert len(frame) == 8
    assert set(frame["policy"]) == {"oidm", "spm", "rsm", "psm"}
    assert (frame.loc[frame["beta"] == 0.0, "mean_cost"]
            == frame.loc[frame["beta"] == 0.0, "accuracy_term"]).all()


def test_posterior_observability_columns(small_config):
    frame = run_table1(small_config, L_list=[3], beta_list=[0.0, 1.0])

    assert list(frame.columns) == ["L", "beta", "mu_lo", "mu_hi", "observability", "mean_cost"]
    assert len(frame) == 2
    assert frame["observability"].between(0.0, 1.0).all()


@pytest.mark.parametrize(("rate", "expected"), [(0.999999, 1.0), (0.0, 0.0)])
def test_posterior_observability_at_degenerate_rates(small_config_text, rate, expected):
    config = _with_sections(
        small_config_text.replace("window = 3", "window = 6"),
        observability=f"fixed_bounds = [{rate}, {rate}]",
    )
    frame = run_table1(config, L_list=[3], beta_list=[0.0])

    assert frame["observability"].iloc[0] == pytest.approx(expected, abs=0.01)


@pytest.mark.slow
def test_trained_policy_undercuts_baselines_when_power_dominates(small_config_text):
    text = (small_config_text
            .replace("episodes = 1", "episodes = 30")
            .replace("steps = 4", "steps = 50")
            .replace("batch_size = 2", "batch_size = 32")
            .replace("buffer_capacity = 16", "buffer_capacity = 2000")
            .replace("hidden = 8", "hidden = 32\nlr_actor = 0.001\ndiscount = 0.5")
            .replace("repetitions = 2", "repetitions = 8")
            .replace("horizon = 6", "horizon = 20"))
    config = _with_sections(text, observability="fixed_bounds = [0.3, 0.95]")
    frame = run_fig5(config, beta_list=[10 * config.cost.alpha]).set_index("policy")

    assert frame.loc["oidm", "mean_cost"] < frame.loc["spm", "mean_cost"]
    assert frame.loc["oidm", "mean_cost"] <= frame.loc["rsm", "mean_cost"]


def test_hot_rolling_interval_grid():
    config = parse_config("[observability]\nmc_trials = 0\n")
    frame = run_fig6(config, L_list=[5, 10], p0_list=[0.9, 0.95, 0.99])
    cells = frame.set_index(["L", "p0"])

    expected = {
        (5, 0.9): (0.260685, 0.503375),
        (5, 0.95): (0.277200, 0.564965),
        (5, 0.99): (0.309209, 0.674977),
        (10, 0.9): (0.132816, 0.258113),
        (10, 0.95): (0.141989, 0.297790),
        (10, 0.99): (0.160080, 0.376897),
    }
    for key, (mu_lo, mu_hi) in expected.items():
        assert cells.loc[key, "mu_lo"] == pytest.approx(mu_lo, abs=1e-5)
        assert cells.loc[key, "mu_hi"] == pytest.approx(mu_hi, abs=1e-5)
    for _, group in frame.groupby("L"):
        assert group["width"].is_monotonic_increasing
    assert cells.loc[(5, 0.95), "width"] == pytest.approx(0.287765, abs=1e-5)
    assert cells.loc[(10, 0.95), "width"] == pytest.approx(0.155801, abs=1e-5)
    assert not frame["narrowest_at_min_L"].any()
