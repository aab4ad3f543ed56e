import numpy as np
import pandas as pd
import pytest

from pinchnet import autodiff as ad
from pinchnet.exceptions import ConfigError, NumericError
from pinchnet.mappings import ReadoutFlags
from pinchnet.network import init_params
from pinchnet.training import (
    EVAL_MODES,
    HISTORY_COLUMNS,
    AdamState,
    EarlyStopping,
    MultiStepLR,
    TrainConfig,
    adam_step,
    draw_sample,
    evaluate_split,
    generate_dataset,
    loss_ee,
    loss_sr,
    split_indices,
    summarize,
    tau_schedule,
    train,
    write_history_csv,
)


EVAL_COLUMNS = ["sample_id", "K", "B", "R", "SR_bit_s_Hz", "EE_bit_J_Hz", "power_W_per_bs", "feasible", "infer_ms"]


@pytest.fixture
def tiny_dataset(tiny_config, tiny_scenario):
    return generate_dataset(tiny_config, tiny_scenario, n_samples=20, seed=3)


def test_train_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        TrainConfig(objective="throughput")
    with pytest.raises(ConfigError):
        TrainConfig(lr=0)
    with pytest.raises(ConfigError):
        TrainConfig(split=(0, 0, 0))


def test_dataset_is_reproducible_per_sample(tiny_config, tiny_scenario, tiny_dataset):
    again = generate_dataset(tiny_config, tiny_scenario, n_samples=20, seed=3)
    np.testing.assert_array_equal(again.ue_positions, tiny_dataset.ue_positions)
    np.testing.assert_array_equal(again.nlos_ris_ue, tiny_dataset.nlos_ris_ue)

    # sample i depends on (seed, i) only
    alone = draw_sample(tiny_scenario, 3, 7)
    np.testing.assert_array_equal(alone.ue_positions, tiny_dataset.ue_positions[7])
    np.testing.assert_array_equal(alone.nlos_pa_ris, tiny_dataset.nlos_pa_ris[7])

    other = generate_dataset(tiny_config, tiny_scenario, n_samples=20, seed=4)
    assert not np.array_equal(other.ue_positions, tiny_dataset.ue_positions)


def test_dataset_shapes(tiny_config, tiny_dataset):
    cfg = tiny_config
    assert len(tiny_dataset) == 20
    assert tiny_dataset.K == cfg.K
    assert tiny_dataset.nlos_pa_ris.shape == (20, cfg.B, cfg.R, cfg.L)
    assert tiny_dataset.nlos_ris_ue.shape == (20, cfg.R, cfg.K, cfg.L)
    assert tiny_dataset.split_realization("val").T == len(tiny_dataset.splits["val"])


def test_dataset_needs_samples(tiny_config):
    with pytest.raises(ConfigError):
        generate_dataset(tiny_config, n_samples=0)


def test_splits_are_disjoint_and_complete():
    splits = split_indices(100, (8, 1, 1), seed=0)
    assert [len(splits[name]) for name in ("train", "val", "test")] == [80, 10, 10]
    combined = np.concatenate(list(splits.values()))
    assert sorted(combined.tolist()) == list(range(100))


def test_sr_loss_is_mean_reciprocal():
    sr = ad.CTensor(np.array([1.0, 2.0, 4.0]))
    assert loss_sr(sr).item().real == pytest.approx((1 + 0.5 + 0.25) / 3)


def test_ee_loss_is_mean_power_over_rate():
    sr = ad.CTensor(np.array([2.0, 4.0]))
    power = ad.CTensor(np.array([1.0, 3.0]))
    assert loss_ee(sr, power, P_C=1.0).item().real == pytest.approx((2 / 2 + 4 / 4) / 2)


def test_zero_rate_is_floored_and_counted(caplog):
    flags = ReadoutFlags()
    sr = ad.CTensor(np.array([0.0, 1.0]))
    with caplog.at_level("WARNING", logger="pinchnet.training"):
        value = loss_sr(sr, floor=1e-3, flags=flags).item().real
    assert value == pytest.approx((1e3 + 1) / 2)
    assert flags.sr_floor == 1
    assert "floored" in caplog.text


def test_adam_first_step_moves_each_part_by_lr():
    p = ad.CTensor(np.array([1.0 + 1.0j, -2.0 + 0.5j]), requires_grad=True)
    p.grad = np.array([0.3 - 2.0j, -1.0 + 0.0j])
    adam_step([("p", p)], AdamState(), lr=0.1)
    np.testing.assert_allclose(p.data, [0.9 + 1.1j, -1.9 + 0.5j], atol=1e-6)


def test_adam_keeps_real_leaves_real():
    p = ad.CTensor(np.array([0.5]), requires_grad=True, real=True)
    p.grad = np.array([1.0 + 1.0j])
    state = adam_step([("p", p)], AdamState(), lr=0.01)
    assert p.data.imag[0] == 0
    assert state.step == 1


def test_adam_skips_parameters_without_gradient():
    p = ad.CTensor(np.array([1.0]), requires_grad=True)
    adam_step([("p", p)], AdamState(), lr=0.1)
    assert p.data[0] == 1.0


def test_adam_converges_on_a_convex_complex_quadratic():
    theta = ad.CTensor(np.array([1.0 + 1.0j, -0.5 + 2.0j, 3.0 - 0.2j]), requires_grad=True)
    state = AdamState()
    for _ in range(2000):
        ad.backward(ad.tsum(ad.abs2(theta)))
        adam_step([("theta", theta)], state, lr=0.01)
    assert np.max(np.abs(theta.data)) < 1e-3


def test_multistep_lr_decays_after_each_milestone():
    schedule = MultiStepLR(1.0, milestones=(20, 35), gamma=0.5)
    assert schedule.lr_at(1) == 1.0
    assert schedule.lr_at(20) == 1.0
    assert schedule.lr_at(21) == 0.5
    assert schedule.lr_at(36) == 0.25


def test_early_stopping_counts_stale_epochs():
    stopper = EarlyStopping(patience=2, min_delta=0.1)
    assert stopper(1.0)
    assert not stopper(1.05)
    assert not stopper.early_stop
    assert not stopper(0.9)
    assert stopper.early_stop
    assert stopper.best == 1.0


def test_tau_schedule(tiny_model_config):
    flat = TrainConfig(epochs=5)
    assert tau_schedule(tiny_model_config, flat, 5) == tiny_model_config.tau
    annealed = TrainConfig(epochs=5, tau_anneal=True, tau_final=0.2)
    assert tau_schedule(tiny_model_config, annealed, 1) == pytest.approx(tiny_model_config.tau)
    assert tau_schedule(tiny_model_config, annealed, 5) == pytest.approx(0.2)


@pytest.mark.parametrize("objective", ["sr", "ee"])
def test_short_training_run(objective, tiny_scenario, tiny_dataset, tiny_model_config, tmp_path):
    params = init_params(tiny_model_config, np.random.default_rng(0))
    seen = []
    cfg = TrainConfig(objective=objective, epochs=3, batch_size=8, lr=1e-3, patience=5)
    result = train(tiny_scenario, tiny_dataset, params, cfg, on_epoch=seen.append)

    assert result.epochs_run == 3
    assert list(result.history.columns) == HISTORY_COLUMNS
    assert result.history["epoch"].tolist() == [1, 2, 3]
    assert [row["epoch"] for row in seen] == [1, 2, 3]
    assert np.isfinite(result.history["train_loss"]).all()
    column = "val_SR" if objective == "sr" else "val_EE"
    assert result.best_val == pytest.approx(result.history[column].max())

    path = tmp_path / "history.csv"
    write_history_csv(result.history, path)
    assert list(pd.read_csv(path).columns) == HISTORY_COLUMNS


def test_training_is_deterministic_for_a_seed(tiny_scenario, tiny_dataset, tiny_model_config):
    cfg = TrainConfig(epochs=2, batch_size=8, lr=1e-3, seed=11)
    states = []
    for _ in range(2):
        params = init_params(tiny_model_config, np.random.default_rng(0))
        result = train(tiny_scenario, tiny_dataset, params, cfg)
        states.append(result.params.state_dict())
    assert states[0].keys() == states[1].keys()
    for name, value in states[0].items():
        np.testing.assert_array_equal(value, states[1][name], err_msg=name)


def test_training_rejects_an_empty_split(tiny_config, tiny_scenario, tiny_params):
    dataset = generate_dataset(tiny_config, tiny_scenario, n_samples=4, split=(0, 1, 1))
    with pytest.raises(ConfigError):
        train(tiny_scenario, dataset, tiny_params, TrainConfig(epochs=1))


def test_training_aborts_on_non_finite_loss(tiny_scenario, tiny_dataset, tiny_params):
    tiny_params.alpha_head[0].W.data[...] = np.nan
    with pytest.raises(NumericError):
        train(tiny_scenario, tiny_dataset, tiny_params, TrainConfig(epochs=1, batch_size=8))


@pytest.mark.parametrize("mode", EVAL_MODES)
def test_evaluate_split_rows(mode, tiny_scenario, tiny_dataset, tiny_params):
    frame = evaluate_split(tiny_scenario, tiny_dataset, tiny_params, mode=mode, batch_size=2, seed=1)
    assert list(frame.columns) == EVAL_COLUMNS
    assert frame["sample_id"].tolist() == tiny_dataset.splits["test"].tolist()
    assert (frame["feasible"] == 1).all()
    assert (frame["SR_bit_s_Hz"] >= 0).all()


def test_evaluate_split_does_not_depend_on_worker_count(tiny_scenario, tiny_dataset, tiny_params):
    kwargs = dict(split=None, mode="random-assoc", batch_size=3, seed=9)
    serial = evaluate_split(tiny_scenario, tiny_dataset, tiny_params, workers=1, **kwargs)
    pooled = evaluate_split(tiny_scenario, tiny_dataset, tiny_params, workers=4, **kwargs)
    columns = ["sample_id", "SR_bit_s_Hz", "EE_bit_J_Hz", "feasible"]
    pd.testing.assert_frame_equal(serial[columns], pooled[columns])


def test_unknown_eval_mode(tiny_scenario, tiny_dataset, tiny_params):
    with pytest.raises(ConfigError):
        evaluate_split(tiny_scenario, tiny_dataset, tiny_params, mode="best-case")


def test_summarize():
    frame = pd.DataFrame(
        {
            "SR_bit_s_Hz": [1.0, 3.0],
            "EE_bit_J_Hz": [0.5, 1.5],
            "infer_ms": [2.0, 4.0],
            "feasible": [1, 0],
        }
    )
    assert summarize(frame) == {
        "n_samples": 2,
        "mean_SR": 2.0,
        "mean_EE": 1.0,
        "mean_infer_ms": 3.0,
        "feasible_rate": 0.5,
    }
