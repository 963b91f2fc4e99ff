"""Loss, Adam optimizer, gradient clipping, and the fit/evaluate loop."""

import numpy as np
import pytest

from dctnet.numeric_engine import Tape, Tensor, backward
from dctnet.data_io import (NormStats, WindowedDataset, compute_stats,
                            make_windows, synth_series)
from dctnet.errors import ContractError, DataError, TrainingError
from dctnet.model import ModelConfig, forward, init_params
from dctnet.trainer import (OptimizerState, TrainSettings, adam_step,
                            clip_global_norm, evaluate, fit, mae_metric,
                            mse_loss)


def micro_config(**overrides):
    base = dict(channels=1, seq_len=8, pred_len=4, patch_len=4, stride=4,
                latent_dim=8, heads=2, dropout=0.0, seed=11)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_dataset(n_windows, seed=0, cfg=None):
    cfg = cfg or micro_config()
    rows = cfg.seq_len + cfg.pred_len + n_windows - 1
    table = synth_series("sine", rows, cfg.channels, seed)
    stats = compute_stats(table)
    return make_windows(table, cfg.seq_len, cfg.pred_len, stats,
                        split_tag="train")


class TestLosses:
    def test_perfect_prediction_is_zero(self):
        p = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        t = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert mse_loss(p, t).data == 0.0
        assert mae_metric(p.data, t) == 0.0

    def test_unit_offset(self):
        p = Tensor(np.array([0.0, 0.0]))
        t = np.array([1.0, 1.0])
        assert mse_loss(p, t).data == 1.0
        assert mae_metric(p.data, t) == 1.0

    def test_hand_case(self):
        p = Tensor(np.array([1.0, 3.0]))
        t = np.array([2.0, 5.0])
        # errors -1, -2 -> mse (1+4)/2, mae (1+2)/2
        assert mse_loss(p, t).data == pytest.approx(2.5)
        assert mae_metric(p.data, t) == pytest.approx(1.5)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            mse_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 2)))

    def test_mse_gradient(self):
        with Tape() as tape:
            p = Tensor(np.array([1.0, 3.0]), requires_grad=True)
            loss = mse_loss(p, np.array([2.0, 5.0]))
            backward(loss, tape)
        # d/dp mean((p-t)^2) = 2(p-t)/n
        np.testing.assert_allclose(p.grad, [-1.0, -2.0])


class TestAdam:
    def test_first_step_frozen_value(self):
        # theta=0, g=1, lr=1e-3, defaults: theta' = -lr*g/(|g|+eps) after
        # bias correction, computed independently with plain floats
        params = {"w": Tensor(np.array([0.0]), requires_grad=True)}
        grads = {"w": np.array([1.0])}
        state = OptimizerState.for_params(params, lr=1e-3)
        adam_step(params, grads, state)
        assert state.t == 1
        assert params["w"].data[0] == pytest.approx(
            -0.0009999999900000001, abs=0, rel=1e-15)

    def test_two_steps_match_scalar_recurrence(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        theta, m, v = 0.5, 0.0, 0.0
        gs = [2.0, -1.5]
        for i, g in enumerate(gs, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1 ** i)
            vh = v / (1 - b2 ** i)
            theta -= lr * mh / (np.sqrt(vh) + eps)

        params = {"w": Tensor(np.array([0.5]), requires_grad=True)}
        state = OptimizerState.for_params(params, lr=lr)
        for g in gs:
            adam_step(params, {"w": np.array([g])}, state)
        assert params["w"].data[0] == pytest.approx(theta, rel=1e-14)

    def test_zero_gradient_keeps_value(self):
        params = {"w": Tensor(np.array([3.0]), requires_grad=True)}
        state = OptimizerState.for_params(params, lr=0.1)
        adam_step(params, {"w": np.array([0.0])}, state)
        assert params["w"].data[0] == 3.0
        assert state.m["w"][0] == 0.0 and state.v["w"][0] == 0.0

    def test_zero_lr_keeps_value(self):
        params = {"w": Tensor(np.array([3.0]), requires_grad=True)}
        state = OptimizerState.for_params(params, lr=0.0)
        adam_step(params, {"w": np.array([7.0])}, state)
        assert params["w"].data[0] == 3.0

    def test_missing_gradient_rejected(self):
        params = {"w": Tensor(np.array([0.0]), requires_grad=True),
                  "b": Tensor(np.array([0.0]), requires_grad=True)}
        state = OptimizerState.for_params(params, lr=0.1)
        with pytest.raises(ContractError, match="b"):
            adam_step(params, {"w": np.array([1.0])}, state)


class TestClip:
    def test_scales_when_over_limit(self):
        grads = {"a": np.array([3.0, 4.0])}
        norm = clip_global_norm(grads, 1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(grads["a"], [0.6, 0.8])

    def test_untouched_under_limit(self):
        grads = {"a": np.array([0.3, 0.4])}
        norm = clip_global_norm(grads, 5.0)
        assert norm == pytest.approx(0.5)
        np.testing.assert_allclose(grads["a"], [0.3, 0.4])

    def test_norm_spans_all_entries(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        norm = clip_global_norm(grads, 2.5)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(grads["a"], [1.5])
        np.testing.assert_allclose(grads["b"], [2.0])


class TestFit:
    def test_loss_decreases_on_small_problem(self):
        cfg = micro_config()
        train = tiny_dataset(12, seed=1, cfg=cfg)
        val = tiny_dataset(4, seed=2, cfg=cfg)
        settings = TrainSettings(lr=1e-3, epochs=4, batch_size=4,
                                 patience=10, seed=0)
        params = init_params(cfg)
        _, report = fit(params, cfg, train, val, settings, log=lambda m: None)
        assert report.train_loss[-1] < report.train_loss[0]
        assert report.epochs_run == 4
        assert len(report.val_mse) == 4

    def test_patience_zero_runs_one_epoch(self):
        cfg = micro_config()
        train = tiny_dataset(6, cfg=cfg)
        settings = TrainSettings(lr=1e-4, epochs=10, batch_size=4,
                                 patience=0, seed=0)
        _, report = fit(init_params(cfg), cfg, train, train, settings,
                        log=lambda m: None)
        assert report.epochs_run == 1

    def test_same_seed_same_history(self):
        cfg = micro_config(dropout=0.2)
        train = tiny_dataset(10, cfg=cfg)
        val = tiny_dataset(3, seed=5, cfg=cfg)
        settings = TrainSettings(lr=1e-3, epochs=3, batch_size=4,
                                 patience=10, seed=7)
        _, r1 = fit(init_params(cfg), cfg, train, val, settings,
                    log=lambda m: None)
        _, r2 = fit(init_params(cfg), cfg, train, val, settings,
                    log=lambda m: None)
        assert r1.train_loss == r2.train_loss
        assert r1.val_mse == r2.val_mse

    def test_empty_train_set_rejected(self):
        cfg = micro_config()
        stats = NormStats(np.zeros(1), np.ones(1))
        empty = WindowedDataset(np.zeros((0, 8, 1)), np.zeros((0, 4, 1)),
                                "train", stats)
        with pytest.raises(DataError):
            fit(init_params(cfg), cfg, empty, empty,
                TrainSettings(epochs=1), log=lambda m: None)

    def test_nonfinite_loss_reported_with_position(self):
        cfg = micro_config()
        train = tiny_dataset(4, cfg=cfg)
        params = init_params(cfg)
        params.head_bias.data = np.full_like(params.head_bias.data, 1e200)
        settings = TrainSettings(lr=1e-4, epochs=2, batch_size=2,
                                 patience=5, seed=0)
        with np.errstate(over="ignore"):
            with pytest.raises(TrainingError, match="epoch 0, step 0"):
                fit(params, cfg, train, train, settings, log=lambda m: None)

    def test_best_epoch_weights_restored(self):
        cfg = micro_config()
        train = tiny_dataset(10, seed=3, cfg=cfg)
        val = tiny_dataset(4, seed=4, cfg=cfg)
        settings = TrainSettings(lr=1e-2, epochs=6, batch_size=4,
                                 patience=10, seed=1)
        params, report = fit(init_params(cfg), cfg, train, val, settings,
                             log=lambda m: None)
        best = min(range(len(report.val_mse)), key=report.val_mse.__getitem__)
        assert report.best_epoch == best
        # returned weights reproduce the recorded best validation score
        result = evaluate(params, cfg, val)
        assert result.mse == pytest.approx(report.val_mse[best], rel=1e-12)

    def test_validation_does_not_touch_weights(self):
        cfg = micro_config()
        val = tiny_dataset(4, cfg=cfg)
        params = init_params(cfg)
        before = {k: v.data.copy()
                  for k, v in params.named_parameters().items()}
        evaluate(params, cfg, val)
        for k, v in params.named_parameters().items():
            np.testing.assert_array_equal(v.data, before[k])
            assert v.grad is None

    def test_report_json_fields(self):
        cfg = micro_config()
        train = tiny_dataset(4, cfg=cfg)
        _, report = fit(init_params(cfg), cfg, train, train,
                        TrainSettings(epochs=1, seed=2), log=lambda m: None)
        payload = report.to_json_dict()
        assert "wall_clock_seconds" not in payload
        assert payload["seed"] == 2
        assert payload["config"]["channels"] == 1
        assert report.wall_clock_seconds >= 0.0


class TestEvaluate:
    def test_empty_dataset_rejected(self):
        cfg = micro_config()
        stats = NormStats(np.zeros(1), np.ones(1))
        empty = WindowedDataset(np.zeros((0, 8, 1)), np.zeros((0, 4, 1)),
                                "test", stats)
        with pytest.raises(DataError):
            evaluate(init_params(cfg), cfg, empty)

    def test_matches_manual_forward(self):
        cfg = micro_config()
        ds = tiny_dataset(5, seed=9, cfg=cfg)
        params = init_params(cfg)
        result = evaluate(params, cfg, ds)
        fc = forward(ds.inputs, params, cfg)
        err = fc.values.data - ds.targets
        assert result.mse == pytest.approx(float(np.mean(err ** 2)))
        assert result.mae == pytest.approx(float(np.mean(np.abs(err))))
        assert result.num_windows == 5
        assert np.isfinite(result.alpha_mean)

    def test_batching_invariant(self):
        cfg = micro_config()
        ds = tiny_dataset(7, seed=10, cfg=cfg)
        params = init_params(cfg)
        a = evaluate(params, cfg, ds, batch_size=2)
        b = evaluate(params, cfg, ds, batch_size=64)
        assert a.mse == pytest.approx(b.mse, rel=1e-12)
        assert a.mae == pytest.approx(b.mae, rel=1e-12)
