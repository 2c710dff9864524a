"""Recurrent weekly surrogate: cell math, backprop, training, persistence."""

import math
from dataclasses import replace

import numpy as np
import pytest

from flockplan.dataset import GeneratorConfig, partition_weeks
from flockplan.domain import Bounds
from flockplan.errors import (
    ConfigDomain,
    DimensionMismatch,
    Diverged,
    OutOfRange,
    SchemaVersionError,
    ShapeError,
    ZeroVariance,
)
from flockplan.surrogate import (
    INPUT_SIZE,
    PRODUCTION_HP,
    Hyperparams,
    LstmLayerParams,
    WeekModel,
    _init_model,
    cell_step,
    dsoftsign,
    evaluate_r2,
    forward_week,
    forward_week_many,
    load_week_models,
    model_from_json,
    model_to_json,
    relu,
    save_week_models,
    softsign,
    train_week_model,
    training_loss_and_grads,
)


def _layer(hidden, inputs, rng=None, scale=0.3):
    if rng is None:
        arr = lambda *s: np.zeros(s)
    else:
        arr = lambda *s: scale * rng.standard_normal(s)
    return LstmLayerParams(
        w_xf=arr(hidden, inputs), w_xi=arr(hidden, inputs),
        w_xj=arr(hidden, inputs), w_xo=arr(hidden, inputs),
        w_hf=arr(hidden, hidden), w_hi=arr(hidden, hidden),
        w_hj=arr(hidden, hidden), w_ho=arr(hidden, hidden),
        b_f=arr(hidden), b_i=arr(hidden), b_j=arr(hidden), b_o=arr(hidden),
    )


def _toy_bounds(week_len):
    length = 7 * week_len + 3
    return Bounds(np.zeros(length), np.ones(length))


def _toy_model(week_len=2, hidden=2, layers=2, seed=3):
    hp = Hyperparams(hidden_layers=layers, hidden_size=hidden, seed=seed)
    return _init_model(0, week_len, _toy_bounds(week_len), hp)


class TestActivations:
    def test_softsign_values(self):
        assert softsign(0.0) == 0.0
        assert softsign(1.0) == 0.5
        assert softsign(-3.0) == -0.75

    def test_softsign_bounded(self):
        z = np.linspace(-50, 50, 101)
        out = softsign(z)
        assert np.all(np.abs(out) < 1.0)
        assert np.all(np.diff(out) > 0)

    def test_derivative_matches_finite_difference(self):
        for z in (-2.0, -0.3, 0.4, 5.0):
            eps = 1e-6
            num = (softsign(z + eps) - softsign(z - eps)) / (2 * eps)
            assert dsoftsign(z) == pytest.approx(num, rel=1e-6)

    def test_relu_clips_negatives(self):
        assert np.array_equal(relu(np.array([-2.0, 0.0, 3.0])),
                              np.array([0.0, 0.0, 3.0]))


class TestCellStep:
    def test_matches_hand_rolled_equations(self):
        rng = np.random.default_rng(7)
        params = _layer(3, 4, rng)
        x = rng.standard_normal(4)
        h0 = rng.standard_normal(3)
        c0 = rng.standard_normal(3)
        h, c = cell_step(params, x, h0, c0)

        # independent scalar-by-scalar evaluation
        sig = lambda v: 1.0 / (1.0 + math.exp(-v))
        soft = lambda v: v / (1.0 + abs(v))
        for unit in range(3):
            f = sig(params.w_xf[unit] @ x + params.w_hf[unit] @ h0 + params.b_f[unit])
            i = soft(params.w_xi[unit] @ x + params.w_hi[unit] @ h0 + params.b_i[unit])
            j = sig(params.w_xj[unit] @ x + params.w_hj[unit] @ h0 + params.b_j[unit])
            o = sig(params.w_xo[unit] @ x + params.w_ho[unit] @ h0 + params.b_o[unit])
            c_ref = c0[unit] * f + i * j
            h_ref = soft(c_ref) * o
            assert c[unit] == pytest.approx(c_ref, abs=1e-12)
            assert h[unit] == pytest.approx(h_ref, abs=1e-12)

    def test_zero_everything_is_fixed_point(self):
        params = _layer(2, 5)
        h, c = cell_step(params, np.zeros(5), np.zeros(2), np.zeros(2))
        assert np.array_equal(h, np.zeros(2))
        assert np.array_equal(c, np.zeros(2))

    def test_forget_bias_wipes_or_keeps_state(self):
        keep = replace(_layer(2, 3), b_f=np.full(2, 40.0))
        wipe = replace(_layer(2, 3), b_f=np.full(2, -40.0))
        c0 = np.array([1.5, -2.0])
        _, c_keep = cell_step(keep, np.zeros(3), np.zeros(2), c0)
        _, c_wipe = cell_step(wipe, np.zeros(3), np.zeros(2), c0)
        assert c_keep == pytest.approx(c0, rel=1e-12)
        assert np.all(np.abs(c_wipe) < 1e-12)

    def test_dimension_mismatch(self):
        params = _layer(2, 3)
        with pytest.raises(DimensionMismatch):
            cell_step(params, np.zeros(4), np.zeros(2), np.zeros(2))
        with pytest.raises(DimensionMismatch):
            cell_step(params, np.zeros(3), np.zeros(1), np.zeros(2))


class TestLayerValidation:
    def test_mismatched_recurrent_shape(self):
        bad = dict(
            w_xf=np.zeros((2, 3)), w_xi=np.zeros((2, 3)),
            w_xj=np.zeros((2, 3)), w_xo=np.zeros((2, 3)),
            w_hf=np.zeros((2, 2)), w_hi=np.zeros((3, 2)),
            w_hj=np.zeros((2, 2)), w_ho=np.zeros((2, 2)),
            b_f=np.zeros(2), b_i=np.zeros(2), b_j=np.zeros(2), b_o=np.zeros(2),
        )
        with pytest.raises(ShapeError):
            LstmLayerParams(**bad)

    def test_week_model_rejects_wrong_week_len(self):
        m = _toy_model()
        with pytest.raises(ShapeError):
            WeekModel(week_index=1, week_len=2, layers=m.layers,
                      w_out=m.w_out, b_out=m.b_out, bounds=m.bounds)

    def test_week_model_rejects_bad_bounds_length(self):
        m = _toy_model()
        with pytest.raises(ShapeError):
            WeekModel(week_index=0, week_len=2, layers=m.layers,
                      w_out=m.w_out, b_out=m.b_out, bounds=_toy_bounds(3))


class TestHyperparams:
    def test_defaults_are_valid(self):
        hp = Hyperparams()
        assert hp.epochs == 1000 and hp.lr0 == 0.005 and hp.batch_size == 1

    @pytest.mark.parametrize("field,value", [
        ("epochs", 0), ("lr0", 0.0), ("lr_decay", 0.0), ("l2_rate", -1.0),
        ("hidden_layers", 0), ("batch_size", -1), ("first_day_weight", 0.0),
        ("plan_noise", -0.1), ("recycle_noise", -0.1),
        ("gate_activation", "tanh"), ("output_activation", "linear"),
    ])
    def test_rejects_bad_settings(self, field, value):
        with pytest.raises(ConfigDomain):
            Hyperparams(**{field: value})

    def test_production_profiles(self):
        assert len(PRODUCTION_HP) == 6
        assert all(hp.batch_size == 0 for hp in PRODUCTION_HP)
        assert PRODUCTION_HP[5].recycle_noise == 0.0


class TestForwardWeek:
    def test_single_day_equals_cell_chain(self):
        model = _toy_model(week_len=1, hidden=3, layers=2, seed=11)
        rng = np.random.default_rng(5)
        v = rng.uniform(0.05, 0.95, model.input_length)
        pred = forward_week(model, v)

        x = np.concatenate([v[:7], v[7:10]])
        inp = x
        for layer in model.layers:
            h, _ = cell_step(layer, inp, np.zeros(layer.hidden_size),
                             np.zeros(layer.hidden_size))
            inp = h
        y = relu(model.w_out @ inp + model.b_out)
        assert pred.normalized[0] == pytest.approx(y, abs=1e-12)
        maxi, mini = model.output_bounds
        assert pred.last == pytest.approx(y * (maxi - mini) + mini, abs=1e-12)

    def test_zero_output_head_predicts_lower_bound(self):
        model = _toy_model(week_len=2)
        model.w_out[:] = 0.0
        model.b_out[:] = 0.0
        v = np.full(model.input_length, 0.4)
        pred = forward_week(model, v)
        _, mini = model.output_bounds
        assert np.allclose(pred.trajectory, np.tile(mini, (2, 1)))

    def test_strict_mode_rejects_out_of_bounds(self):
        model = _toy_model(week_len=1)
        v = np.full(model.input_length, 0.5)
        v[3] = 1.7
        with pytest.raises(OutOfRange):
            forward_week(model, v, mode="strict")
        pred = forward_week(model, v, mode="clamp")
        assert np.all(np.isfinite(pred.normalized))

    def test_batch_matches_single(self):
        model = _toy_model(week_len=2, seed=9)
        rng = np.random.default_rng(1)
        rows = rng.uniform(0.1, 0.9, (4, model.input_length))
        last, traj = forward_week_many(model, rows)
        for k in range(4):
            single = forward_week(model, rows[k])
            assert last[k] == pytest.approx(single.last, abs=1e-12)
            assert traj[k] == pytest.approx(single.normalized, abs=1e-12)

    def test_wrong_length_raises(self):
        model = _toy_model(week_len=2)
        with pytest.raises(DimensionMismatch):
            forward_week(model, np.zeros(model.input_length + 1))


class TestGradients:
    def _check(self, cw=None, dw=None, rn=None, l2=0.01):
        model = _toy_model(week_len=2, hidden=2, layers=2, seed=3)
        rng = np.random.default_rng(17)
        vn = rng.uniform(0.1, 0.9, (3, model.input_length))
        tn = rng.uniform(0.2, 0.8, (3, 2 * 3))
        loss, grads = training_loss_and_grads(model, vn, tn, l2, cw, dw, rn)
        assert np.isfinite(loss)

        worst = 0.0
        from flockplan.surrogate import _all_tensors
        for name, arr in _all_tensors(model):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                orig = arr[ix]
                eps = 1e-5
                arr[ix] = orig + eps
                lp, _ = training_loss_and_grads(model, vn, tn, l2, cw, dw, rn)
                arr[ix] = orig - eps
                lm, _ = training_loss_and_grads(model, vn, tn, l2, cw, dw, rn)
                arr[ix] = orig
                num = (lp - lm) / (2 * eps)
                ana = grads[name][ix]
                rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
                worst = max(worst, rel)
        return worst

    def test_analytic_gradients_match_central_differences(self):
        assert self._check() < 1e-4

    def test_gradients_with_weighting_and_jitter(self):
        rng = np.random.default_rng(23)
        cw = np.array([1.4, 0.9, 0.7])
        dw = np.array([1.6, 0.4])
        rn = 0.1 * rng.standard_normal((3, 1, 3))
        assert self._check(cw=cw, dw=dw, rn=rn) < 1e-4

    def test_recycling_path_carries_gradient(self):
        # silencing the day-2 error must still leave day-1 parameters with
        # gradient through the recycled outputs; and a day-weight of zero on
        # day 1 must not zero them either
        model = _toy_model(week_len=2, hidden=2, layers=1, seed=5)
        rng = np.random.default_rng(2)
        vn = rng.uniform(0.1, 0.9, (2, model.input_length))
        tn = rng.uniform(0.2, 0.8, (2, 6))
        dw = np.array([0.0, 2.0])  # only the second day is scored
        _, grads = training_loss_and_grads(model, vn, tn, 0.0, None, dw)
        assert np.abs(grads["l0.w_xf"]).max() > 0


class TestTraining:
    def _toy_dataset(self, n=24, seed=0):
        # targets respond linearly to the two days' average-temperature
        # columns; seed slots vary but carry no signal
        rng = np.random.default_rng(seed)
        length = 7 * 2 + 3
        inputs = np.full((n, length), 0.5)
        inputs[:, 7:10] = rng.uniform(0.3, 0.7, (n, 3))
        c1, c2 = 2, 12
        inputs[:, c1] = rng.uniform(0.1, 0.9, n)
        inputs[:, c2] = rng.uniform(0.1, 0.9, n)
        t1 = 0.25 + 0.5 * inputs[:, c1]
        t2 = 0.25 + 0.25 * inputs[:, c1] + 0.25 * inputs[:, c2]
        targets = np.stack([t1, t1, t1, t2, t2, t2], axis=1)
        return inputs, targets

    def test_learns_plan_response(self):
        inputs, targets = self._toy_dataset()
        hp = Hyperparams(seed=1, batch_size=0, lr0=0.05, epochs=3000,
                         decay_every=1000, l2_rate=0.0)
        model = train_week_model((inputs[:20], targets[:20]), hp,
                                 bounds=_toy_bounds(2))
        r2 = evaluate_r2(model, (inputs[20:], targets[20:]))
        assert min(r2) > 0.85

    def test_training_is_deterministic(self):
        inputs, targets = self._toy_dataset(n=8)
        hp = Hyperparams(seed=4, batch_size=0, lr0=0.02, epochs=120,
                         plan_noise=0.05, recycle_noise=0.05)
        a = train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))
        b = train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))
        assert model_to_json(a) == model_to_json(b)

    def test_minibatch_path_runs(self):
        inputs, targets = self._toy_dataset(n=8)
        hp = Hyperparams(seed=4, batch_size=3, lr0=0.01, epochs=60)
        model = train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))
        assert model.training_meta["epochs"] == 60

    def test_divergence_detected(self):
        inputs, targets = self._toy_dataset(n=8)
        hp = Hyperparams(seed=4, batch_size=0, lr0=500.0, epochs=4000)
        with np.errstate(over="ignore"), pytest.raises(Diverged):
            train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))

    def test_meta_records_training(self):
        inputs, targets = self._toy_dataset(n=8)
        hp = Hyperparams(seed=4, batch_size=0, lr0=0.02, epochs=120,
                         channel_balance=True)
        model = train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))
        meta = model.training_meta
        assert meta["epochs"] == 120
        assert meta["final_loss"] == meta["loss_curve"][-1] or meta["final_loss"] > 0
        assert meta["restarts"] >= 0
        cw = meta["channel_weights"]
        assert cw is not None and np.mean(cw) == pytest.approx(1.0, abs=1e-6)

    def test_derives_bounds_from_data_when_omitted(self, corpus):
        weekly = partition_weeks(corpus)
        model = train_week_model(
            weekly[0], Hyperparams(seed=4, batch_size=0, lr0=0.02, epochs=10)
        )
        assert model.bounds.mini[0] == 1.0 and model.bounds.maxi[0] == 40.0
        targets = weekly[0].targets.reshape(12, -1, 3)
        maxi, _ = model.output_bounds
        assert np.all(maxi >= targets.max(axis=(0, 1)))


class TestEvaluate:
    def test_training_fit_scores_high(self):
        inputs, targets = TestTraining()._toy_dataset(n=16)
        hp = Hyperparams(seed=1, batch_size=0, lr0=0.05, epochs=4000,
                         decay_every=1200, l2_rate=0.0)
        model = train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))
        r2 = evaluate_r2(model, (inputs, targets))
        assert min(r2) > 0.9

    def test_constant_targets_raise(self):
        model = _toy_model(week_len=2)
        inputs = np.full((4, model.input_length), 0.5)
        targets = np.full((4, 6), 0.3)
        with pytest.raises(ZeroVariance):
            evaluate_r2(model, (inputs, targets))

    def test_empty_test_set_raises(self):
        model = _toy_model(week_len=2)
        with pytest.raises(ZeroVariance):
            evaluate_r2(model, (np.zeros((0, 17)), np.zeros((0, 6))))


class TestPersistence:
    def test_json_roundtrip_is_exact(self):
        inputs, targets = TestTraining()._toy_dataset(n=8)
        hp = Hyperparams(seed=4, batch_size=0, lr0=0.02, epochs=60)
        model = train_week_model((inputs, targets), hp, bounds=_toy_bounds(2))
        text = model_to_json(model)
        back = model_from_json(text)
        assert model_to_json(back) == text
        v = np.full(model.input_length, 0.4)
        assert forward_week(back, v).last == pytest.approx(
            forward_week(model, v).last, abs=0)

    def test_version_guard(self):
        text = model_to_json(_toy_model()).replace(
            '"schema_version": 1', '"schema_version": 9')
        with pytest.raises(SchemaVersionError):
            model_from_json(text)

    def test_kind_guard(self):
        text = model_to_json(_toy_model()).replace(
            '"kind": "week-model"', '"kind": "other"')
        with pytest.raises(SchemaVersionError):
            model_from_json(text)

    def test_directory_roundtrip_sorted_by_week(self, tmp_path, corpus):
        weekly = partition_weeks(corpus)
        hp = Hyperparams(seed=4, batch_size=0, lr0=0.02, epochs=10)
        models = [train_week_model(weekly[w], hp) for w in (5, 0)]
        save_week_models(models, tmp_path / "models")
        back = load_week_models(tmp_path / "models")
        assert [m.week_index for m in back] == [1, 6]
        assert model_to_json(back[1]) == model_to_json(models[0])
