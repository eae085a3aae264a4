import numpy as np
import pytest

import cpmetric.data as data
import cpmetric.encoding as encoding
import cpmetric.nn as nn


def small_batch(n, size, seed):
    rng = np.random.default_rng(seed)
    lap_dim, cpt_dim = encoding.feature_dims(n)
    return {
        "lap_a": rng.normal(size=(size, lap_dim)),
        "cpt_a": rng.integers(0, 2, (size, cpt_dim)).astype(float),
        "lap_b": rng.normal(size=(size, lap_dim)),
        "cpt_b": rng.integers(0, 2, (size, cpt_dim)).astype(float),
    }


def numeric_gradients(value_fn, params, eps=1e-5):
    out = {}
    for key, arr in params.items():
        grad = np.zeros_like(arr)
        flat, gflat = arr.ravel(), grad.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = value_fn()
            flat[idx] = orig - eps
            down = value_fn()
            flat[idx] = orig
            gflat[idx] = (up - down) / (2 * eps)
        out[key] = grad
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for key in analytic:
        a, b = analytic[key], numeric[key]
        denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
        rel = np.abs(a - b) / denom
        rel[(np.abs(a) < 1e-12) & (np.abs(b) < 1e-12)] = 0.0
        worst = max(worst, float(rel.max()))
    return worst


@pytest.fixture(scope="module")
def tiny_dataset():
    return data.build_dataset(
        data.GenConfig(n=3, count=30, seed=5), folds=1, p=0.5, m=10,
        ordered=False, train_fraction=0.8,
    )


class TestLayerSpec:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            nn.LayerSpec(0, 4, "relu")

    def test_rejects_unknown_activation(self):
        with pytest.raises(ValueError):
            nn.LayerSpec(4, 4, "tanh")


class TestForward:
    def test_softmax_sums_to_one(self):
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=0)
        out = nn.forward(model, small_batch(3, 6, 0))
        assert out.shape == (6, 10)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_zero_weight_classifier_is_uniform(self):
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=0)
        model.store.flat[:] = 0.0
        out = nn.forward(model, small_batch(3, 4, 1))
        assert np.allclose(out, 0.1)

    def test_regression_output_in_open_interval(self):
        model = nn.build_model(3, nn.REGRESSION, seed=0)
        out = nn.forward(model, small_batch(3, 6, 2))
        assert out.shape == (6, 1)
        assert ((out > 0.0) & (out < 1.0)).all()

    def test_swapped_pair_output_differs(self):
        # concatenation order matters; recorded, not asserted equal
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=0)
        batch = small_batch(3, 4, 3)
        swapped = {
            "lap_a": batch["lap_b"], "cpt_a": batch["cpt_b"],
            "lap_b": batch["lap_a"], "cpt_b": batch["cpt_a"],
        }
        out = nn.forward(model, batch)
        out_swapped = nn.forward(model, swapped)
        assert not np.allclose(out, out_swapped)

    def test_dimension_mismatch(self):
        model = nn.build_model(4, nn.CLASSIFICATION, m=10, seed=0)
        with pytest.raises(ValueError, match="expected"):
            nn.forward(model, small_batch(3, 4, 4))


class TestLoss:
    def test_perfect_one_hot_cross_entropy(self):
        out = np.zeros((3, 10))
        out[np.arange(3), [2, 5, 7]] = 1.0
        assert nn.loss(nn.CLASSIFICATION, out, [2, 5, 7]) == 0.0

    def test_uniform_cross_entropy(self):
        out = np.full((4, 10), 0.1)
        assert nn.loss(nn.CLASSIFICATION, out, [0, 3, 6, 9]) == pytest.approx(
            np.log(10.0)
        )

    def test_regression_exact(self):
        out = np.array([[0.25], [0.5]])
        assert nn.loss(nn.REGRESSION, out, [0.25, 0.5]) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.loss(nn.REGRESSION, np.zeros((3, 1)), [0.1, 0.2])


class TestGradients:
    def test_classification_backprop_matches_finite_differences(self):
        model = nn.build_model(
            3, nn.CLASSIFICATION, m=10, enc_hidden=(16, 8), head_hidden=(12,),
            seed=1,
        )
        batch = small_batch(3, 5, 7)
        target = np.array([1, 0, 9, 4, 4])
        _, grads = nn.backward(model, batch, target)
        numeric = numeric_gradients(
            lambda: nn.backward(model, batch, target)[0], model.params
        )
        assert max_relative_error(grads, numeric) <= 1e-4

    def test_regression_backprop_matches_finite_differences(self):
        model = nn.build_model(
            3, nn.REGRESSION, enc_hidden=(16, 8), head_hidden=(12,), seed=2
        )
        batch = small_batch(3, 5, 8)
        target = np.array([0.1, 0.9, 0.4, 0.5, 0.2])
        _, grads = nn.backward(model, batch, target)
        numeric = numeric_gradients(
            lambda: nn.backward(model, batch, target)[0], model.params
        )
        assert max_relative_error(grads, numeric) <= 1e-4

    @pytest.mark.parametrize("kind", [nn.SEPARATE, nn.SIAMESE])
    def test_autoencoder_backprop_matches_finite_differences(self, kind):
        ae = nn.build_autoencoder(
            3, kind, enc_hidden=(16, 8), dec_hidden=(12,), seed=3
        )
        rng = np.random.default_rng(9)
        lap = rng.normal(size=(5, 9))
        cpt = rng.integers(0, 2, (5, 12)).astype(float)
        _, grads = nn.autoencoder_backward(ae, lap, cpt)
        numeric = numeric_gradients(
            lambda: nn.autoencoder_backward(ae, lap, cpt)[0], ae.params
        )
        assert max_relative_error(grads, numeric) <= 1e-4

    def test_zero_gradient_at_regression_optimum(self):
        # a memorized sample: output equals the target exactly
        model = nn.build_model(
            3, nn.REGRESSION, enc_hidden=(8, 4), head_hidden=(6,), seed=4
        )
        batch = small_batch(3, 1, 10)
        target = nn.forward(model, batch)[:, 0]
        _, grads = nn.backward(model, batch, target)
        assert all(np.allclose(g, 0.0, atol=1e-15) for g in grads.values())

    def test_shared_weights_touched_by_both_branches(self):
        model = nn.build_model(
            3, nn.CLASSIFICATION, m=10, enc_hidden=(8, 4), head_hidden=(6,),
            seed=5,
        )
        base = small_batch(3, 2, 11)
        target = np.array([0, 1])

        def encoder_grads(batch):
            _, grads = nn.backward(model, batch, target)
            return {
                k: v for k, v in grads.items() if k.startswith("enc_")
            }

        perturbed_a = {k: v.copy() for k, v in base.items()}
        perturbed_a["lap_a"] = perturbed_a["lap_a"] + 0.5
        perturbed_b = {k: v.copy() for k, v in base.items()}
        perturbed_b["lap_b"] = perturbed_b["lap_b"] + 0.5
        ga = encoder_grads(perturbed_a)
        gb = encoder_grads(perturbed_b)
        g0 = encoder_grads(base)
        touched_a = {k for k in ga if not np.allclose(ga[k], g0[k])}
        touched_b = {k for k in gb if not np.allclose(gb[k], g0[k])}
        assert touched_a and touched_a == touched_b


class TestAdam:
    def test_zero_gradient_is_identity(self):
        params = {"w": np.ones(4)}
        state = nn.adam_init(params)
        cfg = nn.TrainConfig()
        nn.adam_step(params, {"w": np.zeros(4)}, state, cfg, t=1)
        assert np.array_equal(params["w"], np.ones(4))

    def test_first_step_is_signed_learning_rate(self):
        cfg = nn.TrainConfig(learning_rate=0.01)
        params = {"w": np.zeros(3)}
        state = nn.adam_init(params)
        g = np.array([0.5, -2.0, 1e-3])
        nn.adam_step(params, {"w": g}, state, cfg, t=1)
        assert np.allclose(params["w"], -0.01 * np.sign(g), rtol=1e-4)

    def test_quadratic_convergence(self):
        # minimize f(w) = ||w - 3||^2 in 2d; after the warmup the loss
        # falls monotonically (larger steps overshoot near the optimum)
        cfg = nn.TrainConfig(learning_rate=0.02)
        params = {"w": np.zeros(2)}
        state = nn.adam_init(params)
        losses = []
        for t in range(1, 201):
            g = 2.0 * (params["w"] - 3.0)
            losses.append(float(((params["w"] - 3.0) ** 2).sum()))
            nn.adam_step(params, {"w": g}, state, cfg, t)
        assert losses[-1] < losses[0] / 10
        tail = losses[50:]
        assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))

    def test_flat_step_matches_dict_step(self):
        model = nn.build_model(
            3, nn.CLASSIFICATION, m=10, enc_hidden=(8, 4), head_hidden=(6,),
            seed=6,
        )
        batch = small_batch(3, 4, 12)
        target = np.array([0, 1, 2, 3])
        _, grads = nn.backward(model, batch, target)
        cfg = nn.TrainConfig()

        dict_params = {k: v.copy() for k, v in model.params.items()}
        dict_state = nn.adam_init(dict_params)
        nn.adam_step(dict_params, grads, dict_state, cfg, t=1)

        gstore = model.store.like()
        for k, g in grads.items():
            gstore.views[k][...] = g
        m = np.zeros_like(model.store.flat)
        v = np.zeros_like(model.store.flat)
        nn._adam_step_flat(model.store.flat, gstore.flat, m, v, cfg, t=1)
        for k in dict_params:
            assert np.allclose(model.params[k], dict_params[k], atol=1e-12)


class TestTraining:
    def test_deterministic(self, tiny_dataset):
        ds = tiny_dataset
        tr = ds.fold_rows(0, "train")
        cfg = nn.TrainConfig(epochs=3, batch_size=32, seed=7)

        def run():
            model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=7)
            nn.train(model, ds.features[tr], ds.bins[tr], cfg)
            return model.store.flat.copy()

        assert np.array_equal(run(), run())

    def test_loss_decreases(self, tiny_dataset):
        ds = tiny_dataset
        tr = ds.fold_rows(0, "train")
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=8)
        history = nn.train(
            model, ds.features[tr], ds.bins[tr],
            nn.TrainConfig(epochs=12, batch_size=32, seed=8),
        )
        assert history[-1]["train_loss"] < history[0]["train_loss"]

    def test_overfits_small_sample(self, tiny_dataset):
        ds = tiny_dataset
        rows = ds.fold_rows(0, "train")[:100]
        model = nn.build_model(3, nn.REGRESSION, seed=9)
        history = nn.train(
            model, ds.features[rows], ds.y[rows],
            nn.TrainConfig(epochs=200, batch_size=25, seed=9),
        )
        assert history[-1]["train_loss"] < 1e-3

    def test_empty_fold_rejected(self, tiny_dataset):
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=0)
        with pytest.raises(ValueError, match="empty"):
            nn.train(
                model, tiny_dataset.features[:0], tiny_dataset.bins[:0],
                nn.TrainConfig(epochs=1),
            )

    def test_dim_mismatch_rejected(self, tiny_dataset):
        model = nn.build_model(4, nn.CLASSIFICATION, m=10, seed=0)
        with pytest.raises(ValueError, match="width"):
            nn.train(
                model, tiny_dataset.features[:10], tiny_dataset.bins[:10],
                nn.TrainConfig(epochs=1),
            )

    def test_freeze_encoders(self, tiny_dataset):
        ds = tiny_dataset
        tr = ds.fold_rows(0, "train")
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=10)
        before = {k: v.copy() for k, v in model.params.items()}
        nn.train(
            model, ds.features[tr], ds.bins[tr],
            nn.TrainConfig(epochs=2, batch_size=32, seed=10),
            freeze_encoders=True,
        )
        for key in model.params:
            unchanged = np.array_equal(model.params[key], before[key])
            assert unchanged == key.startswith(("enc_lap/", "enc_cpt/"))


class TestAutoencoders:
    def test_memorizes_tiny_set(self):
        # latent at least as wide as the input memorizes 10 samples
        rng = np.random.default_rng(13)
        lap = rng.normal(size=(10, 9))
        cpt = rng.integers(0, 2, (10, 12)).astype(float)
        ae, history, _ = nn.pretrain_autoencoder(
            3, nn.SIAMESE, lap, cpt,
            nn.TrainConfig(epochs=300, batch_size=10, learning_rate=3e-3, seed=13),
        )
        recon_lap, _ = nn.autoencoder_forward(ae, lap, cpt)
        assert float(np.mean((recon_lap - lap) ** 2)) < 1e-3

    def test_best_epoch_weights_retained(self, tiny_dataset):
        ds = tiny_dataset
        tr = ds.fold_rows(0, "train")
        te = ds.fold_rows(0, "test")
        lap, cpt = nn.autoencoder_inputs(ds.features[tr], 3)
        vlap, vcpt = nn.autoencoder_inputs(ds.features[te], 3)
        ae, history, best = nn.pretrain_autoencoder(
            3, nn.SIAMESE, lap, cpt,
            nn.TrainConfig(epochs=8, batch_size=64, seed=14), vlap, vcpt,
        )
        scores = [h["val_loss_lap"] + h["val_loss_cpt"] for h in history]
        assert best["all"] == int(np.argmin(scores)) + 1
        got_lap, got_cpt = nn._component_losses(ae, vlap, vcpt)
        assert got_lap + got_cpt == pytest.approx(min(scores), rel=1e-6)

    def test_separate_variant_components_independent(self):
        rng = np.random.default_rng(15)
        lap = rng.normal(size=(40, 9))
        cpt = rng.integers(0, 2, (40, 12)).astype(float)
        ae, _, best = nn.pretrain_autoencoder(
            3, nn.SEPARATE, lap, cpt,
            nn.TrainConfig(epochs=5, batch_size=20, seed=15),
            val_lap=lap, val_cpt=cpt,
        )
        assert set(best) == {"lap", "cpt"}
        # gradients never mix: perturbing cpt input leaves lap grads unchanged
        g1 = nn.autoencoder_backward(ae, lap[:5], cpt[:5])[1]
        g2 = nn.autoencoder_backward(ae, lap[:5], 1.0 - cpt[:5])[1]
        for key in g1:
            same = np.allclose(g1[key], g2[key])
            if key.startswith(("enc_lap/", "dec_lap/")):
                assert same
        assert any(
            not np.allclose(g1[k], g2[k]) for k in g1 if k.startswith("enc_cpt/")
        )


class TestTransfer:
    def test_transfer_prefix_equals_pretrained(self, tiny_dataset):
        ds = tiny_dataset
        tr = ds.fold_rows(0, "train")
        lap, cpt = nn.autoencoder_inputs(ds.features[tr], 3)
        ae, _, _ = nn.pretrain_autoencoder(
            3, nn.SEPARATE, lap, cpt, nn.TrainConfig(epochs=2, batch_size=64, seed=16)
        )
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=16)
        nn.transfer_weights(nn.encoder_params(ae), model)
        enc_out_model = nn.stack_forward(model.params, "enc_lap", model.enc_lap, lap[:4])
        enc_out_ae = nn.stack_forward(ae.params, "enc_lap", ae.stacks["enc_lap"], lap[:4])
        assert np.array_equal(enc_out_model, enc_out_ae)

    def test_shape_mismatch_rejected(self):
        ae = nn.build_autoencoder(3, nn.SEPARATE, enc_hidden=(16, 8), seed=0)
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=0)
        with pytest.raises(ValueError, match="mismatch|parameter"):
            nn.transfer_weights(nn.encoder_params(ae), model)


class TestPredict:
    def test_classification_returns_bin(self, tiny_dataset):
        lib = tiny_dataset.library
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=17)
        got = nn.predict(model, (lib[0], lib[1]))
        assert isinstance(got, int) and 0 <= got <= 9

    def test_regression_returns_open_unit_scalar(self, tiny_dataset):
        lib = tiny_dataset.library
        model = nn.build_model(3, nn.REGRESSION, seed=18)
        got = nn.predict(model, (lib[0], lib[1]))
        assert isinstance(got, float) and 0.0 < got < 1.0

    def test_n_mismatch(self, tiny_dataset):
        lib = tiny_dataset.library
        model = nn.build_model(4, nn.CLASSIFICATION, m=10, seed=19)
        with pytest.raises(ValueError, match="n="):
            nn.predict(model, (lib[0], lib[1]))


class TestCheckpoint:
    def test_round_trip(self, tmp_path, tiny_dataset):
        ds = tiny_dataset
        tr = ds.fold_rows(0, "train")
        model = nn.build_model(3, nn.CLASSIFICATION, m=10, seed=20)
        nn.train(
            model, ds.features[tr], ds.bins[tr],
            nn.TrainConfig(epochs=1, batch_size=64, seed=20),
        )
        path = tmp_path / "model.ckpt"
        nn.save_model(model, path)
        loaded = nn.load_model(path)
        assert loaded.n == 3 and loaded.mode == nn.CLASSIFICATION and loaded.m == 10
        for key in model.params:
            assert np.array_equal(
                model.params[key].astype(np.float32), loaded.params[key].astype(np.float32)
            )
        # same predictions at float32 precision
        batch = small_batch(3, 4, 21)
        got = nn.forward(loaded, batch)
        want = nn.forward(model, batch)
        assert np.allclose(got, want, atol=1e-6)

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError, match="checkpoint"):
            nn.load_model(path)

    def test_history_csv(self, tmp_path):
        history = [
            {"epoch": 1, "train_loss": 0.5, "val_loss": 0.6},
            {"epoch": 2, "train_loss": 0.4, "val_loss": 0.55},
        ]
        path = tmp_path / "history.csv"
        nn.write_history_csv(history, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 3
