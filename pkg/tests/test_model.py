import copy

import numpy as np
import pytest

from implicitrl import features as feat
from implicitrl import model as mdl


def tiny_config():
    return mdl.ModelConfig(window=1, fau_dim=6, head_dim=5, fau_enc=8, head_enc=4,
                           trunk=(10, 6), dropout=0.5)


def tiny_batch(config, n=12, seed=0):
    rng = np.random.default_rng(seed)
    x_fau = rng.normal(size=(n, config.fau_in))
    x_head = rng.normal(size=(n, config.head_in))
    y = np.zeros((n, 3))
    y[np.arange(n), rng.integers(3, size=n)] = 1
    y_bin = np.stack([1 - y[:, 2], y[:, 2]], axis=1)
    aux = rng.normal(size=(n, config.aux_dim))
    return x_fau, x_head, y, y_bin, aux


def test_forward_shapes_and_prob_simplex():
    config = tiny_config()
    params = mdl.init_params(config, seed=0)
    x_fau, x_head, *_ = tiny_batch(config)
    pred, _ = mdl.forward(params, config, x_fau, x_head, train=False)
    assert pred.z.shape == (12, 3)
    assert pred.probs.shape == (12, 3)
    assert pred.bin_probs.shape == (12, 2)
    assert np.allclose(pred.probs.sum(axis=1), 1)
    assert np.allclose(pred.bin_probs.sum(axis=1), 1)
    assert pred.o.shape == (12, config.aux_dim)


def test_forward_rejects_wrong_widths():
    config = tiny_config()
    params = mdl.init_params(config, seed=0)
    with pytest.raises(ValueError):
        mdl.forward(params, config, np.zeros((2, 5)), np.zeros((2, config.head_in)),
                    train=False)


def test_binary_logits_are_logsumexp_of_class_logits():
    # z_bin = (logsumexp(z_-5, z_-1), z_+6) exactly.
    config = tiny_config()
    params = mdl.init_params(config, seed=1)
    x_fau, x_head, *_ = tiny_batch(config, seed=1)
    pred, _ = mdl.forward(params, config, x_fau, x_head, train=False)
    lse = np.log(np.exp(pred.z[:, 0]) + np.exp(pred.z[:, 1]))
    assert np.allclose(pred.z_bin[:, 0], lse)
    assert np.allclose(pred.z_bin[:, 1], pred.z[:, 2])
    # Consequently p_bin(positive) = p(-5) + p(-1) complement.
    assert np.allclose(pred.bin_probs[:, 1], pred.probs[:, 2])
    assert np.allclose(pred.positivity, pred.probs[:, 2])


def test_gradient_matches_finite_differences():
    config = tiny_config()
    tc = mdl.TrainConfig(lam1=2.0, lam2=1.0)
    params = mdl.init_params(config, seed=2)
    x_fau, x_head, y, y_bin, aux = tiny_batch(config, n=6, seed=2)
    masks = mdl.make_dropout_masks(config, 6, np.random.default_rng(0))
    grads, _ = mdl.gradient(params, config, x_fau, x_head, y, y_bin, aux,
                            tc.lam1, tc.lam2, tc.lam_ce, dropout_masks=masks)
    eps = 1e-6
    rng = np.random.default_rng(3)
    for key in mdl.trainable_keys(params):
        flat = params[key].reshape(-1)
        for idx in rng.choice(flat.size, size=min(5, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + eps
            _, up = mdl.gradient(params, config, x_fau, x_head, y, y_bin, aux,
                                 tc.lam1, tc.lam2, tc.lam_ce, dropout_masks=masks)
            flat[idx] = orig - eps
            _, dn = mdl.gradient(params, config, x_fau, x_head, y, y_bin, aux,
                                 tc.lam1, tc.lam2, tc.lam_ce, dropout_masks=masks)
            flat[idx] = orig
            fd = (up["total"] - dn["total"]) / (2 * eps)
            g = grads[key].reshape(-1)[idx]
            rel = abs(fd - g) / max(abs(fd), abs(g), 1e-6)
            # Exactly-zero analytic gradients sit below the noise floor of
            # the central difference itself; accept on absolute agreement.
            assert rel < 1e-4 or abs(fd - g) < 1e-8, \
                f"{key}[{idx}]: fd={fd}, analytic={g}"


def test_dropout_masks_are_inverted():
    config = tiny_config()
    rng = np.random.default_rng(4)
    masks = mdl.make_dropout_masks(config, 2000, rng)
    keep = 1 - config.dropout
    for m in masks:
        vals = np.unique(m)
        assert set(np.round(vals, 10)) <= {0.0, round(1 / keep, 10)}
        # E[mask] = 1 so activations keep their scale in expectation.
        assert m.mean() == pytest.approx(1.0, abs=0.05)


def test_dropout_off_at_eval():
    config = tiny_config()
    params = mdl.init_params(config, seed=5)
    x_fau, x_head, *_ = tiny_batch(config, seed=5)
    a, _ = mdl.forward(params, config, x_fau, x_head, train=False)
    b, _ = mdl.forward(params, config, x_fau, x_head, train=False)
    assert np.array_equal(a.z, b.z)


def test_batchnorm_train_uses_batch_statistics():
    config = tiny_config()
    params = mdl.init_params(config, seed=6)
    before = {k: v.copy() for k, v in params.items() if k.endswith(("_rmean", "_rvar"))}
    x_fau, x_head, y, y_bin, aux = tiny_batch(config, n=8, seed=6)
    masks = [np.ones_like(m) for m in mdl.make_dropout_masks(config, 8, np.random.default_rng(0))]
    mdl.gradient(params, config, x_fau, x_head, y, y_bin, aux, 2.0, 1.0, 1.0,
                 dropout_masks=masks, update_running=True)
    after = {k: params[k] for k in before}
    assert any(not np.allclose(before[k], after[k]) for k in before)


def test_loss_terms_components():
    config = tiny_config()
    params = mdl.init_params(config, seed=7)
    x_fau, x_head, y, y_bin, aux = tiny_batch(config, seed=7)
    pred, _ = mdl.forward(params, config, x_fau, x_head, train=False)
    terms = mdl.loss_terms(pred, y, y_bin, aux, lam1=2.0, lam2=1.0, lam_ce=1.0)
    ce3 = -np.mean(np.log(pred.probs[y.astype(bool)]))
    ce_bin = -np.mean(np.log(pred.bin_probs[y_bin.astype(bool)]))
    aux_term = np.mean(np.linalg.norm(pred.o - aux, axis=1))
    assert terms["ce3"] == pytest.approx(ce3)
    assert terms["ce_bin"] == pytest.approx(ce_bin)
    assert terms["aux"] == pytest.approx(aux_term)
    assert terms["total"] == pytest.approx(ce3 + 2 * ce_bin + aux_term)
    binary = mdl.loss_terms(pred, y, y_bin, aux, lam1=2.0, lam2=1.0, lam_ce=0.0)
    assert binary["total"] == pytest.approx(2 * ce_bin + aux_term)


def make_dataset(config, n, seed):
    x_fau, x_head, y, y_bin, aux = tiny_batch(config, n=n, seed=seed)
    meta = [{"subject": "s0", "episode": 0, "half": 0, "tick": i,
             "agg_frame": i, "reward": int(feat.CLASS_ORDER[y[i].argmax()])}
            for i in range(n)]
    return feat.Dataset(x_fau, x_head, y, y_bin, aux, meta, k=0, l=0)


def test_training_reduces_loss_and_is_deterministic():
    config = tiny_config()
    tc = mdl.TrainConfig(seed=0, max_epochs=15, patience=15, dropout=0.5, trunk=(10, 6))
    train_data = make_dataset(config, 64, seed=8)
    test_data = make_dataset(config, 32, seed=9)
    p1, h1 = mdl.train(tc, train_data, test_data, config=config)
    p2, h2 = mdl.train(tc, train_data, test_data, config=config)
    assert h1["train"] == h2["train"]
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)
    assert h1["train"][-1] < h1["train"][0]


def test_early_stopping_returns_best_epoch_params():
    config = tiny_config()
    tc = mdl.TrainConfig(seed=1, max_epochs=20, patience=3, dropout=0.5, trunk=(10, 6))
    train_data = make_dataset(config, 48, seed=10)
    test_data = make_dataset(config, 24, seed=11)
    params, hist = mdl.train(tc, train_data, test_data, config=config)
    metrics = [mdl.early_stop_metric(t, tc) for t in hist["test"]]
    assert hist["best_epoch"] == int(np.argmin(metrics)) + 1
    got = mdl.evaluate(params, config, test_data, tc)
    assert got["ce3"] == pytest.approx(min(metrics))


def test_divergence_raises():
    config = tiny_config()
    tc = mdl.TrainConfig(seed=2, max_epochs=5, dropout=0.5, trunk=(10, 6))
    train_data = make_dataset(config, 48, seed=12)
    train_data.x_fau[0, 0] = np.nan
    with pytest.raises(mdl.DivergenceError):
        mdl.train(tc, train_data, train_data, config=config)


def test_checkpoint_round_trip(tmp_path):
    config = tiny_config()
    params = mdl.init_params(config, seed=13)
    path = str(tmp_path / "m.npz")
    mdl.save_checkpoint(path, params, config, mdl.TrainConfig())
    back, cfg, tc = mdl.load_checkpoint(path)
    assert cfg == config
    assert all(np.array_equal(back[k], params[k]) for k in params)
    assert tc["batch_size"] == 8


def test_checkpoint_version_and_shape_validation(tmp_path):
    config = tiny_config()
    params = mdl.init_params(config, seed=14)
    path = str(tmp_path / "m.npz")
    mdl.save_checkpoint(path, params, config)
    import json

    z = dict(np.load(path, allow_pickle=False))
    header = json.loads(str(z["__header"]))
    header["version"] = "other"
    z["__header"] = json.dumps(header)
    bad = str(tmp_path / "bad.npz")
    np.savez(bad, **z)
    with pytest.raises(mdl.CheckpointError, match="version"):
        mdl.load_checkpoint(bad)

    z2 = dict(np.load(path, allow_pickle=False))
    first = [k for k in z2 if k != "__header"][0]
    z2[first] = np.zeros((1, 1))
    bad2 = str(tmp_path / "bad2.npz")
    np.savez(bad2, **z2)
    with pytest.raises(mdl.CheckpointError, match="shape"):
        mdl.load_checkpoint(bad2)


def test_random_search_picks_lowest_mean_loss():
    # random_search builds the model from TrainConfig, which pins the
    # default input widths, so the fold data must be full width.
    config = mdl.ModelConfig(trunk=(10, 6), dropout=0.5)
    folds = [{"train": make_dataset(config, 40, seed=15),
              "test": make_dataset(config, 20, seed=16)}]
    space = {"learning_rate": [0.001, 0.003], "dropout": [0.5],
             "trunk": [(10, 6)]}
    best, results = mdl.random_search(space, n_draws=3, folds=folds, seed=0,
                                      max_epochs=4)
    assert len(results) == 3
    assert best.learning_rate in space["learning_rate"]
    losses = [r["mean_test_loss"] for r in results]
    chosen = [r for r in results if r["config"] is best][0]
    assert chosen["mean_test_loss"] == min(losses)


def test_default_architecture_dimensions():
    config = mdl.ModelConfig()
    assert config.fau_in == 455
    assert config.head_in == 702
    assert config.aux_dim == 130
    assert config.trunk == (128, 128, 64, 8)
    params = mdl.init_params(config, seed=0)
    assert params["fau_W"].shape == (455, 64)
    assert params["head_W"].shape == (702, 32)
    assert params["out_W"].shape == (8, 3)
