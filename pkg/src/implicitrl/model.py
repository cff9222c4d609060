"""Reaction model: window features -> reward-class distribution.

A fixed-architecture MLP with separate FAU and head-motion encoders, a
batch-normalized leaky-ReLU trunk with dropout, a 3-class head, a
derived binary (valence) head, and an annotation-prediction auxiliary
head. Implemented directly in numpy with analytic gradients so every
parameter is finite-difference checkable, trained with Adam and
early stopping on test loss.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import features as feat

CHECKPOINT_VERSION = "reaction-model-v1"


@dataclass
class ModelConfig:
    window: int = feat.DEFAULT_K + feat.DEFAULT_L + 1
    fau_dim: int = feat.N_FAU
    head_dim: int = feat.N_HEAD
    fau_enc: int = 64
    head_enc: int = 32
    trunk: tuple = (128, 128, 64, 8)
    n_classes: int = 3
    aux_block: int = 0          # trunk block whose activation feeds the aux head
    dropout: float = 0.6314
    leaky_slope: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    @property
    def fau_in(self) -> int:
        return self.fau_dim * self.window

    @property
    def head_in(self) -> int:
        return self.head_dim * self.window

    @property
    def aux_dim(self) -> int:
        return feat.N_ANNOTATION * self.window


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 8
    k: int = feat.DEFAULT_K
    l: int = feat.DEFAULT_L
    dropout: float = 0.6314
    lam1: float = 2.0
    lam2: float = 1.0
    lam_ce: float = 1.0          # 0 selects the binary-only transfer variant
    max_epochs: int = 60
    patience: int = 15
    seed: int = 0
    trunk: tuple = (128, 128, 64, 8)

    def model_config(self) -> ModelConfig:
        return ModelConfig(window=self.k + self.l + 1, trunk=tuple(self.trunk),
                           dropout=self.dropout)


def _uniform_fan_in(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=(n_in, n_out))


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    p: dict[str, np.ndarray] = {}
    p["fau_W"] = _uniform_fan_in(rng, config.fau_in, config.fau_enc)
    p["fau_b"] = np.zeros(config.fau_enc)
    p["head_W"] = _uniform_fan_in(rng, config.head_in, config.head_enc)
    p["head_b"] = np.zeros(config.head_enc)
    d_in = config.fau_enc + config.head_enc
    for i, width in enumerate(config.trunk):
        p[f"t{i}_W"] = _uniform_fan_in(rng, d_in, width)
        p[f"t{i}_b"] = np.zeros(width)
        p[f"t{i}_gamma"] = np.ones(width)
        p[f"t{i}_beta"] = np.zeros(width)
        p[f"t{i}_rmean"] = np.zeros(width)
        p[f"t{i}_rvar"] = np.ones(width)
        d_in = width
    p["out_W"] = _uniform_fan_in(rng, config.trunk[-1], config.n_classes)
    p["out_b"] = np.zeros(config.n_classes)
    aux_in = config.trunk[config.aux_block]
    p["aux_W"] = _uniform_fan_in(rng, aux_in, config.aux_dim)
    p["aux_b"] = np.zeros(config.aux_dim)
    return p


def trainable_keys(params: dict) -> list[str]:
    return [k for k in params if not (k.endswith("_rmean") or k.endswith("_rvar"))]


def make_dropout_masks(config: ModelConfig, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    keep = 1.0 - config.dropout
    return [(rng.random((batch, w)) < keep) / keep for w in config.trunk]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Prediction:
    z: np.ndarray          # (B, 3) class logits
    probs: np.ndarray      # (B, 3) softmax(z)
    z_bin: np.ndarray      # (B, 2) (logsumexp of negative logits, positive logit)
    bin_probs: np.ndarray  # (B, 2)
    o: np.ndarray          # (B, aux_dim)

    @property
    def positivity(self) -> np.ndarray:
        return self.bin_probs[:, 1]


def forward(params: dict, config: ModelConfig, x_fau: np.ndarray, x_head: np.ndarray,
            train: bool = False, dropout_masks: list[np.ndarray] | None = None,
            rng: np.random.Generator | None = None,
            update_running: bool = False) -> tuple[Prediction, dict]:
    """Run the network. Returns (Prediction, cache for backward).

    Eval mode uses batch-norm running statistics and disables dropout.
    Train mode needs dropout masks (given or drawn from rng).
    """
    x_fau = np.atleast_2d(np.asarray(x_fau, dtype=float))
    x_head = np.atleast_2d(np.asarray(x_head, dtype=float))
    if x_fau.shape[1] != config.fau_in or x_head.shape[1] != config.head_in:
        raise ValueError(f"input widths must be {config.fau_in}/{config.head_in}, "
                         f"got {x_fau.shape[1]}/{x_head.shape[1]}")
    B = x_fau.shape[0]
    if train and dropout_masks is None:
        if rng is None:
            raise ValueError("train mode needs dropout masks or an rng")
        dropout_masks = make_dropout_masks(config, B, rng)

    h = np.concatenate([x_fau @ params["fau_W"] + params["fau_b"],
                        x_head @ params["head_W"] + params["head_b"]], axis=1)
    cache: dict = {"x_fau": x_fau, "x_head": x_head, "h0": h, "blocks": [],
                   "train": train, "masks": dropout_masks}
    for i in range(len(config.trunk)):
        u = h @ params[f"t{i}_W"] + params[f"t{i}_b"]
        if train:
            mu = u.mean(axis=0)
            var = u.var(axis=0)
            if update_running:
                unbiased = var * B / max(B - 1, 1)
                m = config.bn_momentum
                params[f"t{i}_rmean"] = (1 - m) * params[f"t{i}_rmean"] + m * mu
                params[f"t{i}_rvar"] = (1 - m) * params[f"t{i}_rvar"] + m * unbiased
        else:
            mu = params[f"t{i}_rmean"]
            var = params[f"t{i}_rvar"]
        ivar = 1.0 / np.sqrt(var + config.bn_eps)
        xhat = (u - mu) * ivar
        v = params[f"t{i}_gamma"] * xhat + params[f"t{i}_beta"]
        w = np.where(v > 0, v, config.leaky_slope * v)
        out = w * dropout_masks[i] if train else w
        cache["blocks"].append({"h_in": h, "u": u, "xhat": xhat, "ivar": ivar, "v": v,
                                "w": w, "out": out})
        h = out

    z = h @ params["out_W"] + params["out_b"]
    h_aux = cache["blocks"][config.aux_block]["out"]
    o = h_aux @ params["aux_W"] + params["aux_b"]
    neg = np.logaddexp(z[:, 0], z[:, 1])
    z_bin = np.stack([neg, z[:, 2]], axis=1)
    pred = Prediction(z=z, probs=_softmax(z), z_bin=z_bin, bin_probs=_softmax(z_bin), o=o)
    cache["h_last"] = h
    cache["h_aux"] = h_aux
    return pred, cache


def loss_terms(pred: Prediction, y: np.ndarray, y_bin: np.ndarray, aux: np.ndarray,
               lam1: float, lam2: float, lam_ce: float = 1.0) -> dict[str, float]:
    """Mean-over-batch values of the three loss terms and their weighted sum."""
    y = np.atleast_2d(y)
    y_bin = np.atleast_2d(y_bin)
    aux = np.atleast_2d(aux)
    eps = 1e-300
    ce3 = float(-(y * np.log(pred.probs + eps)).sum(axis=1).mean())
    ce_bin = float(-(y_bin * np.log(pred.bin_probs + eps)).sum(axis=1).mean())
    aux_norm = float(np.linalg.norm(aux - pred.o, axis=1).mean())
    total = lam_ce * ce3 + lam1 * ce_bin + lam2 * aux_norm
    return {"ce3": ce3, "ce_bin": ce_bin, "aux": aux_norm, "total": total}


def gradient(params: dict, config: ModelConfig, x_fau, x_head, y, y_bin, aux,
             lam1: float, lam2: float, lam_ce: float = 1.0,
             dropout_masks: list[np.ndarray] | None = None, train: bool = True,
             update_running: bool = False) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """Analytic gradient of the mean batch loss for every trainable
    parameter. The dropout mask is fixed per call for checkability."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    y_bin = np.atleast_2d(np.asarray(y_bin, dtype=float))
    aux = np.atleast_2d(np.asarray(aux, dtype=float))
    if dropout_masks is None and train:
        # Identity masks: dropout disabled but batch statistics still used.
        x2 = np.atleast_2d(x_fau)
        dropout_masks = [np.ones((x2.shape[0], w)) for w in config.trunk]
    pred, cache = forward(params, config, x_fau, x_head, train=train,
                          dropout_masks=dropout_masks, update_running=update_running)
    B = pred.z.shape[0]
    terms = loss_terms(pred, y, y_bin, aux, lam1, lam2, lam_ce)

    dz = lam_ce * (pred.probs - y) / B
    dz_bin = lam1 * (pred.bin_probs - y_bin) / B
    # z_bin[0] = logaddexp(z0, z1): distribute according to the inner softmax.
    e = np.exp(pred.z[:, :2] - pred.z[:, :2].max(axis=1, keepdims=True))
    s01 = e / e.sum(axis=1, keepdims=True)
    dz = dz.copy()
    dz[:, 0] += dz_bin[:, 0] * s01[:, 0]
    dz[:, 1] += dz_bin[:, 0] * s01[:, 1]
    dz[:, 2] += dz_bin[:, 1]

    resid = pred.o - aux
    norms = np.linalg.norm(resid, axis=1, keepdims=True)
    do = lam2 * np.where(norms > 1e-12, resid / np.maximum(norms, 1e-12), 0.0) / B

    grads: dict[str, np.ndarray] = {}
    grads["out_W"] = cache["h_last"].T @ dz
    grads["out_b"] = dz.sum(axis=0)
    grads["aux_W"] = cache["h_aux"].T @ do
    grads["aux_b"] = do.sum(axis=0)
    dh = dz @ params["out_W"].T
    dh_aux = do @ params["aux_W"].T

    for i in reversed(range(len(config.trunk))):
        blk = cache["blocks"][i]
        g = dh
        if i == config.aux_block:
            g = g + dh_aux
        if train:
            g = g * dropout_masks[i]
        dv = g * np.where(blk["v"] > 0, 1.0, config.leaky_slope)
        grads[f"t{i}_gamma"] = (dv * blk["xhat"]).sum(axis=0)
        grads[f"t{i}_beta"] = dv.sum(axis=0)
        dxhat = dv * params[f"t{i}_gamma"]
        if train:
            du = (blk["ivar"] / B) * (B * dxhat - dxhat.sum(axis=0)
                                      - blk["xhat"] * (dxhat * blk["xhat"]).sum(axis=0))
        else:
            du = dxhat * blk["ivar"]
        grads[f"t{i}_W"] = blk["h_in"].T @ du
        grads[f"t{i}_b"] = du.sum(axis=0)
        dh = du @ params[f"t{i}_W"].T

    d_fau = dh[:, :config.fau_enc]
    d_head = dh[:, config.fau_enc:]
    grads["fau_W"] = cache["x_fau"].T @ d_fau
    grads["fau_b"] = d_fau.sum(axis=0)
    grads["head_W"] = cache["x_head"].T @ d_head
    grads["head_b"] = d_head.sum(axis=0)
    return grads, terms


class Adam:
    def __init__(self, keys: list[str], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: 0.0 for k in keys}
        self.v = {k: 0.0 for k in keys}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            params[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class DivergenceError(RuntimeError):
    pass


def evaluate(params: dict, config: ModelConfig, data: feat.Dataset,
             tc: TrainConfig) -> dict[str, float]:
    if len(data) == 0:
        return {"ce3": float("nan"), "ce_bin": float("nan"), "aux": float("nan"),
                "total": float("nan")}
    pred, _ = forward(params, config, data.x_fau, data.x_head, train=False)
    terms = loss_terms(pred, data.y, data.y_bin, data.aux, tc.lam1, tc.lam2, tc.lam_ce)
    terms["accuracy"] = float((pred.probs.argmax(axis=1) == data.y.argmax(axis=1)).mean())
    return terms


def early_stop_metric(terms: dict[str, float], tc: TrainConfig) -> float:
    """Cross-entropy on the test set; the binary term stands in for the
    transfer variant that drops the multi-class loss."""
    return terms["ce3"] if tc.lam_ce > 0 else terms["ce_bin"]


def train(tc: TrainConfig, train_data: feat.Dataset, test_data: feat.Dataset,
          validation_data: feat.Dataset | None = None,
          config: ModelConfig | None = None) -> tuple[dict, dict]:
    """Adam training with per-epoch test evaluation; parameters at the best
    test loss are retained. Returns (best params, history)."""
    if len(train_data) == 0:
        raise ValueError("empty training fold")
    config = config or tc.model_config()
    rng = np.random.default_rng(tc.seed)
    params = init_params(config, seed=tc.seed)
    opt = Adam(trainable_keys(params), lr=tc.learning_rate)
    n = len(train_data)
    history: dict = {"train": [], "test": [], "validation": [], "best_epoch": 0}
    best = {"metric": float("inf"), "params": copy.deepcopy(params), "epoch": 0}

    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            if len(idx) < 2:
                continue  # batch norm needs >= 2 samples
            masks = make_dropout_masks(config, len(idx), rng)
            grads, terms = gradient(params, config,
                                    train_data.x_fau[idx], train_data.x_head[idx],
                                    train_data.y[idx], train_data.y_bin[idx],
                                    train_data.aux[idx], tc.lam1, tc.lam2, tc.lam_ce,
                                    dropout_masks=masks, update_running=True)
            if not np.isfinite(terms["total"]):
                raise DivergenceError(f"non-finite loss at epoch {epoch}: {terms}")
            opt.step(params, grads)
            epoch_losses.append(terms["total"])
        history["train"].append(float(np.mean(epoch_losses)))
        test_terms = evaluate(params, config, test_data, tc)
        history["test"].append(test_terms)
        if validation_data is not None:
            history["validation"].append(evaluate(params, config, validation_data, tc))
        metric = early_stop_metric(test_terms, tc)
        if np.isfinite(metric) and metric < best["metric"]:
            best = {"metric": metric, "params": copy.deepcopy(params), "epoch": epoch}
        elif epoch - best["epoch"] >= tc.patience:
            break
    history["best_epoch"] = best["epoch"]
    return best["params"], history


def random_search(space: dict[str, list], n_draws: int, folds: list[dict],
                  seed: int = 0, max_epochs: int | None = None) -> tuple[TrainConfig, list]:
    """Draw configs uniformly from `space` and return the one with the
    lowest mean best-test loss across folds.

    Each fold is {"train": Dataset, "test": Dataset}.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    results = []
    for draw in range(n_draws):
        kw = {k: v[rng.integers(len(v))] for k, v in space.items()}
        if "window" in kw:  # (k, l) drawn jointly
            kw["k"], kw["l"] = kw.pop("window")
        tc = TrainConfig(seed=seed + draw, **kw)
        if max_epochs is not None:
            tc.max_epochs = max_epochs
        scores = []
        for fold in folds:
            _params, hist = train(tc, fold["train"], fold["test"])
            scores.append(min(early_stop_metric(t, tc) for t in hist["test"]))
        results.append({"config": tc, "mean_test_loss": float(np.mean(scores))})
    best = min(results, key=lambda r: r["mean_test_loss"])
    return best["config"], results


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str, params: dict, config: ModelConfig,
                    train_config: TrainConfig | None = None) -> None:
    header = {"version": CHECKPOINT_VERSION,
              "config": asdict(config),
              "train_config": asdict(train_config) if train_config else None,
              "shapes": {k: list(v.shape) for k, v in params.items()}}
    np.savez(path, __header=json.dumps(header, sort_keys=True), **params)


def load_checkpoint(path: str) -> tuple[dict, ModelConfig, dict | None]:
    try:
        z = np.load(path, allow_pickle=False)
        header = json.loads(str(z["__header"]))
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"version mismatch: {header.get('version')!r}")
    cfg = dict(header["config"])
    cfg["trunk"] = tuple(cfg["trunk"])
    config = ModelConfig(**cfg)
    params = {}
    for k, shape in header["shapes"].items():
        if k not in z.files:
            raise CheckpointError(f"missing array {k}")
        arr = z[k]
        if list(arr.shape) != shape:
            raise CheckpointError(f"shape mismatch for {k}: {arr.shape} vs {shape}")
        params[k] = arr
    return params, config, header.get("train_config")


def predict(params: dict, config: ModelConfig, x_fau, x_head) -> Prediction:
    pred, _ = forward(params, config, x_fau, x_head, train=False)
    return pred
