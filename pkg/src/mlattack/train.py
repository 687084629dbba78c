"""Training for linear and feedforward multi-label classifiers.

Linear models minimise the one-vs-rest squared hinge; MLPs minimise the
per-label logistic loss by manual backprop. Either can apply the nuclear-norm
proximal step after every update (on the final layer only for MLPs) and mix
loss-ascent adversarial examples into each epoch.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .attack import AttackSpec, loss_ascent
from .dataset import Dataset
from .model import Layer, LinearModel, MlpModel, _act, _act_deriv, init_mlp, predict

log = logging.getLogger(__name__)

TRAIN_LOSSES = ("squared_hinge", "logistic")
ADV_METHODS = ("loss_ascent", "gase")


class TrainingError(RuntimeError):
    """Loss became non-finite; ``last_model`` holds the last finite iterate."""

    def __init__(self, msg, last_model=None):
        super().__init__(msg)
        self.last_model = last_model


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "squared_hinge"
    l2: float = 0.0
    lambda_nuc: float = 0.0
    adv_training: bool = False
    adv_mu_r: float | None = None
    adv_fraction: float = 0.5
    epochs: int = 50
    lr: float = 0.1
    batch: int = 32
    seed: int = 0
    adv_steps: int = 20  # loss-ascent iterations per adversarial example
    adv_method: str = "loss_ascent"  # "gase" crafts training examples by label exploration

    def __post_init__(self):
        if self.loss not in TRAIN_LOSSES:
            raise ValueError(f"unknown training loss {self.loss!r}")
        if self.l2 < 0 or self.lambda_nuc < 0:
            raise ValueError("l2 and lambda_nuc must be nonnegative")
        if self.adv_training and not (self.adv_mu_r is not None and self.adv_mu_r > 0):
            raise ValueError("adv_training requires a positive adv_mu_r")
        if not 0.0 <= self.adv_fraction <= 1.0:
            raise ValueError("adv_fraction must lie in [0, 1]")
        if self.adv_method not in ADV_METHODS:
            raise ValueError(f"unknown adversarial example generator {self.adv_method!r}")
        if self.epochs < 0 or self.batch < 1 or not self.lr > 0:
            raise ValueError("epochs >= 0, batch >= 1 and lr > 0 required")


def nuclear_prox(M, tau: float) -> np.ndarray:
    """Singular value soft-thresholding: ``U max(S - tau, 0) V^T``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    M = np.asarray(M, dtype=np.float64)
    if tau == 0:
        return M.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return (U * np.maximum(s - tau, 0.0)) @ Vt


def _train_rows(ds: Dataset) -> np.ndarray:
    idx = ds.indices("train") if ds.split_tags is not None else np.arange(ds.n)
    if idx.size == 0:
        raise ValueError("training split is empty")
    return idx


def _adversarial_epoch(model, X, Y, cfg: TrainConfig, rng, attack_loss: str):
    """Copy of ``X`` with an ``adv_fraction`` of rows moved by loss ascent."""
    X = np.array(X)
    k = int(round(cfg.adv_fraction * X.shape[0]))
    if k == 0:
        return X
    rows = rng.choice(X.shape[0], size=k, replace=False)
    if cfg.adv_method == "gase":
        from .explore import gase

        method = "exact_linear" if isinstance(model, LinearModel) else "pgd"
        spec = AttackSpec(mu_r=cfg.adv_mu_r, max_iter=cfg.adv_steps, restarts=1, method=method,
                          preserve_others=False)
        for i in rows:
            X[i] = X[i] + gase(model, X[i], Y[i], spec, rng=rng).final_r
        return X
    spec = AttackSpec(mu_r=cfg.adv_mu_r, max_iter=cfg.adv_steps,
                      step=cfg.adv_mu_r / max(cfg.adv_steps // 2, 1), loss=attack_loss)
    for i in rows:
        X[i] = X[i] + loss_ascent(model, X[i], Y[i], cfg.adv_mu_r, spec).r
    return X


def _linear_loss_grad(W, X, Y, loss, l2):
    H = X @ W
    if loss == "squared_hinge":
        slack = np.maximum(0.0, 1.0 - Y * H)
        val = np.sum(slack ** 2) / X.shape[0]
        dH = -2.0 * Y * slack / X.shape[0]
    else:
        val = np.sum(np.logaddexp(0.0, -Y * H)) / X.shape[0]
        dH = -Y * 0.5 * (1.0 - np.tanh(0.5 * Y * H)) / X.shape[0]
    return val + l2 * np.sum(W * W), X.T @ dH + 2.0 * l2 * W


def train_linear(ds: Dataset, cfg: TrainConfig, history: list | None = None) -> LinearModel:
    """Mini-batch gradient descent from ``W = 0`` with optional proximal and adversarial steps."""
    idx = _train_rows(ds)
    X0, Y = ds.X[idx], ds.Y[idx].astype(np.float64)
    rng = np.random.default_rng(cfg.seed)
    W = np.zeros((ds.d, ds.m))
    attack_loss = cfg.loss
    for epoch in range(cfg.epochs):
        X = X0
        if cfg.adv_training:
            X = _adversarial_epoch(LinearModel(W), X0, Y, cfg, rng, attack_loss)
        perm = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], cfg.batch):
            b = perm[start:start + cfg.batch]
            val, grad = _linear_loss_grad(W, X[b], Y[b], cfg.loss, cfg.l2)
            W_new = W - cfg.lr * grad
            if cfg.lambda_nuc > 0:
                W_new = nuclear_prox(W_new, cfg.lr * cfg.lambda_nuc)
            if not (np.isfinite(val) and np.all(np.isfinite(W_new))):
                raise TrainingError(f"training diverged in epoch {epoch}", LinearModel(W))
            W = W_new
            total += val * b.size
        if history is not None:
            history.append(total / X.shape[0])
    return LinearModel(W)


def _mlp_backward(model: MlpModel, X, Y, l2):
    pre, post = model.forward(X)
    H = post[-1]
    n = X.shape[0]
    val = np.sum(np.logaddexp(0.0, -Y * H)) / n
    dH = -Y * 0.5 * (1.0 - np.tanh(0.5 * Y * H)) / n
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        dZ = dH * _act_deriv(layer.activation, pre[i])
        grads[i] = post[i].T @ dZ + 2.0 * l2 * layer.A
        dH = dZ @ layer.A.T
        val += l2 * np.sum(layer.A * layer.A)
    return val, grads


def train_mlp(ds: Dataset, cfg: TrainConfig, arch, history: list | None = None) -> MlpModel:
    """Backprop on the per-label logistic loss.

    ``arch`` is ``(dims, activations)`` with ``dims`` the full width chain
    from input to labels and ``activations`` one tag per hidden layer.
    """
    dims, acts = arch
    dims = list(dims)
    if dims[0] != ds.d or dims[-1] != ds.m:
        raise ValueError("architecture must start at d and end at m")
    idx = _train_rows(ds)
    X0, Y = ds.X[idx], ds.Y[idx].astype(np.float64)
    model = init_mlp(dims, acts, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    for epoch in range(cfg.epochs):
        X = X0
        if cfg.adv_training:
            X = _adversarial_epoch(model, X0, Y, cfg, rng, "logistic")
        perm = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], cfg.batch):
            b = perm[start:start + cfg.batch]
            val, grads = _mlp_backward(model, X[b], Y[b], cfg.l2)
            mats = [l.A - cfg.lr * g for l, g in zip(model.layers, grads)]
            if cfg.lambda_nuc > 0:
                mats[-1] = nuclear_prox(mats[-1], cfg.lr * cfg.lambda_nuc)
            if not (np.isfinite(val) and all(np.all(np.isfinite(A)) for A in mats)):
                raise TrainingError(f"training diverged in epoch {epoch}", model)
            model = MlpModel(tuple(Layer(A, l.activation) for A, l in zip(mats, model.layers)))
            total += val * b.size
        if history is not None:
            history.append(total / X.shape[0])
    return model


def f1_metrics(model, ds: Dataset, split: str = "test"):
    """``(micro_f1, macro_f1)``; labels with no TP, FP or FN score 0 in the macro mean."""
    idx = ds.indices(split)
    if idx.size == 0:
        raise ValueError(f"split {split!r} is empty")
    P = predict(model, ds.X[idx]) > 0
    T = ds.Y[idx] > 0
    tp = np.sum(P & T, axis=0)
    fp = np.sum(P & ~T, axis=0)
    fn = np.sum(~P & T, axis=0)
    den = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / den if den else 0.0
    per = np.where(2 * tp + fp + fn > 0, 2 * tp / np.maximum(2 * tp + fp + fn, 1), 0.0)
    return float(micro), float(per.mean())


def write_manifest(path, cfg: TrainConfig, history, model, ds: Dataset, workers: int = 1,
                   extra: dict | None = None) -> dict:
    from .checkpoint import model_checksum

    split = "test" if ds.split_tags is not None and ds.indices("test").size else "all"
    micro, macro = f1_metrics(model, ds, split)
    doc = dict(config=asdict(cfg), seed=cfg.seed, workers=workers,
               epoch_loss=[float(v) for v in history], f1_split=split,
               micro_f1=micro, macro_f1=macro, model_checksum=model_checksum(model),
               timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"))
    doc.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    return doc
