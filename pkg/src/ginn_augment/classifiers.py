"""Small numpy classifiers used to score augmented training sets.

Labels are integer class indices. All three models are deterministic for a
fixed seed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import AdamState, adam_step, glorot_uniform

KNN = "knn"
LOGISTIC = "logistic_regression"
MLP = "mlp"
KINDS = (KNN, LOGISTIC, MLP)


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = KNN
    knn_k: int = 5
    mlp_layers: int = 6
    mlp_width: int = 128
    mlp_epochs: int = 200
    mlp_lr: float = 1e-3
    mlp_batch: int = 200
    mlp_l2: float = 1e-4
    logreg_steps: int = 500
    logreg_l2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.knn_k < 1 or self.mlp_width < 1 or self.mlp_layers < 1:
            raise ValueError("knn_k, mlp_width and mlp_layers must be >= 1")


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def knn_predict(train_x, train_y, test_x, k: int = 5, n_classes=None) -> np.ndarray:
    """Majority vote of the k nearest rows; ties go to the smallest class index."""
    train_x, test_x = np.asarray(train_x, float), np.asarray(test_x, float)
    train_y = np.asarray(train_y, dtype=int)
    n = train_x.shape[0]
    if k > n:
        warnings.warn(f"k={k} exceeds {n} training rows; using k={n}")
        k = n
    n_classes = n_classes or int(train_y.max()) + 1
    out = np.empty(test_x.shape[0], dtype=int)
    for start in range(0, test_x.shape[0], 256):
        q = test_x[start:start + 256]
        dist = ((q[:, None, :] - train_x[None, :, :]) ** 2).sum(axis=2)
        # stable sort: equal distances fall back to training order
        near = np.argsort(dist, axis=1, kind="stable")[:, :k]
        votes = np.zeros((q.shape[0], n_classes), dtype=int)
        np.add.at(votes, (np.repeat(np.arange(q.shape[0]), k), train_y[near].ravel()), 1)
        out[start:start + 256] = np.argmax(votes, axis=1)
    return out


def logistic_fit(x, y, n_classes, l2=1.0, steps=500):
    """Multinomial logistic regression by full-batch gradient descent.

    Objective: mean cross-entropy + ``l2 / (2 n) * ||W||^2`` (bias unpenalised),
    i.e. the summed loss with unit L2 strength rescaled by 1/n. The step size
    is the inverse of an upper bound on the gradient's Lipschitz constant.
    """
    x = np.asarray(x, float)
    n, d = x.shape
    onehot = np.eye(n_classes)[y]
    xb = np.hstack([x, np.ones((n, 1))])
    lip = 0.5 * np.linalg.eigvalsh(xb.T @ xb / n)[-1] + l2 / n
    lr = 1.0 / lip
    w = np.zeros((d + 1, n_classes))
    reg = np.ones((d + 1, 1))
    reg[-1] = 0.0
    for _ in range(steps):
        p = _softmax(xb @ w)
        grad = xb.T @ (p - onehot) / n + (l2 / n) * reg * w
        w -= lr * grad
    return w


def logistic_predict(w, x):
    x = np.asarray(x, float)
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    return np.argmax(xb @ w, axis=1)


def _mlp_forward(params, x, n_layers):
    acts = [x]
    h = x
    for i in range(n_layers):
        h = np.maximum(h @ params[f"w{i}"] + params[f"b{i}"], 0.0)
        acts.append(h)
    logits = h @ params["w_out"] + params["b_out"]
    return logits, acts


def mlp_fit(x, y, n_classes, cfg: ClassifierConfig):
    """ReLU network with ``mlp_layers`` hidden layers, softmax output, minibatch Adam."""
    x = np.asarray(x, float)
    rng = np.random.default_rng(cfg.seed)
    n, d = x.shape
    widths = [d] + [cfg.mlp_width] * cfg.mlp_layers
    params = {}
    for i in range(cfg.mlp_layers):
        params[f"w{i}"] = glorot_uniform(rng, widths[i], widths[i + 1])
        params[f"b{i}"] = np.zeros(widths[i + 1])
    params["w_out"] = glorot_uniform(rng, widths[-1], n_classes)
    params["b_out"] = np.zeros(n_classes)
    state = AdamState.zeros_like(params)
    onehot = np.eye(n_classes)[y]
    batch = min(cfg.mlp_batch, n)
    for _ in range(cfg.mlp_epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            logits, acts = _mlp_forward(params, x[idx], cfg.mlp_layers)
            m = len(idx)
            delta = (_softmax(logits) - onehot[idx]) / m
            grads = {"w_out": acts[-1].T @ delta + cfg.mlp_l2 * params["w_out"] / m,
                     "b_out": delta.sum(axis=0)}
            back = delta @ params["w_out"].T
            for i in reversed(range(cfg.mlp_layers)):
                back = back * (acts[i + 1] > 0)
                grads[f"w{i}"] = acts[i].T @ back + cfg.mlp_l2 * params[f"w{i}"] / m
                grads[f"b{i}"] = back.sum(axis=0)
                if i:
                    back = back @ params[f"w{i}"].T
            params, state = adam_step(params, grads, state, cfg.mlp_lr)
    return params


def mlp_predict(params, x, n_layers):
    return np.argmax(_mlp_forward(params, np.asarray(x, float), n_layers)[0], axis=1)


def classify(train_x, train_y, test_x, cfg: ClassifierConfig, n_classes=None) -> np.ndarray:
    train_y = np.asarray(train_y, dtype=int)
    if len(train_y) == 0:
        raise ValueError("empty training set")
    if np.asarray(train_x).shape[1] != np.asarray(test_x).shape[1]:
        raise ValueError("train and test widths differ")
    n_classes = n_classes or int(train_y.max()) + 1
    if cfg.kind == KNN:
        return knn_predict(train_x, train_y, test_x, cfg.knn_k, n_classes)
    if cfg.kind == LOGISTIC:
        w = logistic_fit(train_x, train_y, n_classes, cfg.logreg_l2, cfg.logreg_steps)
        return logistic_predict(w, test_x)
    params = mlp_fit(train_x, train_y, n_classes, cfg)
    return mlp_predict(params, test_x, cfg.mlp_layers)
