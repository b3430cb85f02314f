"""Graph-convolutional denoising autoencoder with an optional Wasserstein critic.

Encoder and decoder::

    H     = relu(L X theta1)
    X_hat = sigmoid(L H theta2 + Lt X theta3 + theta4 g)

``L`` propagates over the graph with self-loops and ``Lt`` without them, so the
``Lt X theta3`` skip term only sees a node's neighbours. ``g`` holds the
column means of the training data and enters as a per-row bias.

Gradients are derived by hand for this fixed computation graph; the critic's
gradient penalty needs the derivative of an input gradient, which for a ReLU
network is linear in the weights between activation-pattern changes.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .dataset import EncodedMatrix, Layout, apply_mcar
from .numerics import (AdamState, DimensionError, NonFiniteError, adam_step, glorot_uniform,
                       relu, sigmoid, softplus)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
GINN_KEYS = ("theta1", "theta2", "theta3", "theta4")
CRITIC_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


class TrainingError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    alpha: Optional[float] = None  # None: numerical share of the attributes
    gamma: float = 1.0
    lambda_gp: float = 10.0
    lr_autoencoder: float = 1e-3
    lr_critic: float = 1e-5
    max_epochs: int = 3000
    patience: int = 30
    min_delta: float = 1e-5
    train_drop_rate: float = 0.2
    critic_steps_per_ae_step: int = 5
    adversarial: bool = True
    adversarial_weight: Optional[float] = None  # None: 1 / encoded width
    hidden: int = 128
    critic_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.adversarial_weight is not None and self.adversarial_weight < 0:
            raise ValueError("adversarial_weight must be non-negative")
        if self.gamma < 0 or self.lambda_gp < 0:
            raise ValueError("gamma and lambda_gp must be non-negative")
        if not 0 <= self.train_drop_rate < 1:
            raise ValueError("train_drop_rate must lie in [0, 1)")
        if self.max_epochs < 1 or self.patience < 1 or self.critic_steps_per_ae_step < 1:
            raise ValueError("max_epochs, patience and critic steps must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown train config keys: {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_alpha(cfg: TrainConfig, layout: Layout) -> float:
    """Weight of the numerical term; forced to 1 or 0 for single-type data."""
    n_num, n_cat = layout.schema.n_numerical, layout.schema.n_categorical
    if n_cat == 0:
        return 1.0
    if n_num == 0:
        return 0.0
    if cfg.alpha is not None:
        return cfg.alpha
    return n_num / (n_num + n_cat)


@dataclass
class LossSpec:
    """Which encoded columns are numerical/one-hot and how the terms are weighted."""

    num_cols: np.ndarray
    cat_cols: np.ndarray
    alpha: float
    gamma: float

    @classmethod
    def from_layout(cls, layout: Layout, cfg: TrainConfig) -> "LossSpec":
        return cls(layout.numerical_columns, layout.categorical_columns,
                   resolve_alpha(cfg, layout), cfg.gamma)


@dataclass
class TrainReport:
    reconstruction: list = field(default_factory=list)
    critic: list = field(default_factory=list)
    total: list = field(default_factory=list)
    stop_epoch: int = 0
    stop_reason: str = ""
    best_epoch: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# --- parameters ------------------------------------------------------------


def init_ginn(d: int, hidden: int, rng: np.random.Generator) -> dict:
    return {
        "theta1": glorot_uniform(rng, d, hidden),
        "theta2": glorot_uniform(rng, hidden, d),
        "theta3": glorot_uniform(rng, d, d),
        "theta4": glorot_uniform(rng, d, d),
    }


def init_critic(d: int, hidden: int, rng: np.random.Generator) -> dict:
    return {
        "w1": glorot_uniform(rng, d, hidden), "b1": np.zeros(hidden),
        "w2": glorot_uniform(rng, hidden, hidden), "b2": np.zeros(hidden),
        "w3": glorot_uniform(rng, hidden, 1), "b3": np.zeros(1),
    }


# --- autoencoder -----------------------------------------------------------


def _check_forward(x, l, l_tilde, g, p):
    n, d = x.shape
    if l.shape != (n, n) or l_tilde.shape != (n, n):
        raise DimensionError(f"operators must be {n}x{n}")
    if g.shape != (d,):
        raise DimensionError(f"global vector must have length {d}")
    if p["theta1"].shape[0] != d or p["theta2"].shape[1] != d or p["theta3"].shape != (d, d) \
            or p["theta4"].shape != (d, d) or p["theta1"].shape[1] != p["theta2"].shape[0]:
        raise DimensionError("parameter shapes do not match the data")


def _forward(x, l, l_tilde, g, p):
    _check_forward(x, l, l_tilde, g, p)
    lx = l @ x
    z1 = lx @ p["theta1"]
    h = relu(z1)
    q = l @ h
    ltx = l_tilde @ x
    z2 = q @ p["theta2"] + ltx @ p["theta3"] + (p["theta4"] @ g)[None, :]
    return {"lx": lx, "z1": z1, "h": h, "q": q, "ltx": ltx, "z2": z2, "x_hat": sigmoid(z2)}


def ginn_forward(x, l, l_tilde, g, p) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H, X_hat)`` for input rows ``x``."""
    c = _forward(np.asarray(x, dtype=float), l, l_tilde, np.asarray(g, dtype=float), p)
    return c["h"], c["x_hat"]


def _masked_mean(values, weights):
    total = weights.sum()
    return float((values * weights).sum() / total) if total > 0 else 0.0


def _loss_terms(x, x_hat, z2, mask, g_true, spec: LossSpec):
    """Reconstruction terms; BCE uses logits when ``z2`` is given."""
    mse = bce = 0.0
    if spec.num_cols.size:
        cols = spec.num_cols
        mse = _masked_mean((x_hat[:, cols] - x[:, cols]) ** 2, mask[:, cols])
    if spec.cat_cols.size:
        cols = spec.cat_cols
        if z2 is not None:
            z = z2[:, cols]
            ce = softplus(z) - x[:, cols] * z
        else:
            xh = np.clip(x_hat[:, cols], 1e-12, 1 - 1e-12)
            ce = -(x[:, cols] * np.log(xh) + (1 - x[:, cols]) * np.log(1 - xh))
        bce = _masked_mean(ce, mask[:, cols])
    glob = float(np.mean((x_hat.mean(axis=0) - g_true) ** 2))
    return spec.alpha * mse + (1 - spec.alpha) * bce + spec.gamma * glob


def reconstruction_loss(x, x_hat, mask, g_true, spec: LossSpec) -> float:
    """alpha * MSE(numerical) + (1 - alpha) * BCE(one-hot) + gamma * MSE(globals).

    The first two terms only count observed entries.
    """
    return _loss_terms(np.asarray(x, float), np.asarray(x_hat, float), None,
                       np.asarray(mask, float), np.asarray(g_true, float), spec)


def _recon_grad_z2(x, x_hat, mask, g_true, spec: LossSpec):
    n, d = x.shape
    sig_grad = x_hat * (1 - x_hat)
    dxh = np.zeros_like(x_hat)
    dz2 = np.zeros_like(x_hat)
    if spec.num_cols.size:
        cols = spec.num_cols
        cnt = mask[:, cols].sum()
        if cnt > 0:
            dxh[:, cols] += spec.alpha * 2 * (x_hat[:, cols] - x[:, cols]) * mask[:, cols] / cnt
    if spec.cat_cols.size:
        cols = spec.cat_cols
        cnt = mask[:, cols].sum()
        if cnt > 0:
            dz2[:, cols] += (1 - spec.alpha) * (x_hat[:, cols] - x[:, cols]) * mask[:, cols] / cnt
    dxh += spec.gamma * 2 * (x_hat.mean(axis=0) - g_true)[None, :] / (d * n)
    return dz2 + dxh * sig_grad


def _backward(cache, dz2, g, p):
    grads = {
        "theta2": cache["q"].T @ dz2,
        "theta3": cache["ltx"].T @ dz2,
        "theta4": np.outer(dz2.sum(axis=0), g),
    }
    dq = dz2 @ p["theta2"].T
    return grads, dq


def autoencoder_loss_and_grad(p, x_in, x_target, mask, l, l_tilde, g, spec: LossSpec,
                              critic: Optional[dict] = None, adv_weight: float = 1.0):
    """Loss and parameter gradients for one full-batch step.

    ``x_in`` is the (damaged) network input, ``x_target``/``mask`` the known
    entries to reconstruct. With a ``critic`` the loss is
    ``L_A - adv_weight * mean C(X_hat)``. Returns ``(l_a, l_total, grads, x_hat)``.
    """
    cache = _forward(x_in, l, l_tilde, g, p)
    x_hat, z2 = cache["x_hat"], cache["z2"]
    l_a = _loss_terms(x_target, x_hat, z2, mask, g, spec)
    dz2 = _recon_grad_z2(x_target, x_hat, mask, g, spec)
    l_t = l_a
    if critic is not None:
        scores, ccache = _critic_forward(x_hat, critic)
        n = x_hat.shape[0]
        l_t = l_a - adv_weight * float(scores.mean())
        dx = _critic_backward(ccache, critic, np.full(n, -adv_weight / n), need_params=False)[1]
        dz2 = dz2 + dx * x_hat * (1 - x_hat)
    grads, dq = _backward(cache, dz2, g, p)
    dh = l.T @ dq
    dz1 = dh * (cache["z1"] > 0)
    grads["theta1"] = cache["lx"].T @ dz1
    return l_a, l_t, grads, x_hat


def impute(x, mask, p, l, l_tilde, g) -> np.ndarray:
    """Keep observed entries bit-for-bit, fill the rest from the forward pass."""
    x = np.asarray(x, dtype=float)
    _, x_hat = ginn_forward(x * (np.asarray(mask) > 0), l, l_tilde, g, p)
    return np.where(np.asarray(mask) > 0, x, x_hat)


# --- critic ----------------------------------------------------------------


def _critic_forward(rows, c):
    if rows.shape[1] != c["w1"].shape[0]:
        raise DimensionError(f"critic expects width {c['w1'].shape[0]}, got {rows.shape[1]}")
    z1 = rows @ c["w1"] + c["b1"]
    a1 = relu(z1)
    z2 = a1 @ c["w2"] + c["b2"]
    a2 = relu(z2)
    scores = (a2 @ c["w3"])[:, 0] + c["b3"][0]
    return scores, {"x": rows, "r1": z1 > 0, "a1": a1, "r2": z2 > 0, "a2": a2}


def critic_forward(rows, c) -> np.ndarray:
    return _critic_forward(np.asarray(rows, dtype=float), c)[0]


def _critic_backward(cache, c, dscores, need_params=True):
    ds = dscores[:, None]
    da2 = ds @ c["w3"].T
    dz2 = da2 * cache["r2"]
    da1 = dz2 @ c["w2"].T
    dz1 = da1 * cache["r1"]
    dx = dz1 @ c["w1"].T
    if not need_params:
        return None, dx
    grads = {
        "w3": cache["a2"].T @ ds, "b3": np.array([ds.sum()]),
        "w2": cache["a1"].T @ dz2, "b2": dz2.sum(axis=0),
        "w1": cache["x"].T @ dz1, "b1": dz1.sum(axis=0),
    }
    return grads, dx


def critic_input_gradient(rows, c) -> np.ndarray:
    """Row-wise gradient of the critic score with respect to its input."""
    rows = np.asarray(rows, dtype=float)
    _, cache = _critic_forward(rows, c)
    return _critic_backward(cache, c, np.ones(rows.shape[0]), need_params=False)[1]


def mix_rows(real, imputed, rng) -> np.ndarray:
    """Element-wise coin flip between the real and imputed row at each index."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pick = rng.random(real.shape) < 0.5
    return np.where(pick, real, imputed)


def _penalty_and_grad(x_mix, c):
    _, cache = _critic_forward(x_mix, c)
    n = x_mix.shape[0]
    u2 = cache["r2"] * c["w3"][:, 0][None, :]
    v = u2 @ c["w2"].T
    u1 = cache["r1"] * v
    gx = u1 @ c["w1"].T
    norms = np.sqrt((gx ** 2).sum(axis=1))
    penalty = float(np.mean((norms - 1) ** 2))
    coef = np.zeros(n)
    nz = norms > 0
    coef[nz] = 2 * (norms[nz] - 1) / (n * norms[nz])
    dgx = coef[:, None] * gx
    du1 = dgx @ c["w1"]
    dv = du1 * cache["r1"]
    du2 = dv @ c["w2"]
    grads = {
        "w1": dgx.T @ u1,
        "w2": dv.T @ u2,
        "w3": (du2 * cache["r2"]).sum(axis=0)[:, None],
        "b1": np.zeros_like(c["b1"]), "b2": np.zeros_like(c["b2"]), "b3": np.zeros_like(c["b3"]),
    }
    return penalty, grads


def gradient_penalty(real_rows, imputed_rows, c, seed) -> float:
    """mean over mixed rows of (||grad_x C(x_mix)||_2 - 1)^2."""
    real, imp = np.asarray(real_rows, float), np.asarray(imputed_rows, float)
    if real.shape != imp.shape:
        raise DimensionError("real and imputed batches differ in shape")
    return _penalty_and_grad(mix_rows(real, imp, seed), c)[0]


def critic_loss_and_grad(real, imputed, c, lambda_gp, x_mix):
    s_imp, cache_imp = _critic_forward(imputed, c)
    s_real, cache_real = _critic_forward(real, c)
    n = real.shape[0]
    penalty, g_pen = _penalty_and_grad(x_mix, c)
    loss = float(s_imp.mean() - s_real.mean() + lambda_gp * penalty)
    g_imp, _ = _critic_backward(cache_imp, c, np.full(n, 1.0 / n))
    g_real, _ = _critic_backward(cache_real, c, np.full(n, -1.0 / n))
    grads = {k: g_imp[k] + g_real[k] + lambda_gp * g_pen[k] for k in c}
    return loss, grads


def critic_loss(real_rows, imputed_rows, c, lambda_gp: float, seed) -> float:
    """mean C(imputed) - mean C(real) + lambda * gradient penalty."""
    real, imp = np.asarray(real_rows, float), np.asarray(imputed_rows, float)
    if real.shape != imp.shape:
        raise DimensionError("real and imputed batches differ in shape")
    return critic_loss_and_grad(real, imp, c, lambda_gp, mix_rows(real, imp, seed))[0]


def autoencoder_total_loss(l_a: float, imputed_rows, c, weight: float = 1.0) -> float:
    return l_a - weight * float(critic_forward(imputed_rows, c).mean())


def resolve_adversarial_weight(cfg: TrainConfig, d: int) -> float:
    """Critic term weight; by default the critic mean is spread over the d columns.

    The reconstruction terms average over entries while the critic averages
    over rows, so at weight 1 a barely trained critic outweighs reconstruction
    by roughly a factor d.
    """
    return 1.0 / d if cfg.adversarial_weight is None else cfg.adversarial_weight


# --- training --------------------------------------------------------------


@dataclass
class TrainedModel:
    ginn: dict
    critic: dict
    g: np.ndarray
    layout: Layout
    config: TrainConfig
    report: Optional[TrainReport] = None

    def impute(self, x, mask, l, l_tilde) -> np.ndarray:
        return impute(x, mask, self.ginn, l, l_tilde, self.g)


def train(x, mask, l, l_tilde, g, layout: Layout, cfg: TrainConfig) -> TrainedModel:
    """Full-batch training with early stopping on the reconstruction loss.

    Each epoch redraws a drop mask over the observed attributes, runs
    ``critic_steps_per_ae_step`` critic updates (when adversarial) and then
    one autoencoder update. The parameters of the best epoch are returned.
    """
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=float)
    g = np.asarray(g, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    n, d = x.shape
    spec = LossSpec.from_layout(layout, cfg)
    adv_weight = resolve_adversarial_weight(cfg, d)
    ginn = init_ginn(d, cfg.hidden, rng)
    critic = init_critic(d, cfg.critic_hidden, rng)
    ae_state = AdamState.zeros_like(ginn)
    cr_state = AdamState.zeros_like(critic)
    report = TrainReport()
    em = EncodedMatrix(x, layout)
    best, best_params, wait = math.inf, ginn, 0

    for epoch in range(1, cfg.max_epochs + 1):
        x_in, _ = apply_mcar(em, mask, cfg.train_drop_rate, rng)
        x_in = x_in.values
        c_loss = 0.0
        try:
            critic_arg = None
            if cfg.adversarial:
                _, x_hat = ginn_forward(x_in, l, l_tilde, g, ginn)
                for _ in range(cfg.critic_steps_per_ae_step):
                    x_mix = mix_rows(x, x_hat, rng)
                    c_loss, c_grads = critic_loss_and_grad(x, x_hat, critic, cfg.lambda_gp, x_mix)
                    critic, cr_state = adam_step(critic, c_grads, cr_state, cfg.lr_critic)
                critic_arg = critic
            l_a, l_t, grads, _ = autoencoder_loss_and_grad(
                ginn, x_in, x, mask, l, l_tilde, g, spec, critic_arg, adv_weight)
            if not (math.isfinite(l_a) and math.isfinite(l_t) and math.isfinite(c_loss)):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}")
            ginn_next, ae_state = adam_step(ginn, grads, ae_state, cfg.lr_autoencoder)
        except (NonFiniteError, FloatingPointError) as exc:
            report.stop_epoch, report.stop_reason = epoch, "non-finite"
            raise TrainingError(f"training aborted: {exc}", report) from exc

        report.reconstruction.append(l_a)
        report.critic.append(c_loss)
        report.total.append(l_t)
        # early stopping judges the parameters that produced l_a
        if l_a < best - cfg.min_delta:
            best, best_params, wait = l_a, ginn, 0
            report.best_epoch = epoch
        else:
            wait += 1
        ginn = ginn_next
        if wait >= cfg.patience:
            report.stop_epoch, report.stop_reason = epoch, "early-stop"
            break
    else:
        report.stop_epoch, report.stop_reason = cfg.max_epochs, "max-epochs"
    log.debug("training stopped at epoch %d (%s), best L_A %.6f at %d",
              report.stop_epoch, report.stop_reason, best, report.best_epoch)
    return TrainedModel(best_params, critic, g, layout, cfg, report)


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(path, model: TrainedModel) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "layout": model.layout.to_dict(),
        "config": model.config.to_dict(),
    }
    arrays = {f"ginn.{k}": v for k, v in model.ginn.items()}
    arrays.update({f"critic.{k}": v for k, v in model.critic.items()})
    arrays["g"] = model.g
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        ginn = {k: z[f"ginn.{k}"].copy() for k in GINN_KEYS}
        critic = {k: z[f"critic.{k}"].copy() for k in CRITIC_KEYS}
        g = z["g"].copy()
    return TrainedModel(ginn, critic, g, Layout.from_dict(meta["layout"]),
                        TrainConfig.from_dict(meta["config"]))
