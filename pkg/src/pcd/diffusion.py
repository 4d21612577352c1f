"""Conditional denoiser: residual MLP with Fourier noise embedding,
EDM preconditioning, a reweighted denoising objective, classifier-free
guidance dropout, AdamW with cosine annealing, and an EMA shadow.

Gradients are computed by explicit reverse-mode accumulation through
the forward pass (no autodiff framework), in float64 throughout.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .moo import NormalizationStats, OfflineDataset, compute_normalization
from .reweighting import SampleWeights

__all__ = [
    "DenoiserConfig",
    "TrainingConfig",
    "DenoiserModel",
    "TrainingDiverged",
    "CheckpointError",
    "rff_embed",
    "denoise",
    "loss_batch",
    "cosine_lr",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

_CKPT_MAGIC = b"PCDM"
_CKPT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or incompatible."""


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture and noise-distribution settings."""

    width: int = 512
    depth: int = 4
    rff_dim: int = 16
    cond_embed_dim: int = 32
    activation: str = "relu"
    cfg_dropout_prob: float = 0.25
    sigma_data: float = 1.0
    p_mean: float = -1.2
    p_std: float = 1.2

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.cfg_dropout_prob < 1.0:
            raise ValueError("cfg_dropout_prob must lie in [0, 1)")
        if self.activation != "relu":
            raise ValueError("only relu is supported")


@dataclass(frozen=True)
class TrainingConfig:
    """Optimization settings for the denoiser."""

    batch_size: int = 512
    max_steps: int = 12000
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    ema_decay: float = 0.999
    holdout_fraction: float = 0.1
    patience: int = 10
    eval_interval: int = 100
    min_rel_improvement: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.holdout_fraction <= 0.5:
            raise ValueError("holdout_fraction must lie in (0, 0.5]")


@dataclass
class DenoiserModel:
    """Trainable parameters plus everything needed to reuse them.

    params/ema share key sets; rff_freqs is fixed at construction; norm
    snapshots the dataset statistics so samples can be decoded and
    conditioning targets encoded without the dataset at hand.
    """

    config: DenoiserConfig
    d: int
    m: int
    seed: int
    params: dict[str, np.ndarray]
    ema: dict[str, np.ndarray]
    rff_freqs: np.ndarray
    norm: NormalizationStats

    @property
    def input_dim(self) -> int:
        return self.d + 2 * self.config.rff_dim + self.config.cond_embed_dim

    def denoise(self, x_noisy, sigma, condition=None, use_ema: bool = False):
        return denoise(self, x_noisy, sigma, condition=condition, use_ema=use_ema)

    def encode_conditioning(self, targets_norm: np.ndarray) -> np.ndarray:
        """Map ideal/nadir-normalized targets into the z-scored space the
        network was trained on."""
        raw = self.norm.denormalize_objectives(targets_norm)
        return self.norm.zscore_objectives(raw)


def _init_params(d: int, m: int, cfg: DenoiserConfig, rng) -> dict[str, np.ndarray]:
    """He-initialized weights; the output projection starts at zero so a
    fresh model is the identity denoiser (D == c_skip * x)."""
    width = cfg.width
    in_dim = d + 2 * cfg.rff_dim + cfg.cond_embed_dim
    params: dict[str, np.ndarray] = {}

    def he(fan_in, shape):
        return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)

    params["w_cond"] = he(m, (m, cfg.cond_embed_dim))
    params["b_cond"] = np.zeros(cfg.cond_embed_dim)
    params["null_cond"] = np.zeros(cfg.cond_embed_dim)
    params["w_in"] = he(in_dim, (in_dim, width))
    params["b_in"] = np.zeros(width)
    for k in range(cfg.depth):
        params[f"w_h{k}"] = he(width, (width, width))
        params[f"b_h{k}"] = np.zeros(width)
    params["w_out"] = np.zeros((width, d))
    params["b_out"] = np.zeros(d)
    return params


def init_model(
    d: int,
    m: int,
    norm: NormalizationStats,
    config: DenoiserConfig = DenoiserConfig(),
    seed: int = 0,
) -> DenoiserModel:
    rng = np.random.default_rng(seed)
    rff = rng.standard_normal(config.rff_dim)
    params = _init_params(d, m, config, rng)
    ema = {k: v.copy() for k, v in params.items()}
    return DenoiserModel(
        config=config, d=d, m=m, seed=seed,
        params=params, ema=ema, rff_freqs=rff, norm=norm,
    )


def rff_embed(sigma, frequencies: np.ndarray) -> np.ndarray:
    """Fourier features of the noise level: [cos(2 pi f c), sin(2 pi f c)]
    with c = ln(sigma) / 4. Accepts a scalar or a batch of sigmas."""
    sigma_arr = np.asarray(sigma, dtype=np.float64)
    if (sigma_arr <= 0.0).any():
        raise ValueError("sigma must be positive")
    scalar = sigma_arr.ndim == 0
    c_noise = np.log(np.atleast_1d(sigma_arr)) / 4.0
    ang = 2.0 * np.pi * c_noise[:, None] * frequencies[None, :]
    out = np.concatenate([np.cos(ang), np.sin(ang)], axis=1)
    return out[0] if scalar else out


def _preconditioners(sigma: np.ndarray, sigma_data: float):
    s2 = sigma**2
    sd2 = sigma_data**2
    denom = np.sqrt(s2 + sd2)
    c_in = 1.0 / denom
    c_skip = sd2 / (s2 + sd2)
    c_out = sigma * sigma_data / denom
    return c_in, c_skip, c_out


def _forward(
    params: dict[str, np.ndarray],
    rff_freqs: np.ndarray,
    cfg: DenoiserConfig,
    x_noisy: np.ndarray,
    sigma: np.ndarray,
    cond_z: Optional[np.ndarray],
    drop_mask: Optional[np.ndarray],
    want_cache: bool,
):
    """Preconditioned forward pass over a batch. Returns (D, cache)."""
    b, d = x_noisy.shape
    c_in, c_skip, c_out = _preconditioners(sigma, cfg.sigma_data)
    rff = rff_embed(sigma, rff_freqs)
    if cond_z is None:
        emb = np.broadcast_to(params["null_cond"], (b, cfg.cond_embed_dim)).copy()
        drop_mask = np.ones(b, dtype=bool)
    else:
        emb = cond_z @ params["w_cond"] + params["b_cond"]
        if drop_mask is None:
            drop_mask = np.zeros(b, dtype=bool)
        emb[drop_mask] = params["null_cond"]
    u = np.concatenate([c_in[:, None] * x_noisy, rff, emb], axis=1)
    z0 = u @ params["w_in"] + params["b_in"]
    h = np.maximum(z0, 0.0)
    h_pre = []
    zs = []
    for k in range(cfg.depth):
        h_pre.append(h)
        zk = h @ params[f"w_h{k}"] + params[f"b_h{k}"]
        zs.append(zk)
        h = h + np.maximum(zk, 0.0)
    f_out = h @ params["w_out"] + params["b_out"]
    D = c_skip[:, None] * x_noisy + c_out[:, None] * f_out
    cache = None
    if want_cache:
        cache = {
            "u": u, "z0": z0, "h_pre": h_pre, "zs": zs, "h_last": h,
            "c_out": c_out, "cond_z": cond_z, "drop_mask": drop_mask,
        }
    return D, cache


def _backward(
    params: dict[str, np.ndarray],
    cfg: DenoiserConfig,
    cache: dict,
    dD: np.ndarray,
) -> dict[str, np.ndarray]:
    """Reverse-mode accumulation of dLoss/dparams given dLoss/dD."""
    d = dD.shape[1]
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dF = cache["c_out"][:, None] * dD
    grads["w_out"] = cache["h_last"].T @ dF
    grads["b_out"] = dF.sum(axis=0)
    dh = dF @ params["w_out"].T
    for k in reversed(range(cfg.depth)):
        dz = dh * (cache["zs"][k] > 0.0)
        grads[f"w_h{k}"] = cache["h_pre"][k].T @ dz
        grads[f"b_h{k}"] = dz.sum(axis=0)
        dh = dh + dz @ params[f"w_h{k}"].T
    dz0 = dh * (cache["z0"] > 0.0)
    grads["w_in"] = cache["u"].T @ dz0
    grads["b_in"] = dz0.sum(axis=0)
    du = dz0 @ params["w_in"].T
    demb = du[:, d + 2 * cfg.rff_dim :]
    drop = cache["drop_mask"]
    grads["null_cond"] = demb[drop].sum(axis=0)
    if cache["cond_z"] is not None:
        kept = ~drop
        grads["w_cond"] = cache["cond_z"][kept].T @ demb[kept]
        grads["b_cond"] = demb[kept].sum(axis=0)
    return grads


def denoise(
    model: DenoiserModel,
    x_noisy,
    sigma,
    condition=None,
    use_ema: bool = False,
) -> np.ndarray:
    """Evaluate the preconditioned denoiser.

    Accepts a single vector or a batch; `condition` is an (m,) or (B, m)
    array in z-scored objective space, or None for the unconditional
    (null-embedding) pathway.
    """
    params = model.ema if use_ema else model.params
    x = np.asarray(x_noisy, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.d:
        raise ValueError(f"expected decision dimension {model.d}, got {x.shape[1]}")
    b = x.shape[0]
    sig = np.asarray(sigma, dtype=np.float64)
    if sig.ndim == 0:
        sig = np.full(b, float(sig))
    if (sig <= 0.0).any():
        raise ValueError("sigma must be positive")
    cond_z = None
    if condition is not None:
        cond_z = np.atleast_2d(np.asarray(condition, dtype=np.float64))
        if cond_z.shape[0] == 1 and b > 1:
            cond_z = np.broadcast_to(cond_z, (b, model.m)).copy()
        if cond_z.shape != (b, model.m):
            raise ValueError(f"expected condition shape ({b}, {model.m})")
    D, _ = _forward(params, model.rff_freqs, model.config, x, sig, cond_z, None, False)
    return D[0] if single else D


def _edm_lambda(sigma: np.ndarray, sigma_data: float) -> np.ndarray:
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2


def loss_batch(
    model: DenoiserModel,
    batch: dict[str, np.ndarray],
    sigmas: np.ndarray,
    noise: np.ndarray,
    drop_mask: np.ndarray,
    compute_grads: bool = True,
):
    """Weighted denoising loss and its parameter gradients.

    batch holds encoded decisions "x" (B, d), z-scored conditions "y"
    (B, m) and per-sample weights "w" (B,). The loss is
    mean_i w_i * lambda(sigma_i) * ||D(x_i + n_i) - x_i||^2.
    """
    x = batch["x"]
    y = batch["y"]
    w = batch["w"]
    b = x.shape[0]
    lam = _edm_lambda(sigmas, model.config.sigma_data)
    D, cache = _forward(
        model.params, model.rff_freqs, model.config,
        x + noise, sigmas, y, drop_mask, compute_grads,
    )
    r = D - x
    per_sample = w * lam * (r * r).sum(axis=1)
    loss = float(per_sample.mean())
    if not math.isfinite(loss):
        bad = np.flatnonzero(~np.isfinite(per_sample))
        idx = int(bad[0]) if bad.size else -1
        raise TrainingDiverged(
            f"non-finite loss (batch index {idx}, sigma "
            f"{sigmas[idx] if idx >= 0 else float('nan')!r})"
        )
    if not compute_grads:
        return loss, None
    dD = (2.0 / b) * (w * lam)[:, None] * r
    grads = _backward(model.params, model.config, cache, dD)
    return loss, grads


def cosine_lr(step: int, max_steps: int, base_lr: float) -> float:
    """Cosine annealing from base_lr at step 0 to 0 at max_steps."""
    t = min(max(step, 0), max_steps) / max_steps
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


class _AdamW:
    """Decoupled weight decay Adam; decay only touches the MLP weight
    matrices (biases and the conditioning embedding are exempt)."""

    def __init__(self, params, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.decayed = {
            k for k in params
            if k.startswith("w_") and k not in ("w_cond",)
        }

    def step(self, params, grads, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            if k in self.decayed and self.weight_decay > 0.0:
                update = update + self.weight_decay * params[k]
            params[k] -= lr * update


def _ema_update(ema, params, decay):
    for k, v in params.items():
        ema[k] *= decay
        ema[k] += (1.0 - decay) * v


def _holdout_loss(model, x, y, w, sigmas, noise, drop_mask, batch_size):
    total = 0.0
    n = x.shape[0]
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        loss, _ = loss_batch(
            model,
            {"x": x[sl], "y": y[sl], "w": w[sl]},
            sigmas[sl], noise[sl], drop_mask[sl],
            compute_grads=False,
        )
        total += loss * (sl.stop - sl.start)
    return total / n


def train(
    dataset: OfflineDataset,
    weights: SampleWeights,
    config: TrainingConfig = TrainingConfig(),
    model_config: DenoiserConfig = DenoiserConfig(),
    metrics_hook: Optional[Callable[[int, float, float, float], None]] = None,
) -> DenoiserModel:
    """Fit the denoiser on a reweighted dataset.

    Decisions are affinely mapped to [-1, 1] via the task bounds and
    objectives z-scored before training. Early stopping watches the
    weighted denoising loss on a fixed holdout split (fixed noise draws,
    so successive evaluations are comparable); the best state seen is
    restored at the end. The EMA shadow is the set of weights meant for
    sampling.
    """
    stats = compute_normalization(dataset)
    x_all = stats.encode_decisions(dataset.X)
    y_all = stats.zscore_objectives(dataset.Y)
    w_all = np.asarray(weights.w, dtype=np.float64)
    n = x_all.shape[0]

    rng = np.random.default_rng(config.seed)
    model = init_model(dataset.d, dataset.m, stats, model_config,
                       seed=int(rng.integers(0, 2**63 - 1)))
    optimizer = _AdamW(model.params, config.weight_decay)

    perm = rng.permutation(n)
    n_hold = max(1, int(round(config.holdout_fraction * n)))
    hold_idx = perm[:n_hold]
    train_idx = perm[n_hold:]
    if train_idx.size == 0:
        raise ValueError("holdout split leaves no training data")

    hx, hy, hw = x_all[hold_idx], y_all[hold_idx], w_all[hold_idx]
    h_sig = np.exp(model_config.p_mean
                   + model_config.p_std * rng.standard_normal(n_hold))
    h_noise = rng.standard_normal((n_hold, dataset.d)) * h_sig[:, None]
    h_drop = rng.uniform(size=n_hold) < model_config.cfg_dropout_prob

    best_loss = math.inf
    best_state: Optional[tuple[dict, dict]] = None
    stale_evals = 0
    b = min(config.batch_size, train_idx.size)

    for step in range(config.max_steps):
        lr = cosine_lr(step, config.max_steps, config.learning_rate)
        rows = train_idx[rng.integers(0, train_idx.size, size=b)]
        sig = np.exp(model_config.p_mean
                     + model_config.p_std * rng.standard_normal(b))
        noise = rng.standard_normal((b, dataset.d)) * sig[:, None]
        drop = rng.uniform(size=b) < model_config.cfg_dropout_prob
        loss, grads = loss_batch(
            model, {"x": x_all[rows], "y": y_all[rows], "w": w_all[rows]},
            sig, noise, drop,
        )
        optimizer.step(model.params, grads, lr)
        _ema_update(model.ema, model.params, config.ema_decay)

        if (step + 1) % config.eval_interval == 0 or step + 1 == config.max_steps:
            h_loss = _holdout_loss(model, hx, hy, hw, h_sig, h_noise, h_drop,
                                   config.batch_size)
            if metrics_hook is not None:
                metrics_hook(step + 1, loss, h_loss, lr)
            if h_loss < best_loss:
                significant = h_loss < best_loss * (1.0 - config.min_rel_improvement)
                best_loss = h_loss
                best_state = (
                    {k: v.copy() for k, v in model.params.items()},
                    {k: v.copy() for k, v in model.ema.items()},
                )
                if significant:
                    stale_evals = 0
                else:
                    stale_evals += 1
            else:
                stale_evals += 1
            if stale_evals >= config.patience:
                break

    if best_state is not None:
        model.params, model.ema = best_state
    return model


# ---------------------------------------------------------------------------
# Checkpointing


def save_checkpoint(model: DenoiserModel, path) -> None:
    """Versioned binary dump; bit-exact on round trip."""
    names = ["rff_freqs"]
    arrays = [model.rff_freqs]
    for key in sorted(model.params):
        names.append(f"params.{key}")
        arrays.append(model.params[key])
    for key in sorted(model.ema):
        names.append(f"ema.{key}")
        arrays.append(model.ema[key])
    header = {
        "d": model.d,
        "m": model.m,
        "seed": model.seed,
        "config": asdict(model.config),
        "norm": model.norm.to_dict(),
        "arrays": [[name, list(arr.shape)] for name, arr in zip(names, arrays)],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<I", _CKPT_VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for arr in arrays:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> DenoiserModel:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _CKPT_MAGIC:
        raise CheckpointError("bad magic bytes; not a model checkpoint")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + header_len:
        raise CheckpointError("checkpoint header is truncated")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    config = DenoiserConfig(**header["config"])
    offset = 12 + header_len
    loaded: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise CheckpointError(f"checkpoint truncated in array {name!r}")
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8")
        loaded[name] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError("trailing bytes after checkpoint payload")
    params = {k.split(".", 1)[1]: v for k, v in loaded.items()
              if k.startswith("params.")}
    ema = {k.split(".", 1)[1]: v for k, v in loaded.items()
           if k.startswith("ema.")}
    if "rff_freqs" not in loaded or set(params) != set(ema) or not params:
        raise CheckpointError("checkpoint arrays are incomplete")
    model = DenoiserModel(
        config=config,
        d=int(header["d"]),
        m=int(header["m"]),
        seed=int(header["seed"]),
        params=params,
        ema=ema,
        rff_freqs=loaded["rff_freqs"],
        norm=NormalizationStats.from_dict(header["norm"]),
    )
    expected = _init_params(model.d, model.m, config, np.random.default_rng(0))
    for key, ref in expected.items():
        if key not in params or params[key].shape != ref.shape:
            raise CheckpointError(f"parameter {key!r} has unexpected shape")
    return model
