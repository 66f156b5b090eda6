"""Fully-connected autoencoder trained with mini-batch Adam.

Architecture: input -> ReLU hidden -> linear latent -> ReLU hidden -> linear
output (defaults 88-64-30-64-88). Loss is mean squared error over all batch
entries; binary cross entropy (with a sigmoid on the output) is available
behind the `loss` config switch but produces weaker embeddings and is not
the default. All gradients are exact analytic backprop; the ReLU subgradient
at zero is taken as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

DEFAULT_DIMS = (88, 64, 30)


@dataclass
class ModelParams:
    enc_w1: np.ndarray
    enc_b1: np.ndarray
    enc_w2: np.ndarray
    enc_b2: np.ndarray
    dec_w1: np.ndarray
    dec_b1: np.ndarray
    dec_w2: np.ndarray
    dec_b2: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.enc_w1.shape[0], self.enc_w1.shape[1], self.enc_w2.shape[1])

    def fields(self) -> list[str]:
        return [
            "enc_w1", "enc_b1", "enc_w2", "enc_b2",
            "dec_w1", "dec_b1", "dec_w2", "dec_b2",
        ]

    def check_finite(self) -> None:
        for name in self.fields():
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"non-finite values in parameter {name}")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 200
    epochs: int = 50
    test_ratio: float = 0.2
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: str = "mse"
    dims: tuple[int, int, int] = DEFAULT_DIMS

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if not (0.0 < self.test_ratio < 1.0):
            raise DataError("test_ratio must be in (0, 1)")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.loss not in ("mse", "bce"):
            raise DataError(f"unknown loss {self.loss!r}")


def init_params(seed: int, dims: tuple[int, int, int] = DEFAULT_DIMS) -> ModelParams:
    """Uniform Glorot weights, zero biases; bit-identical for equal seeds."""
    d_in, d_hidden, d_latent = dims
    if min(dims) < 1:
        raise DataError("layer dimensions must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return ModelParams(
        enc_w1=glorot(d_in, d_hidden),
        enc_b1=np.zeros(d_hidden),
        enc_w2=glorot(d_hidden, d_latent),
        enc_b2=np.zeros(d_latent),
        dec_w1=glorot(d_latent, d_hidden),
        dec_b1=np.zeros(d_hidden),
        dec_w2=glorot(d_hidden, d_in),
        dec_b2=np.zeros(d_in),
    )


def _as_batch(x: np.ndarray, d_in: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != d_in:
        raise DataError(f"input width {x.shape[1]} does not match model input {d_in}")
    return x, single


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(latent, reconstruction) for a vector or a batch of rows."""
    xb, single = _as_batch(x, params.dims[0])
    _, h, xhat = _forward_full(params, xb)
    if single:
        return h[0], xhat[0]
    return h, xhat


def _forward_full(params: ModelParams, xb: np.ndarray):
    z1 = xb @ params.enc_w1 + params.enc_b1
    a1 = np.maximum(z1, 0.0)
    h = a1 @ params.enc_w2 + params.enc_b2
    z2 = h @ params.dec_w1 + params.dec_b1
    a2 = np.maximum(z2, 0.0)
    xhat = a2 @ params.dec_w2 + params.dec_b2
    return (z1, a1, z2, a2), h, xhat


def encode(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Encoder half of forward."""
    xb, single = _as_batch(x, params.dims[0])
    a1 = np.maximum(xb @ params.enc_w1 + params.enc_b1, 0.0)
    h = a1 @ params.enc_w2 + params.enc_b2
    return h[0] if single else h


def mse_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DataError("mse_loss requires equal shapes")
    return float(np.mean((x - x_hat) ** 2))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(x: np.ndarray, logits: np.ndarray) -> float:
    p = np.clip(_sigmoid(np.asarray(logits, dtype=np.float64)), 1e-12, 1.0 - 1e-12)
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(-(x * np.log(p) + (1.0 - x) * np.log(1.0 - p))))


def batch_loss(params: ModelParams, xb: np.ndarray, loss: str = "mse") -> float:
    _, _, xhat = _forward_full(params, np.asarray(xb, dtype=np.float64))
    if loss == "bce":
        return bce_loss(xb, xhat)
    return mse_loss(xb, xhat)


def backward(params: ModelParams, batch: np.ndarray, loss: str = "mse") -> ModelParams:
    """Exact gradients of the mean batch loss, shaped like ModelParams."""
    xb, _ = _as_batch(batch, params.dims[0])
    if xb.shape[0] < 1:
        raise DataError("batch must be non-empty")
    (z1, a1, z2, a2), h, xhat = _forward_full(params, xb)
    n_entries = xb.shape[0] * xb.shape[1]
    if loss == "bce":
        d_out = (_sigmoid(xhat) - xb) / n_entries
    else:
        d_out = 2.0 * (xhat - xb) / n_entries

    g_dec_w2 = a2.T @ d_out
    g_dec_b2 = d_out.sum(axis=0)
    d_a2 = (d_out @ params.dec_w2.T) * (z2 > 0.0)
    g_dec_w1 = h.T @ d_a2
    g_dec_b1 = d_a2.sum(axis=0)
    d_h = d_a2 @ params.dec_w1.T
    g_enc_w2 = a1.T @ d_h
    g_enc_b2 = d_h.sum(axis=0)
    d_a1 = (d_h @ params.enc_w2.T) * (z1 > 0.0)
    g_enc_w1 = xb.T @ d_a1
    g_enc_b1 = d_a1.sum(axis=0)
    return ModelParams(
        enc_w1=g_enc_w1, enc_b1=g_enc_b1, enc_w2=g_enc_w2, enc_b2=g_enc_b2,
        dec_w1=g_dec_w1, dec_b1=g_dec_b1, dec_w2=g_dec_w2, dec_b2=g_dec_b2,
    )


class _Adam:
    def __init__(self, params: ModelParams, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = {k: np.zeros_like(getattr(params, k)) for k in params.fields()}
        self.v = {k: np.zeros_like(getattr(params, k)) for k in params.fields()}

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        cfg = self.config
        self.t += 1
        updates = {}
        for k in params.fields():
            g = getattr(grads, k)
            self.m[k] = cfg.adam_beta1 * self.m[k] + (1.0 - cfg.adam_beta1) * g
            self.v[k] = cfg.adam_beta2 * self.v[k] + (1.0 - cfg.adam_beta2) * g * g
            m_hat = self.m[k] / (1.0 - cfg.adam_beta1 ** self.t)
            v_hat = self.v[k] / (1.0 - cfg.adam_beta2 ** self.t)
            updates[k] = getattr(params, k) - cfg.learning_rate * m_hat / (
                np.sqrt(v_hat) + cfg.adam_eps
            )
        return ModelParams(**updates)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[tuple[int, float, float]] = field(default_factory=list)
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None


def split_indices(
    n: int, test_ratio: float, seed: int, groups: list[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split; optionally stratified by group labels."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    if groups is None:
        perm = rng.permutation(n)
        n_test = max(1, int(round(n * test_ratio)))
        if n_test >= n:
            raise DataError("dataset too small for the requested test ratio")
        return np.sort(perm[n_test:]), np.sort(perm[:n_test])
    test_parts = []
    train_parts = []
    for g in sorted(set(groups)):
        idx = np.array([i for i, label in enumerate(groups) if label == g])
        perm = idx[rng.permutation(len(idx))]
        n_test = max(1, int(round(len(idx) * test_ratio)))
        if n_test >= len(idx):
            raise DataError(f"group {g!r} too small for the requested test ratio")
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def train(
    dataset: np.ndarray, config: TrainConfig, groups: list[str] | None = None
) -> TrainResult:
    """Train on a feature matrix; deterministic for a fixed seed."""
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2:
        raise DataError("dataset must be a 2-d matrix")
    if data.shape[0] < 2.0 / config.test_ratio:
        raise DataError(
            f"dataset needs at least {2.0 / config.test_ratio:.0f} rows "
            f"for test_ratio {config.test_ratio}"
        )
    dims = (data.shape[1], config.dims[1], config.dims[2])
    params = init_params(config.seed, dims)
    train_idx, test_idx = split_indices(
        data.shape[0], config.test_ratio, config.seed, groups
    )
    x_train, x_test = data[train_idx], data[test_idx]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(2,)))
    adam = _Adam(params, config)
    history: list[tuple[int, float, float]] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_train))
        total_sq = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            xb = x_train[order[start : start + config.batch_size]]
            grads = backward(params, xb, config.loss)
            loss = batch_loss(params, xb, config.loss)
            if not np.isfinite(loss):
                raise DataError(
                    f"training diverged: non-finite loss at epoch {epoch}, batch {b}"
                )
            params = adam.step(params, grads)
            total_sq += loss * len(xb)
        params.check_finite()
        train_loss = total_sq / len(x_train)
        test_loss = batch_loss(params, x_test, config.loss)
        history.append((epoch, train_loss, test_loss))
    return TrainResult(
        params=params, history=history, train_indices=train_idx, test_indices=test_idx
    )


def save_model(params: ModelParams, path: str, seed: int, schema_version: str) -> None:
    doc = {
        "dims": list(params.dims),
        "seed": seed,
        "schema_version": schema_version,
        "layers": {k: getattr(params, k).tolist() for k in params.fields()},
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> tuple[ModelParams, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    layers = {k: np.array(v, dtype=np.float64) for k, v in doc["layers"].items()}
    params = ModelParams(**layers)
    params.check_finite()
    return params, {k: doc[k] for k in ("dims", "seed", "schema_version")}


def write_history_csv(history: list[tuple[int, float, float]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_mse,test_mse\n")
        for epoch, tr, te in history:
            fh.write(f"{epoch},{float(tr)!r},{float(te)!r}\n")
