"""Two-layer stacked LSTM emitting per-day replication weight vectors.

For one target stock the network maps the other stocks' same-day returns
X_t to a bounded weight vector beta_t = tanh(W_hb h2_t + b_b), trained by
backpropagation through time on

    L = (1/W) sum_t [ (R_t - X_t . beta_t)^2 + p * mean_i |beta_{t,i}| ]

with an Adam update.  Everything is plain numpy; the batched forward/backward
carry a trailing batch axis so training windows run in one pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, ContractError, DivergenceError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "statarb-lstm"
CHECKPOINT_VERSION = 1

GATE_NAMES = ("f", "c", "i", "o")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmLayerParams:
    W_hf: np.ndarray
    W_hc: np.ndarray
    W_hi: np.ndarray
    W_ho: np.ndarray
    W_xf: np.ndarray
    W_xc: np.ndarray
    W_xi: np.ndarray
    W_xo: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_hf.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W_xf.shape[1]

    def tensors(self, prefix: str) -> Iterator[tuple[str, np.ndarray]]:
        for gate in GATE_NAMES:
            yield f"{prefix}.W_h{gate}", getattr(self, f"W_h{gate}")
        for gate in GATE_NAMES:
            yield f"{prefix}.W_x{gate}", getattr(self, f"W_x{gate}")
        for gate in GATE_NAMES:
            yield f"{prefix}.b_{gate}", getattr(self, f"b_{gate}")


@dataclass
class StackedLstm:
    layer1: LstmLayerParams
    layer2: LstmLayerParams
    head_w: np.ndarray   # out x hidden2
    head_b: np.ndarray   # out

    @property
    def in_dim(self) -> int:
        return self.layer1.in_dim

    @property
    def out_dim(self) -> int:
        return self.head_w.shape[0]

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        yield from self.layer1.tensors("layer1")
        yield from self.layer2.tensors("layer2")
        yield "head.W", self.head_w
        yield "head.b", self.head_b

    def copy(self) -> "StackedLstm":
        return StackedLstm(
            layer1=LstmLayerParams(**{
                n.split(".")[1]: a.copy() for n, a in self.layer1.tensors("l")
            }),
            layer2=LstmLayerParams(**{
                n.split(".")[1]: a.copy() for n, a in self.layer2.tensors("l")
            }),
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )


@dataclass
class TrainConfig:
    window: int = 120
    batch: int = 16
    l1_penalty: float = 1e-5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    hidden: int = 64
    seed: int = 0
    clip_norm: float | None = None   # optional global-norm clip for recovery

    def __post_init__(self):
        if self.window < 2 or self.batch < 1 or self.l1_penalty < 0:
            raise ConfigError("need window >= 2, batch >= 1, l1_penalty >= 0")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_model(cls, model: StackedLstm) -> "AdamState":
        return cls(m={n: np.zeros_like(a) for n, a in model.tensors()},
                   v={n: np.zeros_like(a) for n, a in model.tensors()})


def init_layer(in_dim: int, hidden: int, rng: np.random.Generator) -> LstmLayerParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights; forget bias starts at 1."""
    sh = 1.0 / math.sqrt(hidden)
    sx = 1.0 / math.sqrt(in_dim)
    kw = {}
    for gate in GATE_NAMES:
        kw[f"W_h{gate}"] = rng.uniform(-sh, sh, size=(hidden, hidden))
    for gate in GATE_NAMES:
        kw[f"W_x{gate}"] = rng.uniform(-sx, sx, size=(hidden, in_dim))
    for gate in GATE_NAMES:
        kw[f"b_{gate}"] = np.zeros(hidden)
    kw["b_f"] = np.ones(hidden)
    return LstmLayerParams(**kw)


def init_model(in_dim: int, out_dim: int, hidden: int,
               seed: int | np.random.Generator) -> StackedLstm:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layer1 = init_layer(in_dim, hidden, rng)
    layer2 = init_layer(hidden, hidden, rng)
    s = 1.0 / math.sqrt(hidden)
    head_w = rng.uniform(-s, s, size=(out_dim, hidden))
    head_b = np.zeros(out_dim)
    return StackedLstm(layer1=layer1, layer2=layer2, head_w=head_w, head_b=head_b)


def zero_model(in_dim: int, out_dim: int, hidden: int) -> StackedLstm:
    rng = np.random.default_rng(0)
    model = init_model(in_dim, out_dim, hidden, rng)
    for _, a in model.tensors():
        a[...] = 0.0
    return model


def _col(b: np.ndarray, like: np.ndarray) -> np.ndarray:
    return b[:, None] if like.ndim == 2 else b


def lstm_step(params: LstmLayerParams, x: np.ndarray, h_prev: np.ndarray,
              c_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One recursion of a single LSTM unit; gates stay in (0,1), |h| <= 1."""
    cache = _cell_forward(params, np.asarray(x, float),
                          np.asarray(h_prev, float), np.asarray(c_prev, float))
    if not np.all(np.isfinite(cache.h)):
        raise DivergenceError("NaN in LSTM state")
    return cache.h, cache.c


@dataclass
class _StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    chat: np.ndarray
    i: np.ndarray
    o: np.ndarray
    c: np.ndarray
    h: np.ndarray


def _cell_forward(params: LstmLayerParams, x, h_prev, c_prev) -> _StepCache:
    f = _sigmoid(params.W_hf @ h_prev + params.W_xf @ x + _col(params.b_f, x))
    chat = np.tanh(params.W_hc @ h_prev + params.W_xc @ x + _col(params.b_c, x))
    i = _sigmoid(params.W_hi @ h_prev + params.W_xi @ x + _col(params.b_i, x))
    c = c_prev * f + i * chat
    o = _sigmoid(params.W_ho @ h_prev + params.W_xo @ x + _col(params.b_o, x))
    h = o * np.tanh(c)
    return _StepCache(x=x, h_prev=h_prev, c_prev=c_prev, f=f, chat=chat,
                      i=i, o=o, c=c, h=h)


def _cell_backward(params: LstmLayerParams, cache: _StepCache,
                   dh: np.ndarray, dc_in: np.ndarray,
                   grads: dict[str, np.ndarray], prefix: str):
    """Returns (dh_prev, dc_prev, dx); accumulates parameter grads in place."""
    tc = np.tanh(cache.c)
    do = dh * tc
    dc = dc_in + dh * cache.o * (1.0 - tc * tc)
    df = dc * cache.c_prev
    di = dc * cache.chat
    dchat = dc * cache.i
    dc_prev = dc * cache.f

    dzf = df * cache.f * (1.0 - cache.f)
    dzi = di * cache.i * (1.0 - cache.i)
    dzo = do * cache.o * (1.0 - cache.o)
    dzc = dchat * (1.0 - cache.chat * cache.chat)

    batched = cache.x.ndim == 2
    for gate, dz in zip(GATE_NAMES, (dzf, dzc, dzi, dzo)):
        if batched:
            grads[f"{prefix}.W_h{gate}"] += dz @ cache.h_prev.T
            grads[f"{prefix}.W_x{gate}"] += dz @ cache.x.T
            grads[f"{prefix}.b_{gate}"] += dz.sum(axis=1)
        else:
            grads[f"{prefix}.W_h{gate}"] += np.outer(dz, cache.h_prev)
            grads[f"{prefix}.W_x{gate}"] += np.outer(dz, cache.x)
            grads[f"{prefix}.b_{gate}"] += dz

    dh_prev = (params.W_hf.T @ dzf + params.W_hc.T @ dzc
               + params.W_hi.T @ dzi + params.W_ho.T @ dzo)
    dx = (params.W_xf.T @ dzf + params.W_xc.T @ dzc
          + params.W_xi.T @ dzi + params.W_xo.T @ dzo)
    return dh_prev, dc_prev, dx


def _forward_cached(model: StackedLstm, X, h0=None, c0=None):
    """X is [in, T] or [in, T, B]; returns (betas, caches1, caches2, final state)."""
    batched = X.ndim == 3
    T = X.shape[1]
    h = model.layer1.hidden
    shape1 = (h, X.shape[2]) if batched else (h,)
    if h0 is None:
        h1, c1 = np.zeros(shape1), np.zeros(shape1)
        h2, c2 = np.zeros(shape1), np.zeros(shape1)
    else:
        (h1, c1), (h2, c2) = h0, c0

    caches1, caches2, betas = [], [], []
    for t in range(T):
        x = X[:, t] if not batched else X[:, t, :]
        cache1 = _cell_forward(model.layer1, x, h1, c1)
        h1, c1 = cache1.h, cache1.c
        cache2 = _cell_forward(model.layer2, h1, h2, c2)
        h2, c2 = cache2.h, cache2.c
        beta = np.tanh(model.head_w @ h2 + _col(model.head_b, h2))
        caches1.append(cache1)
        caches2.append(cache2)
        betas.append(beta)
    stacked = np.stack(betas, axis=1)   # [out, T] or [out, T, B]
    if not np.all(np.isfinite(stacked)):
        raise DivergenceError("NaN in forward pass")
    return stacked, caches1, caches2, ((h1, c1), (h2, c2))


def forward_betas(model: StackedLstm, X: np.ndarray,
                  state=None) -> np.ndarray:
    """Weight vectors for each day of X [in, T]; state starts zeroed."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != model.in_dim:
        raise ContractError(f"X has shape {X.shape}, expected ({model.in_dim}, T)")
    h0 = c0 = None
    if state is not None:
        h0, c0 = state
    betas, _, _, _ = _forward_cached(model, X, h0, c0)
    return betas


def forward_betas_with_state(model: StackedLstm, X: np.ndarray, state=None):
    """Like forward_betas but also returns the final (layer1, layer2) states."""
    X = np.asarray(X, dtype=float)
    h0 = c0 = None
    if state is not None:
        h0, c0 = state
    betas, _, _, final = _forward_cached(model, X, h0, c0)
    return betas, final


def loss(model: StackedLstm, X: np.ndarray, R: np.ndarray,
         l1_penalty: float = 1e-5) -> float:
    """Window loss: MSE of replication errors plus the mean-|beta| penalty."""
    return _loss_and_grads(model, np.asarray(X, float), np.asarray(R, float),
                           want_grads=False, l1_penalty=l1_penalty)[0]


def backward(model: StackedLstm, X: np.ndarray, R: np.ndarray,
             l1_penalty: float = 1e-5) -> dict[str, np.ndarray]:
    """Analytic gradients of the window loss for every parameter tensor."""
    return _loss_and_grads(model, np.asarray(X, float), np.asarray(R, float),
                           want_grads=True, l1_penalty=l1_penalty)[1]


def _loss_and_grads(model: StackedLstm, X: np.ndarray, R: np.ndarray,
                    want_grads: bool, l1_penalty: float = 1e-5):
    """Single window [in, W] / [W] or batch [in, W, B] / [W, B].

    Batched grads come back summed over the batch axis; the caller divides.
    """
    batched = X.ndim == 3
    W = X.shape[1]
    out = model.out_dim
    betas, caches1, caches2, _ = _forward_cached(model, X)

    if batched:
        err = R - np.einsum("itb,itb->tb", X, betas)    # [W, B]
        per_window = (err**2).sum(axis=0) / W \
            + l1_penalty * np.abs(betas).sum(axis=(0, 1)) / (out * W)
        total_loss = float(per_window.mean())
    else:
        err = R - np.einsum("it,it->t", X, betas)
        total_loss = float((err**2).sum() / W
                           + l1_penalty * np.abs(betas).sum() / (out * W))
    if not math.isfinite(total_loss):
        raise DivergenceError("non-finite loss")
    if not want_grads:
        return total_loss, None

    grads = {n: np.zeros_like(a) for n, a in model.tensors()}
    dh1_carry = dc1_carry = dh2_carry = dc2_carry = 0.0
    for t in reversed(range(W)):
        beta = betas[:, t] if not batched else betas[:, t, :]
        x = X[:, t] if not batched else X[:, t, :]
        e = err[t]
        dbeta = (-2.0 * e * x + (l1_penalty / out) * np.sign(beta)) / W
        dz = dbeta * (1.0 - beta * beta)
        h2 = caches2[t].h
        if batched:
            grads["head.W"] += dz @ h2.T
            grads["head.b"] += dz.sum(axis=1)
        else:
            grads["head.W"] += np.outer(dz, h2)
            grads["head.b"] += dz
        dh2 = model.head_w.T @ dz + dh2_carry
        dh2_carry, dc2_carry, dx2 = _cell_backward(
            model.layer2, caches2[t], dh2, dc2_carry, grads, "layer2")
        dh1 = dx2 + dh1_carry
        dh1_carry, dc1_carry, _ = _cell_backward(
            model.layer1, caches1[t], dh1, dc1_carry, grads, "layer1")

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name}")
    return total_loss, grads


def adam_step(model: StackedLstm, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[StackedLstm, AdamState]:
    """Bias-corrected moment update applied in place; returns both for chaining."""
    state.step += 1
    t = state.step
    for name, param in model.tensors():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1**t)
        v_hat = state.v[name] / (1.0 - beta2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return model, state


def train_arrays(X: np.ndarray, R: np.ndarray, cfg: TrainConfig,
                 model: StackedLstm | None = None) -> tuple[StackedLstm, list[float]]:
    """Tune a stacked network on history X [in, T], R [T]; returns loss trace.

    Each epoch draws `batch` random window starts (windows may overlap),
    averages the loss and gradients over them and takes one Adam step.
    """
    X = np.asarray(X, dtype=float)
    R = np.asarray(R, dtype=float)
    in_dim, T = X.shape
    if T < cfg.window + cfg.batch:
        raise ConfigError(f"history of {T} days too short for window {cfg.window} "
                          f"and batch {cfg.batch}")
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = init_model(in_dim, in_dim, cfg.hidden, rng)
    state = AdamState.for_model(model)

    trace: list[float] = []
    offsets = np.arange(cfg.window)
    for _ in range(cfg.epochs):
        starts = rng.integers(0, T - cfg.window + 1, size=cfg.batch)
        Xb = X[:, starts[None, :] + offsets[:, None]]      # [in, W, B]
        Rb = R[starts[None, :] + offsets[:, None]]         # [W, B]
        batch_loss, grads = _loss_and_grads(model, Xb, Rb, want_grads=True,
                                            l1_penalty=cfg.l1_penalty)
        for name in grads:
            grads[name] /= cfg.batch
        if cfg.clip_norm is not None:
            total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > cfg.clip_norm:
                scale = cfg.clip_norm / total
                for name in grads:
                    grads[name] *= scale
        adam_step(model, grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        trace.append(batch_loss)

    if len(trace) > 1 and trace[-1] >= trace[0]:
        logger.warning("training loss did not decrease (%.3g -> %.3g)",
                       trace[0], trace[-1])
    return model, trace


def train(panel, target: str, cfg: TrainConfig) -> tuple[StackedLstm, list[float]]:
    """Train a replication network for one panel ticker against all others."""
    idx = panel.tickers.index(target)
    others = [i for i in range(len(panel.tickers)) if i != idx]
    X = panel.returns[others, :]
    R = panel.returns[idx, :]
    return train_arrays(X, R, cfg)


def infer_betas(model: StackedLstm, X_all: np.ndarray, start: int, stop: int,
                warmup: int = 120) -> np.ndarray:
    """Per-day betas for columns [start, stop) after a warm-up run.

    Hidden and cell states start zeroed `warmup` columns before `start` and
    are carried through, so beta at column t only sees inputs up to t.
    """
    if start - warmup < 0:
        raise ConfigError(f"need {warmup} warm-up columns before {start}")
    betas = forward_betas(model, X_all[:, start - warmup:stop])
    return betas[:, warmup:]


def save_checkpoint(model: StackedLstm, path: str | Path) -> None:
    """Versioned numeric-text dump of every tensor with shape headers."""
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
             f"dims {model.in_dim} {model.layer1.hidden} {model.out_dim}"]
    for name, a in model.tensors():
        dims = " ".join(str(s) for s in a.shape)
        lines.append(f"tensor {name} {dims}")
        flat = a.reshape(-1)
        lines.append(" ".join(repr(float(v)) for v in flat))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> StackedLstm:
    text = Path(path).read_text(encoding="utf-8").strip().split("\n")
    header = text[0].split()
    if header[0] != CHECKPOINT_MAGIC or int(header[1]) != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint header {text[0]!r}")
    in_dim, hidden, out_dim = (int(v) for v in text[1].split()[1:])
    model = zero_model(in_dim, out_dim, hidden)
    tensors = dict(model.tensors())
    pos = 2
    while pos < len(text):
        parts = text[pos].split()
        if parts[0] != "tensor":
            raise ConfigError(f"bad checkpoint line {pos + 1}")
        name = parts[1]
        shape = tuple(int(v) for v in parts[2:])
        values = np.array([float(v) for v in text[pos + 1].split()])
        if name not in tensors or values.size != int(np.prod(shape)):
            raise ConfigError(f"checkpoint tensor {name} malformed")
        tensors[name][...] = values.reshape(shape)
        pos += 2
    return model
