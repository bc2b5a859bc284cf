"""From-scratch parallel-LSTM regressor with exact BPTT gradients.

The model is a bank of independent LSTM cells that all read the same
flattened (participant, channel) input vector each frame, followed by a
dense head with ReLU that maps the concatenated final hidden states to a
single nonnegative synchrony prediction.

Everything is float64 numpy. For speed the cell parameters are stored
stacked across the bank: gate order along the 4H axis is input, forget,
cell-candidate, output. ``cells`` unpacks to per-cell parameter records.

Gates use sigmoid and the candidate/cell nonlinearity is tanh by default;
``cell_activation="relu"`` replaces tanh with ReLU inside the cell for
strict all-ReLU experiments.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Window

DEFAULT_LOOKBACK = 30

_GATES = ("input", "forget", "cell", "output")


class ModelFormatError(ValueError):
    """Raised when a model file is malformed, truncated, or inconsistent."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow for very negative x rounds to exactly 0, which is the
    # correctly rounded sigmoid value, so the warning is suppressed
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class LstmCellParams:
    """Per-gate weights of one LSTM cell.

    ``w_*`` are input weights (hidden x input), ``r_*`` recurrent weights
    (hidden x hidden), ``b_*`` biases (hidden,).
    """

    w_input: np.ndarray
    w_forget: np.ndarray
    w_cell: np.ndarray
    w_output: np.ndarray
    r_input: np.ndarray
    r_forget: np.ndarray
    r_cell: np.ndarray
    r_output: np.ndarray
    b_input: np.ndarray
    b_forget: np.ndarray
    b_cell: np.ndarray
    b_output: np.ndarray

    def __post_init__(self):
        h, d = self.w_input.shape
        for g in _GATES:
            if getattr(self, f"w_{g}").shape != (h, d):
                raise ValueError("inconsistent input weight shapes")
            if getattr(self, f"r_{g}").shape != (h, h):
                raise ValueError("inconsistent recurrent weight shapes")
            if getattr(self, f"b_{g}").shape != (h,):
                raise ValueError("inconsistent bias shapes")
            for prefix in ("w", "r", "b"):
                if not np.all(np.isfinite(getattr(self, f"{prefix}_{g}"))):
                    raise ValueError("non-finite parameters")

    @property
    def hidden_size(self) -> int:
        return self.w_input.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_input.shape[1]


def cell_step(params: LstmCellParams, x_t, h_prev, c_prev, cell_activation="tanh"):
    """One LSTM recurrence step. Reference (single-vector) implementation."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if x_t.shape != (params.input_size,) or h_prev.shape != (params.hidden_size,):
        raise ValueError("dimension mismatch")
    act = np.tanh if cell_activation == "tanh" else lambda a: np.maximum(a, 0.0)
    i = _sigmoid(params.w_input @ x_t + params.r_input @ h_prev + params.b_input)
    f = _sigmoid(params.w_forget @ x_t + params.r_forget @ h_prev + params.b_forget)
    g = act(params.w_cell @ x_t + params.r_cell @ h_prev + params.b_cell)
    o = _sigmoid(params.w_output @ x_t + params.r_output @ h_prev + params.b_output)
    c_t = f * c_prev + i * g
    h_t = o * act(c_t)
    return h_t, c_t


@dataclass(frozen=True)
class SynchronyModel:
    """Bank of LSTM cells plus dense ReLU head.

    ``wx``: (n_lstms, 4H, D) input weights, ``rh``: (n_lstms, 4H, H)
    recurrent weights, ``b``: (n_lstms, 4H) biases, gate order i,f,g,o.
    ``head_w``: (n_lstms * H,), ``head_b``: scalar.
    """

    wx: np.ndarray
    rh: np.ndarray
    b: np.ndarray
    head_w: np.ndarray
    head_b: float
    cell_activation: str = "tanh"

    def __post_init__(self):
        n, k, d = self.wx.shape
        h = k // 4
        if k != 4 * h or self.rh.shape != (n, k, h) or self.b.shape != (n, k):
            raise ValueError("inconsistent LSTM bank shapes")
        if self.head_w.shape != (n * h,):
            raise ValueError("head dimension must be n_lstms * hidden_size")
        if self.cell_activation not in ("tanh", "relu"):
            raise ValueError("cell_activation must be 'tanh' or 'relu'")
        for arr in (self.wx, self.rh, self.b, self.head_w):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite parameters")

    @property
    def n_lstms(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.wx.shape[1] // 4

    @property
    def input_size(self) -> int:
        return self.wx.shape[2]

    @property
    def cells(self) -> list[LstmCellParams]:
        h = self.hidden_size
        out = []
        for n in range(self.n_lstms):
            kw = {}
            for gi, g in enumerate(_GATES):
                sl = slice(gi * h, (gi + 1) * h)
                kw[f"w_{g}"] = self.wx[n, sl, :].copy()
                kw[f"r_{g}"] = self.rh[n, sl, :].copy()
                kw[f"b_{g}"] = self.b[n, sl].copy()
            out.append(LstmCellParams(**kw))
        return out

    def params(self) -> dict[str, np.ndarray]:
        return {
            "wx": self.wx,
            "rh": self.rh,
            "b": self.b,
            "head_w": self.head_w,
            "head_b": np.array([self.head_b]),
        }

    def with_params(self, p: dict[str, np.ndarray]) -> "SynchronyModel":
        return SynchronyModel(
            wx=p["wx"],
            rh=p["rh"],
            b=p["b"],
            head_w=p["head_w"],
            head_b=float(p["head_b"][0]),
            cell_activation=self.cell_activation,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. All configurable; defaults are standard
    robust LSTM practice."""

    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    optimizer: str = "adam"
    clip_norm: float = 5.0
    seed: int = 0
    hidden_size: int = 32
    n_lstms: int = 6
    lookback: int = DEFAULT_LOOKBACK
    cell_activation: str = "tanh"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.hidden_size,
               self.n_lstms, self.lookback) <= 0 or self.epochs < 0:
            raise ValueError("invalid training configuration")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


def init_model(
    input_size: int,
    n_lstms: int = 6,
    hidden_size: int = 32,
    seed: int = 0,
    cell_activation: str = "tanh",
) -> SynchronyModel:
    """Xavier-uniform weights, forget-gate bias +1, other biases 0."""
    rng = np.random.default_rng(seed)
    h, d = hidden_size, input_size

    def xavier(shape, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    wx = xavier((n_lstms, 4 * h, d), d, h)
    rh = xavier((n_lstms, 4 * h, h), h, h)
    b = np.zeros((n_lstms, 4 * h))
    b[:, h : 2 * h] = 1.0
    head_w = xavier((n_lstms * h,), n_lstms * h, 1)
    return SynchronyModel(wx, rh, b, head_w, 0.0, cell_activation)


def window_to_input(window: Window) -> np.ndarray:
    """Flatten a (K, C, W) window into a (W, K*C) per-frame input matrix."""
    k, c, w = window.data.shape
    return window.data.reshape(k * c, w).T


def windows_to_batch(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (B, W, K*C) inputs and (B,) labels."""
    if not windows:
        raise ValueError("empty batch")
    x = np.stack([window_to_input(w) for w in windows])
    y = np.array([w.label for w in windows])
    return x, y


def _act(name):
    if name == "tanh":
        return np.tanh, lambda pre, post: 1.0 - post**2
    return (lambda a: np.maximum(a, 0.0)), (lambda pre, post: (pre > 0).astype(float))


def forward_batch(
    model: SynchronyModel,
    x: np.ndarray,
    lookback: int | None = None,
    want_cache: bool = False,
):
    """Run the bank over a (B, T, D) batch; returns (B,) predictions.

    Only the final ``lookback`` frames are consumed. Hidden and cell
    states start at zero for every window (no carryover).
    """
    if x.ndim != 3 or x.shape[2] != model.input_size:
        raise ValueError("dimension mismatch: batch must be (B, T, input_size)")
    lb = lookback or DEFAULT_LOOKBACK
    if x.shape[1] < lb:
        raise ValueError("window shorter than lookback")
    x = x[:, -lb:, :]
    bsz, t, d = x.shape
    n, hh = model.n_lstms, model.hidden_size
    act, _ = _act(model.cell_activation)

    # internal layout (n_lstms, batch, ...) so each step is a batched GEMM
    h = np.zeros((n, bsz, hh))
    c = np.zeros((n, bsz, hh))
    steps = []
    xw = np.matmul(
        x.reshape(1, bsz * t, d), model.wx.transpose(0, 2, 1)
    ).reshape(n, bsz, t, 4 * hh)
    rh_t = np.ascontiguousarray(model.rh.transpose(0, 2, 1))
    for ti in range(t):
        a = xw[:, :, ti, :] + np.matmul(h, rh_t) + model.b[:, None, :]
        i = _sigmoid(a[..., :hh])
        f = _sigmoid(a[..., hh : 2 * hh])
        g = act(a[..., 2 * hh : 3 * hh])
        o = _sigmoid(a[..., 3 * hh :])
        c_prev = c
        c = f * c_prev + i * g
        tc = act(c)
        h_prev = h
        h = o * tc
        if want_cache:
            steps.append((a, i, f, g, o, c_prev, c, tc, h_prev))
    hcat = h.transpose(1, 0, 2).reshape(bsz, n * hh)
    z = hcat @ model.head_w + model.head_b
    pred = np.maximum(z, 0.0)
    if want_cache:
        return pred, {"x": x, "steps": steps, "hcat": hcat, "z": z}
    return pred


def model_forward(
    model: SynchronyModel, window: Window, lookback: int | None = None
) -> float:
    """Scalar synchrony prediction for one window (always >= 0)."""
    x, _ = windows_to_batch([window])
    return float(forward_batch(model, x, lookback=lookback)[0])


def mse_loss(preds, labels) -> float:
    """Mean squared error."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("need equal-length non-empty inputs")
    return float(np.mean((p - y) ** 2))


def loss_and_grads(
    model: SynchronyModel,
    x: np.ndarray,
    y: np.ndarray,
    lookback: int | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-MSE loss and exact gradients for every parameter via BPTT."""
    pred, cache = forward_batch(model, x, lookback=lookback, want_cache=True)
    if not np.all(np.isfinite(pred)):
        raise FloatingPointError("numerical overflow in forward pass")
    bsz = x.shape[0]
    n, hh = model.n_lstms, model.hidden_size
    _, act_deriv = _act(model.cell_activation)
    loss = mse_loss(pred, y)

    dpred = 2.0 * (pred - y) / bsz
    dz = dpred * (cache["z"] > 0)
    g_head_w = cache["hcat"].T @ dz
    g_head_b = float(np.sum(dz))
    # back to the (n_lstms, batch, hidden) layout used in the forward pass
    dh = np.ascontiguousarray(
        (dz[:, None] * model.head_w[None, :]).reshape(bsz, n, hh).transpose(1, 0, 2)
    )
    dc = np.zeros_like(dh)

    g_wx = np.zeros_like(model.wx)
    g_rh = np.zeros_like(model.rh)
    g_b = np.zeros_like(model.b)
    xs = cache["x"]
    for ti in range(len(cache["steps"]) - 1, -1, -1):
        a, i, f, g, o, c_prev, c, tc, h_prev = cache["steps"][ti]
        do = dh * tc
        da_o = do * o * (1.0 - o)
        dc = dc + dh * o * act_deriv(c, tc)
        di = dc * g
        da_i = di * i * (1.0 - i)
        df = dc * c_prev
        da_f = df * f * (1.0 - f)
        dg = dc * i
        da_g = dg * act_deriv(a[..., 2 * hh : 3 * hh], g)
        da = np.concatenate([da_i, da_f, da_g, da_o], axis=-1)  # (n, B, 4H)
        da_t = da.transpose(0, 2, 1)  # (n, 4H, B)
        g_wx += np.matmul(da_t, xs[None, :, ti, :])
        g_rh += np.matmul(da_t, h_prev)
        g_b += da.sum(axis=1)
        dh = np.matmul(da, model.rh)
        dc = dc * f
    grads = {
        "wx": g_wx,
        "rh": g_rh,
        "b": g_b,
        "head_w": g_head_w,
        "head_b": np.array([g_head_b]),
    }
    return loss, grads


def backward(
    model: SynchronyModel,
    windows: list[Window],
    labels=None,
    lookback: int | None = None,
) -> dict[str, np.ndarray]:
    """Gradients of mean MSE over a batch of windows."""
    x, y = windows_to_batch(windows)
    if labels is not None:
        y = np.asarray(labels, dtype=np.float64)
    _, grads = loss_and_grads(model, x, y, lookback=lookback)
    return grads


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g**2)) for g in grads.values())))


def clip_by_global_norm(
    grads: dict[str, np.ndarray], threshold: float
) -> dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= threshold or norm == 0.0:
        return grads
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}


class Optimizer:
    """Adam (default) or plain SGD with global-norm gradient clipping."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m: dict[str, np.ndarray] | None = None
        self.v: dict[str, np.ndarray] | None = None

    def step(
        self, model: SynchronyModel, grads: dict[str, np.ndarray]
    ) -> SynchronyModel:
        cfg = self.config
        grads = clip_by_global_norm(grads, cfg.clip_norm)
        params = {k: p.astype(np.float64, copy=True) for k, p in model.params().items()}
        if cfg.optimizer == "sgd":
            for k in params:
                params[k] -= cfg.learning_rate * grads[k]
            return model.with_params(params)
        if self.m is None:
            self.m = {k: np.zeros_like(p) for k, p in params.items()}
            self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        for k in params:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            params[k] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        return model.with_params(params)


def optimizer_step(
    model: SynchronyModel,
    grads: dict[str, np.ndarray],
    config: TrainConfig,
    optimizer: Optimizer | None = None,
) -> SynchronyModel:
    """One update; pass a persistent Optimizer to keep Adam moments."""
    opt = optimizer if optimizer is not None else Optimizer(config)
    return opt.step(model, grads)


MODEL_FORMAT = "synchrony-model"
MODEL_VERSION = 1


def save_model(model: SynchronyModel, path, dtype: str = "float64") -> None:
    """Write a versioned JSON model file (base64 weight payloads)."""
    if dtype not in ("float64", "float32"):
        raise ValueError("dtype must be float64 or float32")
    np_dtype = np.dtype(dtype)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_lstms": model.n_lstms,
        "hidden_size": model.hidden_size,
        "input_size": model.input_size,
        "cell_activation": model.cell_activation,
        "dtype": dtype,
        "head_b": model.head_b,
        "arrays": {
            k: base64.b64encode(
                np.ascontiguousarray(v, dtype=np_dtype).tobytes()
            ).decode("ascii")
            for k, v in (("wx", model.wx), ("rh", model.rh),
                         ("b", model.b), ("head_w", model.head_w))
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> SynchronyModel:
    """Load a model file; malformed input raises ModelFormatError."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a synchrony model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version: {doc.get('version')!r}")
    try:
        n, h, d = int(doc["n_lstms"]), int(doc["hidden_size"]), int(doc["input_size"])
        np_dtype = np.dtype(doc["dtype"])
        shapes = {
            "wx": (n, 4 * h, d),
            "rh": (n, 4 * h, h),
            "b": (n, 4 * h),
            "head_w": (n * h,),
        }
        arrays = {}
        for k, shape in shapes.items():
            raw = base64.b64decode(doc["arrays"][k])
            flat = np.frombuffer(raw, dtype=np_dtype)
            if flat.size != int(np.prod(shape)):
                raise ModelFormatError(
                    f"dimension corruption: {k} payload has {flat.size} values, "
                    f"header implies {int(np.prod(shape))}"
                )
            arrays[k] = flat.reshape(shape).astype(np.float64)
        return SynchronyModel(
            wx=arrays["wx"],
            rh=arrays["rh"],
            b=arrays["b"],
            head_w=arrays["head_w"],
            head_b=float(doc["head_b"]),
            cell_activation=str(doc["cell_activation"]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def finite_difference_grads(
    model: SynchronyModel,
    x: np.ndarray,
    y: np.ndarray,
    lookback: int | None = None,
    eps: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradients of the batch loss. Oracle for BPTT;
    O(#params) forward passes, so keep the model tiny."""

    def loss_at(params):
        m = model.with_params(params)
        return mse_loss(forward_batch(m, x, lookback=lookback), y)

    base = {k: p.astype(np.float64, copy=True) for k, p in model.params().items()}
    out = {}
    for k, p in base.items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            up = loss_at(base)
            p[idx] = orig - eps
            down = loss_at(base)
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out[k] = g
    return out
