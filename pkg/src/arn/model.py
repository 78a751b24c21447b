"""Attentive recurrent network for time-domain speech enhancement.

One block is: layer norm -> RNN (LSTM when causal, BLSTM otherwise) ->
two parallel layer norms feeding a gated single-head attention (residual
back onto the query stream) -> two parallel layer norms feeding a
feedforward block (residual onto the second stream). The full network
frames the waveform, projects frames to the model width, stacks blocks,
projects back to output frames, and overlap-adds.

Causal operation uses a unidirectional LSTM plus an attention mask that
zeroes the contribution of future frames; with an input frame wider than
the output frame, each output frame is emitted over the trailing part of
its input frame's span so that every predicted sample lies within already
observed input.

Parameters live in a flat ordered dict of named tensors; helper functions
derive per-block views by name prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor
from .tensor import Tensor


class ConfigurationError(ValueError):
    """Model configuration and supplied structures disagree."""


class EmptySequenceError(ValueError):
    """A sequence operation received zero time steps."""


@dataclass(frozen=True)
class ARNConfig:
    """Architecture hyperparameters.

    Defaults are the full-size causal system at 16 kHz: width 1024,
    32 ms input frames, 16 ms output frames, 2 ms shift, four blocks.
    """

    width: int = 1024          # hidden size N
    frame_in: int = 512        # input frame length in samples
    frame_out: int = 256       # output frame length in samples
    shift: int = 32            # frame hop J in samples
    num_blocks: int = 4
    causal: bool = True
    dropout: float = 0.05      # feedforward block only
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.width < 1 or self.num_blocks < 1:
            raise ConfigurationError("width and num_blocks must be positive")
        if not (1 <= self.shift <= self.frame_out <= self.frame_in):
            raise ConfigurationError(
                f"need shift <= frame_out <= frame_in, got "
                f"J={self.shift} L_out={self.frame_out} L_in={self.frame_in}")
        if not self.causal and self.width % 2 != 0:
            raise ConfigurationError("bidirectional RNN needs an even width")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")

    @classmethod
    def causal_16k(cls, **overrides) -> "ARNConfig":
        return cls(**{**dict(width=1024, frame_in=512, frame_out=256, shift=32,
                             num_blocks=4, causal=True), **overrides})

    @classmethod
    def noncausal_16k(cls, **overrides) -> "ARNConfig":
        return cls(**{**dict(width=1024, frame_in=256, frame_out=256, shift=32,
                             num_blocks=4, causal=False), **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ARNConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# parameter table
# ---------------------------------------------------------------------------

_GATES = ("i", "f", "g", "o")


def _lstm_shapes(prefix: str, n_in: int, hidden: int) -> dict:
    shapes = {}
    for gate in _GATES:
        shapes[f"{prefix}w_{gate}x"] = (n_in, hidden)
        shapes[f"{prefix}w_{gate}h"] = (hidden, hidden)
        shapes[f"{prefix}b_{gate}"] = (hidden,)
    return shapes


def param_shapes(cfg: ARNConfig) -> dict:
    """Name -> shape for every trainable tensor, in canonical order."""
    n = cfg.width
    shapes = {"input_proj.w": (cfg.frame_in, n), "input_proj.b": (n,)}
    for i in range(cfg.num_blocks):
        b = f"block{i}."
        for j in range(5):
            shapes[f"{b}ln{j}.g"] = (n,)
            shapes[f"{b}ln{j}.b"] = (n,)
        if cfg.causal:
            shapes.update(_lstm_shapes(f"{b}lstm.", n, n))
        else:
            half = n // 2
            shapes.update(_lstm_shapes(f"{b}blstm.fwd.", n, half))
            shapes.update(_lstm_shapes(f"{b}blstm.bwd.", n, half))
        shapes[f"{b}attn.q"] = (n,)
        shapes[f"{b}attn.k"] = (n,)
        shapes[f"{b}attn.v"] = (n,)
        for lin in ("lin_q", "lin_v_sig", "lin_v_tanh"):
            shapes[f"{b}attn.{lin}.w"] = (n, n)
            shapes[f"{b}attn.{lin}.b"] = (n,)
        shapes[f"{b}ff.w"] = (n, 4 * n)
        shapes[f"{b}ff.b"] = (4 * n,)
    shapes["output_proj.w"] = (n, cfg.frame_out)
    shapes["output_proj.b"] = (cfg.frame_out,)
    return shapes


def init_params(cfg: ARNConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict:
    """Fresh parameters: weights/vectors uniform in +-1/sqrt(fan_in),
    layer-norm gain 1 / offset 0, biases 0."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if ".ln" in name:
            data = np.ones(shape) if leaf == "g" else np.zeros(shape)
        elif leaf == "b" or leaf.startswith("b_"):
            data = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def zeros_params(cfg: ARNConfig, dtype=np.float32) -> dict:
    """All-zero weights and biases, layer-norm gain 1 (the fixed point)."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.rsplit(".", 1)[-1] == "g" and ".ln" in name:
            data = np.ones(shape, dtype=dtype)
        else:
            data = np.zeros(shape, dtype=dtype)
        params[name] = Tensor(data, requires_grad=True)
    return params


def param_count(params: dict) -> int:
    return sum(p.data.size for p in params.values())


def param_dtype(params: dict):
    return next(iter(params.values())).data.dtype


def _sub(params: dict, prefix: str) -> dict:
    view = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
    if not view:
        raise ConfigurationError(f"no parameters under prefix {prefix!r}")
    return view


def _block_views(params: dict, num_blocks: int) -> list:
    views = [{} for _ in range(num_blocks)]
    for key, value in params.items():
        if key.startswith("block"):
            head, _, rest = key.partition(".")
            views[int(head[5:])][rest] = value
    if any(not v for v in views):
        raise ConfigurationError(f"parameters missing for {num_blocks} blocks")
    return views


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    return tensor.layer_norm_rows(x, gamma, beta, eps)


def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, w: dict):
    """One LSTM step with input, forget, and output gates.

    ``x_t`` and the states are row vectors (1, n_in) / (1, hidden).
    Returns (h_t, c_t).
    """
    i = tensor.sigmoid(x_t @ w["w_ix"] + h_prev @ w["w_ih"] + w["b_i"])
    f = tensor.sigmoid(x_t @ w["w_fx"] + h_prev @ w["w_fh"] + w["b_f"])
    g = tensor.tanh(x_t @ w["w_gx"] + h_prev @ w["w_gh"] + w["b_g"])
    o = tensor.sigmoid(x_t @ w["w_ox"] + h_prev @ w["w_oh"] + w["b_o"])
    c_t = f * c_prev + i * g
    h_t = o * tensor.tanh(c_t)
    return h_t, c_t


def lstm_sequence(x: Tensor, w: dict) -> Tensor:
    """Run an LSTM over the rows of (T, n_in); initial state is zero.

    The four gates are computed through concatenated weight views so the
    whole input projection happens in one matmul; the result is step-for-step
    identical to iterating ``lstm_step``.
    """
    steps = x.shape[0]
    if steps == 0:
        raise EmptySequenceError("lstm_sequence on zero time steps")
    hidden = w["w_ih"].shape[0]
    w_x = tensor.concat([w["w_ix"], w["w_fx"], w["w_gx"], w["w_ox"]], axis=1)
    w_h = tensor.concat([w["w_ih"], w["w_fh"], w["w_gh"], w["w_oh"]], axis=1)
    bias = tensor.concat([w["b_i"], w["b_f"], w["b_g"], w["b_o"]], axis=0)
    from_input = x @ w_x + bias      # (T, 4H)

    h = Tensor(np.zeros((1, hidden), dtype=x.data.dtype))
    c = Tensor(np.zeros((1, hidden), dtype=x.data.dtype))
    rows = []
    for t in range(steps):
        z = tensor.slice_rows(from_input, t, t + 1) + h @ w_h
        i = tensor.sigmoid(tensor.slice_cols(z, 0, hidden))
        f = tensor.sigmoid(tensor.slice_cols(z, hidden, 2 * hidden))
        g = tensor.tanh(tensor.slice_cols(z, 2 * hidden, 3 * hidden))
        o = tensor.sigmoid(tensor.slice_cols(z, 3 * hidden, 4 * hidden))
        c = f * c + i * g
        h = o * tensor.tanh(c)
        rows.append(h)
    return tensor.concat(rows, axis=0) if steps > 1 else rows[0]


def blstm_sequence(x: Tensor, fwd: dict, bwd: dict) -> Tensor:
    """Concatenate a forward pass and a time-reversed backward pass."""
    h_f = lstm_sequence(x, fwd)
    h_b = tensor.flip_rows(lstm_sequence(tensor.flip_rows(x), bwd))
    return tensor.concat([h_f, h_b], axis=1)


def rnn_sequence(x: Tensor, block_params: dict, cfg: ARNConfig) -> Tensor:
    if cfg.causal:
        if not any(k.startswith("lstm.") for k in block_params):
            raise ConfigurationError("causal config needs lstm weights, found none")
        return lstm_sequence(x, _sub(block_params, "lstm."))
    if not any(k.startswith("blstm.") for k in block_params):
        raise ConfigurationError("non-causal config needs blstm weights, found none")
    return blstm_sequence(x, _sub(block_params, "blstm.fwd."),
                          _sub(block_params, "blstm.bwd."))


def compute_v_gate(attn_params: dict) -> np.ndarray:
    """The constant value-gate vector sigma(Lin(v)) * tanh(Lin(v))."""
    with tensor.no_grad():
        return _v_gate_graph(attn_params).data.copy()


def _v_gate_graph(p: dict) -> Tensor:
    n = p["v"].shape[0]
    v_row = tensor.reshape(p["v"], (1, n))
    sig = tensor.sigmoid(v_row @ p["lin_v_sig.w"] + p["lin_v_sig.b"])
    tnh = tensor.tanh(v_row @ p["lin_v_tanh.w"] + p["lin_v_tanh.b"])
    return sig * tnh


def attention_block(q: Tensor, k: Tensor, v: Tensor, p: dict, causal: bool,
                    mode: str = "train", v_gate: np.ndarray | None = None) -> Tensor:
    """Single-head attention with per-vector gating.

    Keys are gated by sigma of a trainable vector, queries pass through a
    linear map gated the same way, and values are scaled by a constant gate
    derived from the third trainable vector. That value gate is recomputed
    from the current parameters in train mode (so it is optimized) and taken
    as a frozen constant in eval mode (``v_gate``, or recomputed on the fly).
    """
    steps = q.shape[0]
    if steps == 0:
        raise EmptySequenceError("attention over an empty sequence")
    n = q.shape[1]
    k_gated = k * tensor.sigmoid(p["k"])
    q_gated = (q @ p["lin_q.w"] + p["lin_q.b"]) * tensor.sigmoid(p["q"])
    if mode == "train":
        gate = _v_gate_graph(p)
    else:
        gate = Tensor(v_gate if v_gate is not None else compute_v_gate(p))
    v_gated = v * gate
    scores = tensor.scale(q_gated @ tensor.transpose(k_gated), 1.0 / math.sqrt(n))
    if causal:
        scores = tensor.causal_mask(scores)
    return tensor.softmax_rows(scores) @ v_gated


def feedforward_block(x: Tensor, w: Tensor, b: Tensor, dropout_rate: float,
                      mode: str, rng=None) -> Tensor:
    """Linear to 4N, GELU, dropout, then sum of the four N-wide chunks."""
    n = x.shape[1]
    h = tensor.dropout_apply(tensor.gelu(x @ w + b), dropout_rate, mode, rng)
    chunks = [tensor.slice_cols(h, j * n, (j + 1) * n) for j in range(4)]
    return (chunks[0] + chunks[1]) + (chunks[2] + chunks[3])


def arn_block_forward(x: Tensor, block_params: dict, cfg: ARNConfig,
                      mode: str = "train", rng=None,
                      v_gate: np.ndarray | None = None) -> Tensor:
    """One full block with both residual connections; (T, N) -> (T, N)."""
    ln = [(block_params[f"ln{j}.g"], block_params[f"ln{j}.b"]) for j in range(5)]
    y = rnn_sequence(layer_norm(x, *ln[0], cfg.ln_eps), block_params, cfg)
    q = layer_norm(y, *ln[1], cfg.ln_eps)
    kv = layer_norm(y, *ln[2], cfg.ln_eps)
    attn = _sub(block_params, "attn.")
    a = attention_block(q, kv, kv, attn, cfg.causal, mode, v_gate) + q
    z1 = layer_norm(a, *ln[3], cfg.ln_eps)
    z2 = layer_norm(a, *ln[4], cfg.ln_eps)
    ff = feedforward_block(z1, block_params["ff.w"], block_params["ff.b"],
                           cfg.dropout, mode, rng)
    return ff + z2


def compute_v_gate_cache(params: dict, cfg: ARNConfig) -> dict:
    """Frozen value gates for every block, keyed like checkpoint entries."""
    return {
        f"block{i}.attn.v_gate": compute_v_gate(_sub(params, f"block{i}.attn."))
        for i in range(cfg.num_blocks)
    }


def arn_forward_frames(frames: Tensor, params: dict, cfg: ARNConfig,
                       mode: str = "train", rng=None,
                       v_cache: dict | None = None) -> Tensor:
    """Frame-domain network: (T, frame_in) -> (T, frame_out)."""
    h = frames @ params["input_proj.w"] + params["input_proj.b"]
    for i, block_params in enumerate(_block_views(params, cfg.num_blocks)):
        gate = v_cache.get(f"block{i}.attn.v_gate") if v_cache else None
        h = arn_block_forward(h, block_params, cfg, mode, rng, gate)
    return h @ params["output_proj.w"] + params["output_proj.b"]


def arn_forward(x, params: dict, cfg: ARNConfig, mode: str = "eval",
                rng=None, v_cache: dict | None = None) -> Tensor:
    """Enhance a waveform; output has exactly the input's sample count.

    Output frame t is overlap-added at the trailing ``frame_out`` samples of
    input frame t's span, so for a causal configuration every output sample
    depends only on input the model has already seen. The leading
    ``frame_in - frame_out`` samples are covered by no output frame and
    come out as zeros (the causal warm-up region).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and cfg.dropout > 0.0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    dtype = param_dtype(params)
    if isinstance(x, Tensor):
        xt = x if x.data.dtype == dtype else Tensor(x.data.astype(dtype))
    else:
        xt = Tensor(np.asarray(x, dtype=dtype))
    if xt.data.ndim != 1 or xt.data.shape[0] < 1:
        raise ValueError("arn_forward needs a non-empty 1-D signal")

    def run():
        m = xt.data.shape[0]
        num_frames = math.ceil(m / cfg.shift)
        frames = tensor.frame_rows(xt, cfg.frame_in, cfg.shift, num_frames)
        out_frames = arn_forward_frames(frames, params, cfg, mode, rng, v_cache)
        return tensor.overlap_add_rows(out_frames, cfg.shift, m,
                                       offset=cfg.frame_in - cfg.frame_out)

    if mode == "eval":
        with tensor.no_grad():
            return run()
    return run()


def enhance(x, params: dict, cfg: ARNConfig, v_cache: dict | None = None) -> np.ndarray:
    """Eval-mode forward pass returning a plain array."""
    return arn_forward(x, params, cfg, mode="eval", v_cache=v_cache).data
