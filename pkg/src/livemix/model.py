"""The per-channel gain predictor and its mean-context baseline.

All neural blocks share weights across channels and carry no positional
encoding along the channel axis, so predictions are equivariant under
channel permutation and work for any channel count. The pipeline per
control frame is:

    cached [embedder -> channel transformer 1] output   (long-frameratec)
      -> RMS conditioning -> channel transformer 2
      -> GRU step -> channel transformer 3 -> gain MLP (ReLU head)

The baseline predictor instead concatenates each channel's embedding with
the across-channel mean embedding and maps that straight through an MLP:
no temporal state, no transformers, no level cue.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor

ALM_KIND = "alm"
DMC_KIND = "dmc"


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    num_heads: int = 2
    ff_dim: int = 256
    mel_bins: int = 64
    conv_channels: tuple = (8, 16)
    mlp_hidden: tuple = (128, 64, 32)

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must divide evenly into heads")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        for key in ("conv_channels", "mlp_hidden"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def _pooled_mel_width(mel_bins: int) -> int:
    # two stages of valid 3x3 conv followed by 2x2 pooling
    width = (mel_bins - 2) // 2
    return (width - 2) // 2


def embedder_feature_size(config: ModelConfig) -> int:
    return config.conv_channels[1] * _pooled_mel_width(config.mel_bins)


EMBEDDER_PREFIX = "embedder."


def expected_shapes(kind: str, config: ModelConfig) -> dict:
    """Tensor name -> shape table; the weight loader validates against it."""
    d = config.embed_dim
    c1, c2 = config.conv_channels
    shapes = {
        "embedder.conv1.weight": (c1, 1, 3, 3),
        "embedder.conv1.bias": (c1,),
        "embedder.conv2.weight": (c2, c1, 3, 3),
        "embedder.conv2.bias": (c2,),
        "embedder.out.weight": (embedder_feature_size(config), d),
        "embedder.out.bias": (d,),
    }
    if kind == ALM_KIND:
        shapes.update(
            {
                "rms.weight": (1, d),
                "rms.bias": (d,),
                "rms.slope": (),
            }
        )
        for block in ("tf1", "tf2", "tf3"):
            for name in ("wq", "wk", "wv", "wo"):
                shapes[f"{block}.attn.{name}"] = (d, d)
            for name in ("bq", "bk", "bv", "bo"):
                shapes[f"{block}.attn.{name}"] = (d,)
            shapes[f"{block}.ln1.gain"] = (d,)
            shapes[f"{block}.ln1.bias"] = (d,)
            shapes[f"{block}.ff1.weight"] = (d, config.ff_dim)
            shapes[f"{block}.ff1.bias"] = (config.ff_dim,)
            shapes[f"{block}.ff2.weight"] = (config.ff_dim, d)
            shapes[f"{block}.ff2.bias"] = (d,)
            shapes[f"{block}.ln2.gain"] = (d,)
            shapes[f"{block}.ln2.bias"] = (d,)
        for gate in ("z", "r", "n"):
            shapes[f"gru.w{gate}"] = (d, d)
            shapes[f"gru.u{gate}"] = (d, d)
            shapes[f"gru.b{gate}"] = (d,)
        mlp_in = d
    elif kind == DMC_KIND:
        mlp_in = 2 * d
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    widths = (mlp_in, *config.mlp_hidden)
    for i in range(len(config.mlp_hidden)):
        shapes[f"mlp.l{i + 1}.weight"] = (widths[i], widths[i + 1])
        shapes[f"mlp.l{i + 1}.bias"] = (widths[i + 1],)
        shapes[f"mlp.l{i + 1}.slope"] = ()
    shapes["mlp.out.weight"] = (config.mlp_hidden[-1], 1)
    shapes["mlp.out.bias"] = (1,)
    return shapes


class ModelParams:
    """Every trainable tensor of one predictor, with a per-tensor freeze mask."""

    def __init__(self, kind: str, config: ModelConfig, tensors: dict):
        shapes = expected_shapes(kind, config)
        missing = sorted(set(shapes) - set(tensors))
        extra = sorted(set(tensors) - set(shapes))
        if missing or extra:
            raise ValueError(f"tensor set mismatch: missing={missing} unexpected={extra}")
        for name, tensor in tensors.items():
            if tuple(tensor.shape) != tuple(shapes[name]):
                raise ValueError(
                    f"tensor {name} has shape {tensor.shape}, expected {shapes[name]}"
                )
            if not np.all(np.isfinite(tensor.value)):
                raise ValueError(f"tensor {name} contains non-finite values")
        self.kind = kind
        self.config = config
        self.tensors = tensors
        self.frozen: set = set()

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named_tensors(self):
        return sorted(self.tensors.items())

    def trainable(self):
        return [(n, t) for n, t in self.named_tensors() if n not in self.frozen]

    def embedder_names(self):
        return [n for n in sorted(self.tensors) if n.startswith(EMBEDDER_PREFIX)]

    def set_embedder_frozen(self, frozen: bool):
        names = set(self.embedder_names())
        if frozen:
            self.frozen |= names
        else:
            self.frozen -= names
        for name in names:
            # frozen tensors drop out of the tape entirely: zero gradient,
            # untouched by the optimizer, bit-identical across epochs
            self.tensors[name].requires_grad = not frozen

    @property
    def freeze_mask(self) -> dict:
        return {n: (n in self.frozen) for n in sorted(self.tensors)}

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def gradients(self) -> dict:
        """Accumulated gradients per tensor; frozen tensors report zeros."""
        out = {}
        for name, t in self.named_tensors():
            if name in self.frozen or t.grad is None:
                out[name] = np.zeros(t.shape)
            else:
                out[name] = t.grad
        return out

    def snapshot(self) -> dict:
        return {n: t.value.copy() for n, t in self.tensors.items()}


def init_params(kind: str, config: ModelConfig | None = None, seed: int = 0) -> ModelParams:
    """Deterministic random initialization (1/sqrt(fan_in) normals)."""
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_shapes(kind, config).items():
        if name.endswith(".slope"):
            value = np.array(0.25)
        elif name.endswith(".gain"):
            value = np.ones(shape)
        elif name == "mlp.out.bias":
            # start near unity gain so the ReLU head is live from step one
            value = np.ones(shape)
        elif name.endswith((".bias", ".bq", ".bk", ".bv", ".bo")) or name.startswith("gru.b"):
            value = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else int(shape[0])
            value = rng.standard_normal(shape) / np.sqrt(max(fan_in, 1))
        tensors[name] = ad.parameter(value, name=name)
    return ModelParams(kind, config, tensors)


# -- forward blocks -----------------------------------------------------------


def _conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    cout, _, kh, kw = weight.shape
    out_h = x.shape[1] - kh + 1
    out_w = x.shape[2] - kw + 1
    cols = ad.im2col(x, kh, kw)
    flat = ad.add(ad.matmul(cols, ad.transpose(ad.reshape(weight, (cout, -1)))), bias)
    return ad.reshape(ad.transpose(flat), (cout, out_h, out_w))


def embed(
    params: ModelParams,
    audio: np.ndarray,
    sample_rate: int,
    expected_samples: int | None = None,
) -> Tensor:
    """Map per-channel long-frame audio (C, n) to embeddings (C, embed_dim).

    Channels share one weight set, so identical audio yields identical
    rows. Audio is a constant; only the embedder weights take gradients.
    """
    audio = np.atleast_2d(np.asarray(audio, dtype=np.float64))
    if expected_samples is not None and audio.shape[1] != expected_samples:
        raise ValueError(
            f"embedder frame has {audio.shape[1]} samples, expected {expected_samples}"
        )
    cfg = params.config
    rows = []
    for channel in audio:
        feats = dsp.log_mel(channel, sample_rate, mel_bins=cfg.mel_bins)
        x = Tensor(feats[np.newaxis])
        x = ad.avg_pool2d(ad.relu(_conv2d(x, params["embedder.conv1.weight"], params["embedder.conv1.bias"])))
        x = ad.avg_pool2d(ad.relu(_conv2d(x, params["embedder.conv2.weight"], params["embedder.conv2.bias"])))
        pooled = ad.tmean(x, axis=1)  # average over time
        flat = ad.reshape(pooled, (1, -1))
        rows.append(ad.linear(flat, params["embedder.out.weight"], params["embedder.out.bias"]))
    return ad.concat(rows, axis=0)


def transformer_block(params: ModelParams, block: str, x: Tensor) -> Tensor:
    """Post-norm encoder layer over the channel axis; no mask, no positions."""
    cfg = params.config
    q = ad.linear(x, params[f"{block}.attn.wq"], params[f"{block}.attn.bq"])
    k = ad.linear(x, params[f"{block}.attn.wk"], params[f"{block}.attn.bk"])
    v = ad.linear(x, params[f"{block}.attn.wv"], params[f"{block}.attn.bv"])
    scale = 1.0 / np.sqrt(cfg.head_dim)
    heads = []
    for h in range(cfg.num_heads):
        cols = slice(h * cfg.head_dim, (h + 1) * cfg.head_dim)
        scores = ad.mul(ad.matmul(q[:, cols], ad.transpose(k[:, cols])), Tensor(scale))
        heads.append(ad.matmul(ad.softmax(scores, axis=-1), v[:, cols]))
    attn = ad.linear(ad.concat(heads, axis=1), params[f"{block}.attn.wo"], params[f"{block}.attn.bo"])
    h1 = ad.layer_norm(ad.add(x, attn), params[f"{block}.ln1.gain"], params[f"{block}.ln1.bias"])
    ff = ad.linear(
        ad.relu(ad.linear(h1, params[f"{block}.ff1.weight"], params[f"{block}.ff1.bias"])),
        params[f"{block}.ff2.weight"],
        params[f"{block}.ff2.bias"],
    )
    return ad.layer_norm(ad.add(h1, ff), params[f"{block}.ln2.gain"], params[f"{block}.ln2.bias"])


def condition_rms(params: ModelParams, x: Tensor, rms_values) -> Tensor:
    """Inject per-channel linear RMS level the embeddings are blind to."""
    r = Tensor(np.asarray(rms_values, dtype=np.float64).reshape(-1, 1))
    if r.shape[0] != x.shape[0]:
        raise ValueError("rms vector does not match channel count")
    proj = ad.add(ad.matmul(r, params["rms.weight"]), params["rms.bias"])
    return ad.prelu(ad.add(x, proj), params["rms.slope"])


def gru_step(params: ModelParams, x: Tensor, h: Tensor) -> Tensor:
    """One gated-recurrence update; state persists across control frames."""
    if x.shape != h.shape:
        raise ValueError("input and hidden state shapes differ")
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, params["gru.wz"]), ad.matmul(h, params["gru.uz"])), params["gru.bz"]))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, params["gru.wr"]), ad.matmul(h, params["gru.ur"])), params["gru.br"]))
    n = ad.tanh(ad.add(ad.add(ad.matmul(x, params["gru.wn"]), ad.mul(r, ad.matmul(h, params["gru.un"]))), params["gru.bn"]))
    one = Tensor(1.0)
    return ad.add(ad.mul(ad.sub(one, z), n), ad.mul(z, h))


def _mlp_gains(params: ModelParams, x: Tensor) -> Tensor:
    h = x
    for i in range(len(params.config.mlp_hidden)):
        h = ad.prelu(
            ad.linear(h, params[f"mlp.l{i + 1}.weight"], params[f"mlp.l{i + 1}.bias"]),
            params[f"mlp.l{i + 1}.slope"],
        )
    out = ad.relu(ad.linear(h, params["mlp.out.weight"], params["mlp.out.bias"]))
    return ad.reshape(out, (-1,))


def predict_gains(params: ModelParams, context: Tensor, rms_values, hidden: Tensor):
    """Full control-frame path: returns (gains (C,), new hidden (C, d)).

    ``context`` is the cached output of transformer block 1 over the
    current long frame; ``hidden`` is the recurrent state from the previous
    control frame (zeros at stream start).
    """
    if params.kind != ALM_KIND:
        raise ValueError("predict_gains requires an 'alm' parameter set")
    if hidden.shape[0] != context.shape[0]:
        raise ValueError("channel count mismatch between context and hidden state")
    conditioned = condition_rms(params, context, rms_values)
    t2 = transformer_block(params, "tf2", conditioned)
    new_hidden = gru_step(params, t2, hidden)
    t3 = transformer_block(params, "tf3", new_hidden)
    return _mlp_gains(params, t3), new_hidden


def predict_gains_dmc(params: ModelParams, embeddings: Tensor, rms_values=None) -> Tensor:
    """Baseline: [embedding, mean embedding] -> MLP -> gain per channel.

    The level argument is accepted for predictor interchangeability but the
    baseline has no level path, by construction.
    """
    if params.kind != DMC_KIND:
        raise ValueError("predict_gains_dmc requires a 'dmc' parameter set")
    del rms_values
    mean = ad.broadcast_to(ad.tmean(embeddings, axis=0, keepdims=True), embeddings.shape)
    return _mlp_gains(params, ad.concat([embeddings, mean], axis=1))


# -- predictors (the scheduler-facing interface) ------------------------------


def frame_rms(frames: np.ndarray) -> np.ndarray:
    """Per-channel linear RMS of a (C, n) frame block."""
    frames = np.atleast_2d(frames)
    return np.sqrt(np.mean(frames * frames, axis=1))


class AlmPredictor:
    """Streaming wrapper of the full model for the frame scheduler."""

    def __init__(self, params: ModelParams):
        if params.kind != ALM_KIND:
            raise ValueError("AlmPredictor needs 'alm' parameters")
        self.params = params

    def init_hidden(self, num_channels: int):
        return Tensor(np.zeros((num_channels, self.params.config.embed_dim)))

    def extract_context(self, f1_audio: np.ndarray, clock: dsp.FrameClock):
        emb = embed(self.params, f1_audio, clock.sample_rate, expected_samples=clock.f1_samples)
        return transformer_block(self.params, "tf1", emb)

    def f2_step(self, context, frame: np.ndarray, hidden):
        return predict_gains(self.params, context, frame_rms(frame), hidden)


class DmcPredictor:
    """Baseline wrapper: per-long-frame embeddings, no temporal state."""

    def __init__(self, params: ModelParams):
        if params.kind != DMC_KIND:
            raise ValueError("DmcPredictor needs 'dmc' parameters")
        self.params = params

    def init_hidden(self, num_channels: int):
        return None

    def extract_context(self, f1_audio: np.ndarray, clock: dsp.FrameClock):
        return embed(self.params, f1_audio, clock.sample_rate, expected_samples=clock.f1_samples)

    def f2_step(self, context, frame: np.ndarray, hidden):
        return predict_gains_dmc(self.params, context), hidden


class FixedGainPredictor:
    """Constant-gain policy (1.0 reproduces the raw channel sum)."""

    def __init__(self, gain=1.0):
        self.gain = gain

    def init_hidden(self, num_channels: int):
        return None

    def extract_context(self, f1_audio: np.ndarray, clock: dsp.FrameClock):
        return None

    def f2_step(self, context, frame: np.ndarray, hidden):
        num_channels = np.atleast_2d(frame).shape[0]
        gains = np.broadcast_to(np.asarray(self.gain, dtype=np.float64), (num_channels,))
        return Tensor(gains.copy()), hidden
