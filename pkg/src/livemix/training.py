"""Desk-scale training: snippets, bleed augmentation, truncated BPTT.

One epoch is a full pass over the training sessions. Per session it
samples a frame-aligned snippet (the whole song when shorter), optionally
corrupts the stems with a fresh bleed draw, streams the snippet through
the scheduler with the one-frame-ahead gain contract, and minimizes the
multi-resolution STFT distance between the rendered mix and the clean
reference. Backpropagation through the recurrent state is truncated every
``bptt_steps`` control frames; gradients accumulate across windows into
one optimizer step per session.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import bleedsim, scheduler
from .dsp import AudioBuffer, FrameClock, SpectralConfig, normalize_peak
from .errors import InputError
from .losses import mrstft_loss
from .model import ALM_KIND, DMC_KIND, AlmPredictor, DmcPredictor, ModelConfig, ModelParams, init_params
from .optim import LR_DROP_EPOCHS, AdamW, lr_for_epoch


@dataclass
class TrainConfig:
    epochs: int = 5000
    snippet_seconds: float = 20.0
    bptt_steps: int = 50
    freeze_embedder_epochs: int = 100
    seed: int = 0
    mode: str = "mr"
    model: str = ALM_KIND
    base_lr: float = 1e-3
    lr_drop_epochs: tuple = LR_DROP_EPOCHS
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    loss: SpectralConfig = field(default_factory=SpectralConfig)
    bleed: bleedsim.BleedConfig | None = None
    normalize_target_dbfs: float | None = -6.0
    warmup_gain: float = 1.0
    checkpoint_every: int = 0
    model_config: ModelConfig = field(default_factory=ModelConfig)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"training config not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"training config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "loss" in data and data["loss"] is not None:
            loss = dict(data["loss"])
            for key in ("window_sizes", "fft_sizes"):
                if key in loss:
                    loss[key] = tuple(loss[key])
            data["loss"] = SpectralConfig(**loss)
        if data.get("bleed") is not None:
            data["bleed"] = bleedsim.BleedConfig.from_dict(data["bleed"])
        if "model_config" in data and data["model_config"] is not None:
            data["model_config"] = ModelConfig.from_dict(data["model_config"])
        for key in ("lr_drop_epochs", "betas"):
            if key in data:
                data[key] = tuple(data[key])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputError(f"unknown training config keys: {unknown}")
        return cls(**data)


def make_predictor(params: ModelParams):
    if params.kind == ALM_KIND:
        return AlmPredictor(params)
    if params.kind == DMC_KIND:
        return DmcPredictor(params)
    raise ValueError(f"no predictor for model kind {params.kind!r}")


def _sample_snippet(session, cfg: TrainConfig, clock: FrameClock, rng):
    """Frame-aligned snippet (stems, target); whole song when it is shorter."""
    f2 = clock.f2_samples
    total_frames = session.num_samples // f2
    min_frames = -(-cfg.loss.max_window // f2)
    if total_frames < min_frames:
        raise InputError(
            f"session shorter ({session.num_samples} samples) than one loss window"
        )
    want_frames = max(int(cfg.snippet_seconds * session.sample_rate) // f2, min_frames)
    take = min(want_frames, total_frames)
    start_frame = int(rng.integers(0, total_frames - take + 1))
    lo, hi = start_frame * f2, (start_frame + take) * f2
    stems = session.stem_matrix()[:, lo:hi]
    target = session.reference_mix.samples[lo:hi]
    return stems, target


def _window_bounds(num_frames: int, bptt_steps: int, min_frames: int):
    """Split frames into BPTT windows; a too-short tail merges backwards."""
    bounds = []
    start = 0
    while start < num_frames:
        end = min(start + bptt_steps, num_frames)
        if num_frames - end < min_frames and end < num_frames:
            end = num_frames
        bounds.append((start, end))
        start = end
    if len(bounds) > 1 and (bounds[-1][1] - bounds[-1][0]) < min_frames:
        last = bounds.pop()
        prev = bounds.pop()
        bounds.append((prev[0], last[1]))
    return bounds


def _song_loss(stems, target, params, cfg: TrainConfig, clock: FrameClock) -> float:
    """Forward/backward over one snippet; accumulates gradients in-place."""
    from . import autodiff as ad

    predictor = make_predictor(params)
    f2 = clock.f2_samples
    num_frames = stems.shape[1] // f2
    min_frames = -(-cfg.loss.max_window // f2)
    bounds = _window_bounds(num_frames, cfg.bptt_steps, min_frames)
    state = scheduler.open_stream(clock, stems.shape[0], predictor, warmup_gain=cfg.warmup_gain)

    losses = []
    for start, end in bounds:
        chunks = []
        for k in range(start, end):
            frames = stems[:, k * f2 : (k + 1) * f2]
            chunks.append(scheduler.step(state, frames, predictor).mix)
        pred = ad.concat(chunks)
        window_loss = mrstft_loss(pred, target[start * f2 : end * f2], cfg.loss)
        window_loss.backward(np.asarray(1.0 / len(bounds)))
        losses.append(window_loss.item())
        state.detach()
    return float(np.mean(losses))


def train_epoch(sessions, params: ModelParams, optimizer: AdamW, cfg: TrainConfig,
                epoch: int, rng) -> float:
    """One full pass over the sessions; returns the mean song loss.

    Applies the learning-rate schedule and the embedder freeze schedule for
    ``epoch`` (0-based), then for every session: snippet, augmentation,
    zero-latency forward, truncated-BPTT backward, one optimizer step.
    """
    if not sessions:
        raise InputError("empty training set")
    optimizer.lr = lr_for_epoch(epoch, cfg.base_lr, cfg.lr_drop_epochs)
    params.set_embedder_frozen(epoch < cfg.freeze_embedder_epochs)
    clock = FrameClock.for_mode(cfg.mode, sessions[0].sample_rate)

    song_losses = []
    for index in rng.permutation(len(sessions)):
        session = sessions[index]
        stems, target = _sample_snippet(session, cfg, clock, rng)
        if cfg.bleed is not None:
            stems, _ = bleedsim.apply_bleed(
                stems, cfg.bleed, sample_rate=session.sample_rate,
                seed=int(rng.integers(0, 2**63 - 1)),
            )
        params.zero_grads()
        song_losses.append(_song_loss(stems, target, params, cfg, clock))
        optimizer.step(params.trainable())
    params.zero_grads()
    return float(np.mean(song_losses))


def prepare_sessions(sessions, cfg: TrainConfig):
    """Validate the training set and normalize reference peaks once."""
    prepared = []
    for session in sessions:
        if session.reference_mix is None:
            raise InputError("training session has no reference mix")
        if cfg.normalize_target_dbfs is not None:
            reference = normalize_peak(session.reference_mix, cfg.normalize_target_dbfs)
            session = session.with_stems(session.stem_matrix(), reference=reference)
        prepared.append(session)
    return prepared


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float


def train(sessions, cfg: TrainConfig, params: ModelParams | None = None,
          on_epoch=None, checkpoint=None):
    """Full training loop; returns (params, [EpochRecord...]).

    ``on_epoch(record)`` is called after every epoch; ``checkpoint(epoch,
    params)`` fires every ``cfg.checkpoint_every`` epochs when set.
    """
    sessions = prepare_sessions(sessions, cfg)
    if params is None:
        params = init_params(cfg.model, cfg.model_config, seed=cfg.seed)
    optimizer = AdamW(lr=cfg.base_lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        loss = train_epoch(sessions, params, optimizer, cfg, epoch, rng)
        record = EpochRecord(epoch=epoch, loss=loss, lr=optimizer.lr)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if checkpoint is not None and cfg.checkpoint_every > 0 and (epoch + 1) % cfg.checkpoint_every == 0:
            checkpoint(epoch, params)
    return params, history
