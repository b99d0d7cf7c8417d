"""Multi-rate streaming engine: frame extraction, gain application, mixdown.

The stream contract is strictly causal. At control frame k the engine

  1. renders frame k by applying the gains that were predicted at frame
     k-1 (unity warm-up gains at k=0) and summing channels,
  2. on refresh frames (k multiple of the stride) re-extracts the long
     analysis window, which ends at the boundary of frame k and therefore
     contains no audio from frame k itself,
  3. runs the control-rate model path on frame k, storing the produced
     gains for frame k+1.

Output therefore never depends on samples beyond the frame being rendered,
and exactly as many samples leave the engine as enter it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dsp import AudioBuffer, FrameClock


def f1_window_for(k: int, clock: FrameClock) -> tuple:
    """Sample interval [start, end) of the long frame serving F2 index k.

    The window belongs to the most recent refresh index k' = floor(k /
    stride) * stride and ends at k' * f2_samples. Negative start indices
    denote zero-padding before the start of the stream.
    """
    if k < 0:
        raise ValueError("frame index must be nonnegative")
    anchor = (k // clock.stride_f2_per_f1) * clock.stride_f2_per_f1
    end = anchor * clock.f2_samples
    return end - clock.f1_samples, end


@dataclass
class GainTimeline:
    """Per-channel, per-control-frame gains as applied to the output.

    Row c, column k is the gain multiplied into channel c's frame k. The
    gain applied at frame k+1 was predicted from audio up to and including
    frame k (``applied_offset`` records that one-frame shift); frame 0 uses
    the warm-up gain.
    """

    gains: np.ndarray
    applied_offset: int = 1

    def __post_init__(self):
        self.gains = np.atleast_2d(np.asarray(self.gains, dtype=np.float64))
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("gain timeline contains non-finite values")
        if np.any(self.gains < 0):
            raise ValueError("gain timeline contains negative gains")

    @property
    def num_channels(self) -> int:
        return self.gains.shape[0]

    @property
    def num_frames(self) -> int:
        return self.gains.shape[1]

    def mean_per_channel(self) -> np.ndarray:
        return self.gains.mean(axis=1)

    def max_step(self) -> float:
        """Largest |gain change| between consecutive frames, over channels."""
        if self.num_frames < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.gains, axis=1))))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["channel", "frame_index", "gain"])
            for c in range(self.num_channels):
                for k in range(self.num_frames):
                    writer.writerow([c, k, repr(float(self.gains[c, k]))])


@dataclass
class StreamState:
    """Mutable per-stream state; single writer, one logical stream thread."""

    clock: FrameClock
    num_channels: int
    next_f2_index: int = 0
    history: np.ndarray = None  # last f1_samples of input, zero-padded at start
    context: object = None  # cached long-frame embedding block
    context_index: int = None  # F2 index at which the context was extracted
    pending_gains: Tensor = None  # predicted at frame k-1, applied to frame k
    last_gains: Tensor = None  # gains applied to the previous frame (crossfade)
    hidden: object = None  # opaque temporal state owned by the predictor
    finished: bool = False

    def detach(self) -> None:
        """Cut gradient history at a truncation boundary (state keeps values)."""
        if isinstance(self.context, Tensor):
            self.context = self.context.detach()
        if isinstance(self.pending_gains, Tensor):
            self.pending_gains = self.pending_gains.detach()
        if isinstance(self.last_gains, Tensor):
            self.last_gains = self.last_gains.detach()
        if isinstance(self.hidden, Tensor):
            self.hidden = self.hidden.detach()


def open_stream(clock: FrameClock, num_channels: int, predictor, warmup_gain: float = 1.0) -> StreamState:
    """Fresh stream state: zero history, warm-up gains pending for frame 0."""
    if num_channels < 1:
        raise ValueError("need at least one channel")
    if warmup_gain < 0:
        raise ValueError("warm-up gain must be nonnegative")
    return StreamState(
        clock=clock,
        num_channels=num_channels,
        history=np.zeros((num_channels, clock.f1_samples)),
        pending_gains=Tensor(np.full(num_channels, float(warmup_gain))),
        hidden=predictor.init_hidden(num_channels),
    )


@dataclass
class StepResult:
    frame_index: int
    mix: Tensor  # rendered samples for this frame (tape-tracked in training)
    gains_applied: np.ndarray
    refreshed_context: bool


def step(state: StreamState, frames, predictor, crossfade_samples: int = 0) -> StepResult:
    """Advance the stream by one control frame of per-channel audio.

    ``frames`` is (channels, n) with n == f2_samples, except a final
    partial frame (n < f2_samples) which is rendered with the pending
    gains and zero-padded for analysis; afterwards the stream is finished.
    """
    if state.finished:
        raise ValueError("stream already consumed its final partial frame")
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] != state.num_channels:
        raise ValueError(
            f"channel count changed mid-stream: got {frames.shape[0]}, "
            f"expected {state.num_channels}"
        )
    f2 = state.clock.f2_samples
    n = frames.shape[1]
    if n > f2 or n == 0:
        raise ValueError(f"expected at most {f2} samples per frame, got {n}")
    if n < f2:
        state.finished = True
        analysis = np.zeros((state.num_channels, f2))
        analysis[:, :n] = frames
    else:
        analysis = frames

    k = state.next_f2_index

    # 1. render frame k with the gains pending from frame k-1
    gains_applied = state.pending_gains.value.copy()
    if crossfade_samples > 0 and state.last_gains is not None and k > 0:
        ramp = np.minimum((np.arange(n) + 1.0) / max(int(crossfade_samples), 1), 1.0)
        old = ad.matmul(ad.reshape(state.last_gains, (1, -1)), Tensor(frames * (1.0 - ramp)))
        new = ad.matmul(ad.reshape(state.pending_gains, (1, -1)), Tensor(frames * ramp))
        mix = ad.reshape(ad.add(old, new), (n,))
    else:
        mix = ad.reshape(ad.matmul(ad.reshape(state.pending_gains, (1, -1)), Tensor(frames)), (n,))

    # 2. refresh the cached long-frame context; the window ends at k*f2 and
    #    is exactly the history buffer before this frame is appended
    refreshed = False
    if state.clock.is_refresh_frame(k):
        state.context = predictor.extract_context(state.history.copy(), state.clock)
        state.context_index = k
        refreshed = True

    # 3. roll the analysis history, then predict gains for frame k+1
    state.history = np.concatenate([state.history[:, f2:], analysis], axis=1)
    gains_next, state.hidden = predictor.f2_step(state.context, analysis, state.hidden)
    gains_next = ad.as_tensor(gains_next)
    if gains_next.shape != (state.num_channels,):
        raise ValueError(f"predictor returned gains of shape {gains_next.shape}")
    if not np.all(np.isfinite(gains_next.value)) or np.any(gains_next.value < 0):
        raise ValueError("predictor produced negative or non-finite gains")
    state.last_gains = state.pending_gains
    state.pending_gains = gains_next
    state.next_f2_index = k + 1

    return StepResult(frame_index=k, mix=mix, gains_applied=gains_applied, refreshed_context=refreshed)


def iter_frames(stems: np.ndarray, f2_samples: int):
    """Yield consecutive (channels, <=f2) frame blocks covering ``stems``."""
    total = stems.shape[1]
    for start in range(0, total, f2_samples):
        yield stems[:, start : min(start + f2_samples, total)]


def run_offline(session, mode: str, predictor, warmup_gain: float = 1.0, crossfade_samples: int = 0):
    """Stream a whole session through the engine; returns (mix, timeline).

    ``mode`` selects the frame geometry: "mr" (multi-rate) or "sr"
    (single-rate, where both frames are the long size and the stride is 1).
    """
    stems = session.stem_matrix()
    if stems.shape[0] == 0 or stems.shape[1] == 0:
        raise ValueError("empty session")
    clock = FrameClock.for_mode(mode, session.sample_rate)
    state = open_stream(clock, stems.shape[0], predictor, warmup_gain=warmup_gain)
    chunks = []
    gains = []
    with ad.no_grad():
        for frames in iter_frames(stems, clock.f2_samples):
            result = step(state, frames, predictor, crossfade_samples=crossfade_samples)
            chunks.append(result.mix.value)
            gains.append(result.gains_applied)
    mix = AudioBuffer(np.concatenate(chunks), session.sample_rate)
    timeline = GainTimeline(np.stack(gains, axis=1))
    return mix, timeline
