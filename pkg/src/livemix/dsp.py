"""Deterministic signal primitives: buffers, frame geometry, spectra, features.

Everything in this module is a pure function of its inputs, so all of it is
safe to call concurrently. The engine runs at a single sample rate
(default 16 kHz, where the 975 ms / 50 ms frame sizes land on integer
sample counts of 15600 / 800).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SAMPLE_RATE = 16000

F1_MS = 975.0
F2_MS_MULTI_RATE = 50.0
F2_STRIDE_MULTI_RATE = 6


def ms_to_samples(duration_ms: float, sample_rate: int) -> int:
    """Convert a millisecond duration to a sample count, rounding half up."""
    if duration_ms < 0:
        raise ValueError("duration must be nonnegative")
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")
    return int(math.floor(duration_ms * sample_rate / 1000.0 + 0.5))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 20.0)


@dataclass(frozen=True)
class AudioBuffer:
    """A mono sample sequence at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio buffer must be one-dimensional (mono)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio buffer contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate


def as_samples(audio) -> np.ndarray:
    """Accept an AudioBuffer or an array-like and return float64 samples."""
    if isinstance(audio, AudioBuffer):
        return audio.samples
    return np.asarray(audio, dtype=np.float64)


@dataclass(frozen=True)
class FrameClock:
    """F1/F2 frame geometry and frame-index arithmetic.

    F1 is the long analysis frame feeding the audio embedder; F2 is the
    short control frame at which gains are predicted and applied. In
    multi-rate (MR) operation one F1 extraction is reused for
    ``stride_f2_per_f1`` consecutive F2 frames; single-rate (SR) operation
    sets F2 = F1 with stride 1.
    """

    f1_ms: float = F1_MS
    f2_ms: float = F2_MS_MULTI_RATE
    stride_f2_per_f1: int = F2_STRIDE_MULTI_RATE
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.stride_f2_per_f1 < 1:
            raise ValueError("stride must be a positive integer")
        if self.f2_samples < 1:
            raise ValueError("F2 frame must be at least one sample")
        if self.f1_samples < self.f2_samples:
            raise ValueError("F1 frame must be at least as long as F2")

    @classmethod
    def multi_rate(cls, sample_rate: int = DEFAULT_SAMPLE_RATE) -> "FrameClock":
        return cls(sample_rate=sample_rate)

    @classmethod
    def single_rate(cls, sample_rate: int = DEFAULT_SAMPLE_RATE) -> "FrameClock":
        return cls(f2_ms=F1_MS, stride_f2_per_f1=1, sample_rate=sample_rate)

    @classmethod
    def for_mode(cls, mode: str, sample_rate: int = DEFAULT_SAMPLE_RATE) -> "FrameClock":
        mode = mode.lower()
        if mode == "mr":
            return cls.multi_rate(sample_rate)
        if mode == "sr":
            return cls.single_rate(sample_rate)
        raise ValueError(f"unknown mode {mode!r} (expected 'mr' or 'sr')")

    @property
    def f1_samples(self) -> int:
        return ms_to_samples(self.f1_ms, self.sample_rate)

    @property
    def f2_samples(self) -> int:
        return ms_to_samples(self.f2_ms, self.sample_rate)

    @property
    def f1_stride_samples(self) -> int:
        return self.stride_f2_per_f1 * self.f2_samples

    @property
    def f1_stride_ms(self) -> float:
        return self.stride_f2_per_f1 * self.f2_ms

    def num_f2_frames(self, num_samples: int) -> int:
        """Frame count covering ``num_samples``, counting a final partial frame."""
        return -(-num_samples // self.f2_samples)

    def is_refresh_frame(self, k: int) -> bool:
        return k % self.stride_f2_per_f1 == 0


@dataclass(frozen=True)
class SpectralConfig:
    """Window/FFT sizes for the multi-resolution magnitude spectrograms."""

    window_sizes: tuple = (440, 884, 3528)
    fft_sizes: tuple = (512, 1024, 4196)
    hop_fraction: float = 0.25

    def __post_init__(self):
        if len(self.window_sizes) != len(self.fft_sizes):
            raise ValueError("need one fft size per window size")
        if not 0.0 < self.hop_fraction <= 1.0:
            raise ValueError("hop fraction must be in (0, 1]")
        for win, nfft in zip(self.window_sizes, self.fft_sizes):
            if win < 1:
                raise ValueError("window sizes must be positive")
            if nfft < win:
                raise ValueError(f"fft size {nfft} smaller than window {win}")

    @property
    def hops(self) -> tuple:
        return tuple(max(1, int(round(w * self.hop_fraction))) for w in self.window_sizes)

    @property
    def max_window(self) -> int:
        return max(self.window_sizes)

    def resolutions(self):
        return tuple(zip(self.window_sizes, self.hops, self.fft_sizes))


@functools.lru_cache(maxsize=32)
def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant)."""
    n = np.arange(size)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)
    w.flags.writeable = False
    return w


def rms(frame) -> float:
    """Root-mean-square level of a frame. Zero frame gives 0."""
    x = as_samples(frame)
    if x.shape[0] == 0:
        raise ValueError("empty frame")
    return float(np.sqrt(np.mean(x * x)))


def frame_signal(signal: np.ndarray, window_size: int, hop: int) -> np.ndarray:
    """Slice a 1-D signal into overlapping frames, no padding.

    Returns a (num_frames, window_size) view copy; the final samples that do
    not fill a whole window are dropped.
    """
    n = signal.shape[0]
    if n < window_size:
        raise ValueError("signal too short")
    view = np.lib.stride_tricks.sliding_window_view(signal, window_size)
    return np.ascontiguousarray(view[::hop])


def stft_complex(signal, window_size: int, hop: int, fft_size: int) -> np.ndarray:
    """Hann-windowed complex STFT, frames x (fft_size//2 + 1) bins.

    Frames shorter than the window are zero-padded up to fft_size by the
    transform; non-power-of-two fft sizes are supported.
    """
    if fft_size < window_size:
        raise ValueError("fft size must be at least the window size")
    if hop < 1:
        raise ValueError("hop must be at least one sample")
    frames = frame_signal(as_samples(signal), window_size, hop)
    return np.fft.rfft(frames * hann_window(window_size), n=fft_size, axis=1)


def stft_mag(signal, window_size: int, hop: int, fft_size: int) -> np.ndarray:
    """Magnitude spectrogram of ``stft_complex``, shape (frames, bins)."""
    return np.abs(stft_complex(signal, window_size, hop, fft_size))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=16)
def mel_filterbank(
    sample_rate: int,
    fft_size: int,
    mel_bins: int,
    fmin: float,
    fmax: float,
) -> np.ndarray:
    """Triangular mel filterbank, (mel_bins, fft_size//2 + 1)."""
    num_freqs = fft_size // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2.0, num_freqs)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), mel_bins + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bank = np.zeros((mel_bins, num_freqs))
    for m in range(mel_bins):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - freqs) / max(hi - ctr, 1e-12)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    bank.flags.writeable = False
    return bank


LOG_MEL_FLOOR = 1e-6


def log_mel(
    frame,
    sample_rate: int,
    mel_bins: int = 64,
    window_ms: float = 25.0,
    hop_ms: float = 10.0,
    fmin: float = 125.0,
    fmax: float = 7500.0,
) -> np.ndarray:
    """Log-mel feature matrix (time_steps x mel_bins) of one analysis frame.

    25 ms Hann windows at a 10 ms hop feed a power spectrum into a
    triangular mel filterbank; the silence floor is log(1e-6).
    """
    x = as_samples(frame)
    win = ms_to_samples(window_ms, sample_rate)
    hop = ms_to_samples(hop_ms, sample_rate)
    if x.shape[0] < win:
        raise ValueError("frame shorter than one analysis window")
    fft_size = 1
    while fft_size < win:
        fft_size *= 2
    spec = stft_complex(x, win, hop, fft_size)
    power = spec.real**2 + spec.imag**2
    bank = mel_filterbank(sample_rate, fft_size, mel_bins, fmin, fmax)
    return np.log(power @ bank.T + LOG_MEL_FLOOR)


def apply_gain(frame, gain: float, ramp_from: float | None = None, ramp_samples: int = 0):
    """Scale a frame by a nonnegative gain.

    With ``ramp_from`` set and ``ramp_samples`` > 0, the leading portion of
    the frame crossfades linearly from the previous gain to the new one
    (disabled by default; gain is otherwise constant across the frame).
    """
    if gain < 0:
        raise ValueError("gain must be nonnegative")
    x = as_samples(frame)
    if ramp_from is None or ramp_samples <= 0:
        return x * gain
    if ramp_from < 0:
        raise ValueError("gain must be nonnegative")
    n = min(int(ramp_samples), x.shape[0])
    envelope = np.full(x.shape[0], gain)
    if n > 0:
        t = (np.arange(n) + 1.0) / n
        envelope[:n] = ramp_from + (gain - ramp_from) * t
    return x * envelope


def sum_channels(frames) -> np.ndarray:
    """Sample-wise sum of equal-length channel frames; no normalization."""
    arrays = [as_samples(f) for f in frames]
    if not arrays:
        raise ValueError("need at least one frame")
    n = arrays[0].shape[0]
    for a in arrays:
        if a.shape[0] != n:
            raise ValueError("frame length mismatch")
    return np.sum(arrays, axis=0)


def normalize_peak(buffer: AudioBuffer, target_dbfs: float) -> AudioBuffer:
    """Scale a buffer so its absolute peak hits ``target_dbfs``."""
    peak = float(np.max(np.abs(buffer.samples))) if len(buffer) else 0.0
    if peak == 0.0:
        raise ValueError("silent buffer")
    scale = db_to_linear(target_dbfs) / peak
    return AudioBuffer(buffer.samples * scale, buffer.sample_rate)
