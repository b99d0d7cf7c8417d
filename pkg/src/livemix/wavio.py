"""Mono WAV file I/O: little-endian RIFF, 16-bit PCM and 32-bit float."""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .dsp import AudioBuffer
from .errors import InputError

_PCM16_SCALE = 32768.0


def read_wav(path) -> AudioBuffer:
    """Read a mono WAV file into an AudioBuffer (float64 in [-1, 1] nominal)."""
    if not os.path.exists(path):
        raise InputError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise InputError(f"unsupported or corrupt WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise InputError(f"expected mono audio, got {data.shape[1]} channels: {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise InputError(f"unsupported WAV sample format {data.dtype} in {path}")
    return AudioBuffer(samples, int(rate))


def write_wav(path, buffer: AudioBuffer, fmt: str = "float32") -> None:
    """Write an AudioBuffer as a mono WAV file.

    ``fmt`` is "float32" (lossless round trip at engine precision) or
    "pcm16" (clipped to full scale and quantized).
    """
    if fmt == "float32":
        data = buffer.samples.astype(np.float32)
    elif fmt == "pcm16":
        clipped = np.clip(buffer.samples, -1.0, 32767.0 / _PCM16_SCALE)
        data = np.round(clipped * _PCM16_SCALE).astype(np.int16)
    else:
        raise InputError(f"unsupported WAV output format {fmt!r}")
    wavfile.write(path, buffer.sample_rate, data)
