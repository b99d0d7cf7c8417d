"""Multitrack sessions: manifests, WAV ingest, and synthetic generation.

A session manifest is a JSON file:

    {
      "sample_rate": 16000,
      "channels": [{"file": "guitar.wav", "name": "gtr", "instrument": "guitar"}, ...],
      "reference_mix": "mix.wav"            // optional
    }

File paths are resolved relative to the manifest. On ingest every channel
is resampled to the engine rate and all channels (plus the reference) are
trimmed to the shortest common length.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import wavio
from .dsp import AudioBuffer, DEFAULT_SAMPLE_RATE, normalize_peak
from .errors import InputError

log = logging.getLogger(__name__)

MAX_CHANNELS_DEFAULT = 8


@dataclass
class SessionChannel:
    name: str
    instrument: str
    audio: AudioBuffer


@dataclass
class MultitrackSession:
    """An ordered set of equal-length channels plus an optional reference mix."""

    channels: list
    reference_mix: AudioBuffer | None
    sample_rate: int
    manifest_path: str | None = None

    def __post_init__(self):
        if not self.channels:
            raise InputError("session has zero channels")
        lengths = {len(c.audio) for c in self.channels}
        rates = {c.audio.sample_rate for c in self.channels}
        if self.reference_mix is not None:
            lengths.add(len(self.reference_mix))
            rates.add(self.reference_mix.sample_rate)
        if len(lengths) != 1:
            raise InputError(f"channel lengths differ after ingest: {sorted(lengths)}")
        if rates != {self.sample_rate}:
            raise InputError("sample rate mismatch inside session")

    @property
    def num_channels(self) -> int:
        return len(self.channels)

    @property
    def num_samples(self) -> int:
        return len(self.channels[0].audio)

    def stem_matrix(self) -> np.ndarray:
        """Channel audio as a (C, N) matrix."""
        return np.stack([c.audio.samples for c in self.channels])

    def with_stems(self, stems: np.ndarray, reference: AudioBuffer | None = None) -> "MultitrackSession":
        """Same channel names/labels with replacement audio."""
        stems = np.atleast_2d(stems)
        if stems.shape[0] != self.num_channels:
            raise ValueError("stem count does not match session channels")
        channels = [
            SessionChannel(c.name, c.instrument, AudioBuffer(stems[i], self.sample_rate))
            for i, c in enumerate(self.channels)
        ]
        return MultitrackSession(
            channels=channels,
            reference_mix=self.reference_mix if reference is None else reference,
            sample_rate=self.sample_rate,
        )


def resample_linear(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Linear-interpolation resampling (ingest only)."""
    if target_rate <= 0:
        raise ValueError("target rate must be positive")
    if buffer.sample_rate == target_rate:
        return buffer
    n = len(buffer)
    m = int(round(n * target_rate / buffer.sample_rate))
    positions = np.arange(m) * (buffer.sample_rate / target_rate)
    samples = np.interp(positions, np.arange(n), buffer.samples)
    return AudioBuffer(samples, target_rate)


def load_session(
    manifest_path,
    engine_rate: int = DEFAULT_SAMPLE_RATE,
    max_channels: int = MAX_CHANNELS_DEFAULT,
) -> MultitrackSession:
    """Load a manifest, decode and resample its WAVs, align lengths."""
    if not os.path.exists(manifest_path):
        raise InputError(f"manifest not found: {manifest_path}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    entries = manifest.get("channels", [])
    if not entries:
        raise InputError(f"manifest {manifest_path} lists zero channels")
    if len(entries) > max_channels:
        raise InputError(
            f"manifest {manifest_path} lists {len(entries)} channels; limit is {max_channels}"
        )
    base = os.path.dirname(os.path.abspath(manifest_path))

    def ingest(relative):
        buffer = wavio.read_wav(os.path.join(base, relative))
        return resample_linear(buffer, engine_rate)

    channels = []
    for i, entry in enumerate(entries):
        if "file" not in entry:
            raise InputError(f"channel {i} in {manifest_path} has no 'file'")
        channels.append(
            SessionChannel(
                name=entry.get("name", f"ch{i}"),
                instrument=entry.get("instrument", "unknown"),
                audio=ingest(entry["file"]),
            )
        )
    reference = None
    if manifest.get("reference_mix"):
        reference = ingest(manifest["reference_mix"])

    lengths = [len(c.audio) for c in channels]
    if reference is not None:
        lengths.append(len(reference))
    shortest = min(lengths)
    if max(lengths) != shortest:
        log.warning(
            "trimming session %s to shortest channel: %d -> %d samples",
            manifest_path, max(lengths), shortest,
        )
    for c in channels:
        c.audio = AudioBuffer(c.audio.samples[:shortest], engine_rate)
    if reference is not None:
        reference = AudioBuffer(reference.samples[:shortest], engine_rate)
    return MultitrackSession(
        channels=channels,
        reference_mix=reference,
        sample_rate=engine_rate,
        manifest_path=str(manifest_path),
    )


def save_session(session: MultitrackSession, out_dir, manifest_name: str = "manifest.json") -> str:
    """Write channel WAVs (32-bit float), the reference, and a manifest."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, channel in enumerate(session.channels):
        filename = f"{i:02d}_{_safe_name(channel.name)}.wav"
        wavio.write_wav(os.path.join(out_dir, filename), channel.audio)
        entries.append({"file": filename, "name": channel.name, "instrument": channel.instrument})
    manifest = {"sample_rate": session.sample_rate, "channels": entries, "reference_mix": None}
    if session.reference_mix is not None:
        wavio.write_wav(os.path.join(out_dir, "reference_mix.wav"), session.reference_mix)
        manifest["reference_mix"] = "reference_mix.wav"
    path = os.path.join(out_dir, manifest_name)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name) or "channel"


# -- synthetic sessions --------------------------------------------------------

DEFAULT_SYNTH_SPEC = {
    "sample_rate": DEFAULT_SAMPLE_RATE,
    "duration_seconds": 6.0,
    "normalize_reference_dbfs": -6.0,
    "channels": [
        {"name": "bass", "instrument": "bass", "kind": "sine", "freq": 82.4, "level": 0.6,
         "am_hz": 0.5, "am_depth": 0.3, "target_gain": 1.0},
        {"name": "lead", "instrument": "guitar", "kind": "saw", "freq": 440.0, "level": 0.4,
         "am_hz": 0.9, "am_depth": 0.4, "target_gain": 0.8},
        {"name": "keys", "instrument": "keys", "kind": "sine", "freq": 261.6, "level": 0.5,
         "am_hz": 0.3, "am_depth": 0.2, "target_gain": 0.9},
        {"name": "perc", "instrument": "drums", "kind": "noise", "level": 0.3,
         "am_hz": 2.0, "am_depth": 0.8, "target_gain": 0.7},
    ],
}


def _render_channel(entry: dict, num_samples: int, sample_rate: int, rng) -> np.ndarray:
    kind = entry.get("kind", "sine")
    level = float(entry.get("level", 0.5))
    t = np.arange(num_samples) / sample_rate
    if kind == "sine":
        phase = float(entry.get("phase", 0.0))
        x = np.sin(2.0 * np.pi * float(entry.get("freq", 440.0)) * t + phase)
    elif kind == "saw":
        freq = float(entry.get("freq", 220.0))
        x = 2.0 * ((t * freq) % 1.0) - 1.0
    elif kind == "noise":
        x = rng.standard_normal(num_samples) * 0.5
    else:
        raise InputError(f"unknown synthetic channel kind {kind!r}")
    am_hz = float(entry.get("am_hz", 0.0))
    if am_hz > 0.0:
        depth = float(entry.get("am_depth", 0.5))
        x = x * (1.0 - depth / 2.0 + (depth / 2.0) * np.sin(2.0 * np.pi * am_hz * t))
    silent_until = float(entry.get("silent_until_s", 0.0))
    if silent_until > 0.0:
        x[: min(int(silent_until * sample_rate), num_samples)] = 0.0
    return level * x


def gen_synth(spec: dict | str, seed: int = 0) -> MultitrackSession:
    """Deterministic synthetic multitrack with an analytic reference mix.

    The reference equals the target-gain-weighted channel sum exactly; the
    per-channel target gains stay available for oracle tests via the
    returned session's ``target_gains`` attribute. When the spec sets
    ``normalize_reference_dbfs`` the stems are pre-scaled so the reference
    peaks there while remaining exactly the weighted sum.
    """
    if isinstance(spec, str):
        try:
            with open(spec) as fh:
                spec = json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"generator spec not found: {spec}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"generator spec is not valid JSON: {exc}") from exc
    sample_rate = int(spec.get("sample_rate", DEFAULT_SAMPLE_RATE))
    duration = float(spec.get("duration_seconds", 6.0))
    num_samples = int(round(duration * sample_rate))
    entries = spec.get("channels", [])
    if not entries:
        raise InputError("generator spec lists zero channels")
    rng = np.random.default_rng(seed)

    stems = np.stack([_render_channel(e, num_samples, sample_rate, rng) for e in entries])
    target_gains = np.array([float(e.get("target_gain", 1.0)) for e in entries])

    target_dbfs = spec.get("normalize_reference_dbfs", -6.0)
    if target_dbfs is not None:
        reference = target_gains @ stems
        peak = float(np.max(np.abs(reference)))
        if peak > 0.0:
            stems = stems * (10.0 ** (float(target_dbfs) / 20.0) / peak)
    reference = AudioBuffer(target_gains @ stems, sample_rate)

    channels = [
        SessionChannel(
            name=e.get("name", f"ch{i}"),
            instrument=e.get("instrument", "synth"),
            audio=AudioBuffer(stems[i], sample_rate),
        )
        for i, e in enumerate(entries)
    ]
    session = MultitrackSession(channels=channels, reference_mix=reference, sample_rate=sample_rate)
    session.target_gains = target_gains
    return session
