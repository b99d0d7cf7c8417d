"""Parametric bleed simulation: shoebox image-source RIRs plus level draws.

Every microphone in a live room picks up every instrument, delayed and
attenuated by the room. This module synthesizes that leakage: mirror-image
sources of a shoebox room build a source-to-mic impulse response, stems are
convolved with the full source/mic response matrix, and per-channel input
levels are randomized both before and after the leakage so training sees a
wide range of gain stagings. Everything is a pure function of (inputs,
seed); each draw is recorded in the returned metadata.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .dsp import AudioBuffer, db_to_linear

SPEED_OF_SOUND = 343.0
SINC_HALFWIDTH = 40  # taps on each side of a fractional-delay arrival


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room geometry driving RIR synthesis."""

    dimensions: tuple
    absorption: float
    max_image_order: int
    source_positions: tuple = ()
    mic_positions: tuple = ()
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError("room dimensions must be three positive lengths")
        if not 0.0 <= self.absorption <= 1.0:
            raise ValueError("absorption must lie in [0, 1]")
        if self.max_image_order < 0:
            raise ValueError("image order must be nonnegative")
        if self.speed_of_sound <= 0:
            raise ValueError("speed of sound must be positive")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "source_positions", tuple(tuple(map(float, p)) for p in self.source_positions))
        object.__setattr__(self, "mic_positions", tuple(tuple(map(float, p)) for p in self.mic_positions))
        for pos in (*self.source_positions, *self.mic_positions):
            _check_inside(pos, dims)


def _check_inside(point, dims) -> None:
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (3,):
        raise ValueError("positions are 3-D points")
    if np.any(point <= 0.0) or np.any(point >= np.asarray(dims)):
        raise ValueError(f"position {tuple(point)} not strictly inside the room {dims}")


def image_sources(room: RoomSpec, source, order: int):
    """Mirror images of ``source`` across the six walls, up to ``order``.

    Returns a list of (position (3,), reflection_count) with reflection
    counts |mx|+|my|+|mz| over the shoebox image lattice, deduplicated.
    """
    _check_inside(source, room.dimensions)
    if order < 0:
        raise ValueError("image order must be nonnegative")
    source = np.asarray(source, dtype=np.float64)
    dims = np.asarray(room.dimensions)
    images = {}
    rng_axis = range(-order, order + 1)
    for mx in rng_axis:
        for my in rng_axis:
            budget = order - abs(mx) - abs(my)
            if budget < 0:
                continue
            for mz in range(-budget, budget + 1):
                m = np.array([mx, my, mz])
                base = np.where(m % 2 == 0, source, dims - source)
                pos = m * dims + base
                count = int(np.sum(np.abs(m)))
                key = tuple(np.round(pos, 9))
                if key not in images or count < images[key][1]:
                    images[key] = (pos, count)
    return list(images.values())


def _windowed_sinc_taps(delay: float, halfwidth: int = SINC_HALFWIDTH):
    """Hann-tapered sinc interpolation of a unit arrival at ``delay`` samples."""
    first = int(np.ceil(delay - halfwidth))
    idx = np.arange(first, int(np.floor(delay + halfwidth)) + 1)
    u = idx - delay
    taper = 0.5 * (1.0 + np.cos(np.pi * u / (halfwidth + 1)))
    return idx, np.sinc(u) * taper


def rir(room: RoomSpec, source, mic, sample_rate: int = 16000) -> AudioBuffer:
    """Image-source impulse response from ``source`` to ``mic``.

    Each image contributes a fractional-delay arrival (81-tap windowed
    sinc) with amplitude (1 - absorption)^reflections / (4 pi distance).
    """
    _check_inside(mic, room.dimensions)
    source = np.asarray(source, dtype=np.float64)
    mic = np.asarray(mic, dtype=np.float64)
    if np.allclose(source, mic):
        raise ValueError("source and microphone positions coincide")
    images = image_sources(room, source, room.max_image_order)
    reflectivity = 1.0 - room.absorption
    samples_per_meter = sample_rate / room.speed_of_sound

    arrivals = []
    max_delay = 0.0
    for pos, reflections in images:
        distance = float(np.linalg.norm(pos - mic))
        amplitude = reflectivity**reflections / (4.0 * np.pi * distance)
        if amplitude == 0.0:
            continue
        delay = distance * samples_per_meter
        arrivals.append((delay, amplitude))
        max_delay = max(max_delay, delay)

    length = int(np.ceil(max_delay)) + SINC_HALFWIDTH + 1
    response = np.zeros(length)
    for delay, amplitude in arrivals:
        idx, taps = _windowed_sinc_taps(delay)
        valid = (idx >= 0) & (idx < length)
        response[idx[valid]] += amplitude * taps[valid]
    return AudioBuffer(response, sample_rate)


@dataclass(frozen=True)
class BleedConfig:
    """Randomization ranges for on-the-fly bleed draws (all recorded)."""

    room_dim_range: tuple = ((4.0, 20.0), (4.0, 20.0), (4.0, 20.0))
    absorption_range: tuple = (0.2, 0.9)
    order_range: tuple = (2, 6)
    min_source_mic_spacing: float = 0.3
    max_source_mic_spacing: float = 0.8
    min_source_spacing: float = 2.5
    wall_margin: float = 1.2
    pre_level_db: tuple = (-12.0, 12.0)
    post_level_db: tuple = (-12.0, 12.0)
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (*self.room_dim_range, self.absorption_range, self.order_range,
                       self.pre_level_db, self.post_level_db):
            if lo > hi:
                raise ValueError("range minimum exceeds maximum")
        if not 0 < self.min_source_mic_spacing <= self.max_source_mic_spacing:
            raise ValueError("source-mic spacing range must be positive and ordered")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BleedConfig":
        data = dict(data)
        for key in ("room_dim_range", "absorption_range", "order_range",
                    "pre_level_db", "post_level_db"):
            if key in data:
                value = data[key]
                if key == "room_dim_range":
                    value = tuple(tuple(v) for v in value)
                else:
                    value = tuple(value)
                data[key] = value
        return cls(**data)


def randomize_levels(stems: np.ndarray, range_db, rng):
    """Scale each channel by 10^(u/20), u uniform in ``range_db``.

    Returns (scaled stems, drawn linear gains). ``rng`` is a Generator or
    an integer seed.
    """
    lo, hi = range_db
    if lo > hi:
        raise ValueError("level range minimum exceeds maximum")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    stems = np.atleast_2d(np.asarray(stems, dtype=np.float64))
    draws_db = rng.uniform(lo, hi, size=stems.shape[0])
    gains = np.array([db_to_linear(d) for d in draws_db])
    return stems * gains[:, np.newaxis], gains


def _sample_layout(rng, dims, num_channels, cfg: BleedConfig):
    """Place one source and one mic per channel, own source nearest its mic."""
    dims = np.asarray(dims)
    margin = min(cfg.wall_margin, float(np.min(dims)) / 4.0)
    spacing = cfg.min_source_spacing
    for _ in range(40):  # relax spacing until the room fits all sources
        sources = []
        attempts = 0
        while len(sources) < num_channels and attempts < 400:
            attempts += 1
            candidate = rng.uniform(margin, dims - margin)
            if all(np.linalg.norm(candidate - s) >= spacing for s in sources):
                sources.append(candidate)
        if len(sources) == num_channels:
            break
        spacing *= 0.8
    else:
        raise ValueError("could not place sources inside the room")

    mics = []
    for i, src in enumerate(sources):
        for _ in range(200):
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            radius = rng.uniform(cfg.min_source_mic_spacing, cfg.max_source_mic_spacing)
            mic = src + radius * direction
            inside = np.all(mic > 0.05) and np.all(mic < dims - 0.05)
            others = [s for j, s in enumerate(sources) if j != i]
            nearest_own = all(np.linalg.norm(mic - o) > radius for o in others)
            if inside and nearest_own:
                mics.append(mic)
                break
        else:
            # fall back to a tight offset toward the room center
            center = dims / 2.0
            direction = center - src
            direction /= max(np.linalg.norm(direction), 1e-9)
            mics.append(src + cfg.min_source_mic_spacing * direction)
    return [tuple(s) for s in sources], [tuple(m) for m in mics]


def draw_room(cfg: BleedConfig, num_channels: int, rng) -> RoomSpec:
    """Draw a randomized room and channel layout from the config ranges."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    dims = tuple(rng.uniform(lo, hi) for lo, hi in cfg.room_dim_range)
    absorption = float(rng.uniform(*cfg.absorption_range))
    order = int(rng.integers(cfg.order_range[0], cfg.order_range[1] + 1))
    sources, mics = _sample_layout(rng, dims, num_channels, cfg)
    return RoomSpec(
        dimensions=dims,
        absorption=absorption,
        max_image_order=order,
        source_positions=tuple(sources),
        mic_positions=tuple(mics),
    )


def apply_bleed(stems, cfg: BleedConfig, sample_rate: int = 16000, seed: int | None = None):
    """Corrupt clean stems with simulated room leakage.

    Microphone c belongs to instrument c; its output is the sum over all
    sources s of stem_s convolved with rir(source_s -> mic_c), truncated to
    the input length. Pre-bleed gains randomize the relative instrument
    balance, post-bleed gains the absolute channel levels. Returns
    (corrupted (C, N), metadata dict recording every draw).
    """
    stems = np.atleast_2d(np.asarray(stems, dtype=np.float64))
    num_channels, num_samples = stems.shape
    if num_channels < 1 or num_samples < 1:
        raise ValueError("need at least one non-empty stem")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    staged, pre_gains = randomize_levels(stems, cfg.pre_level_db, rng)
    room = draw_room(cfg, num_channels, rng)

    responses = [
        [rir(room, room.source_positions[s], room.mic_positions[c], sample_rate) for s in range(num_channels)]
        for c in range(num_channels)
    ]
    corrupted = np.zeros_like(stems)
    for c in range(num_channels):
        for s in range(num_channels):
            corrupted[c] += fftconvolve(staged[s], responses[c][s].samples)[:num_samples]

    corrupted, post_gains = randomize_levels(corrupted, cfg.post_level_db, rng)

    metadata = {
        "seed": int(cfg.seed if seed is None else seed),
        "sample_rate": int(sample_rate),
        "room": {
            "dimensions": list(room.dimensions),
            "absorption": room.absorption,
            "max_image_order": room.max_image_order,
            "source_positions": [list(p) for p in room.source_positions],
            "mic_positions": [list(p) for p in room.mic_positions],
        },
        "pre_level_gains": pre_gains.tolist(),
        "post_level_gains": post_gains.tolist(),
        "config": cfg.to_dict(),
    }
    return corrupted, metadata
