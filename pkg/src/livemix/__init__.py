"""livemix: zero-latency multitrack automatic mixing.

A two-rate streaming engine predicts one mono gain per channel one control
frame ahead of time, so the mixed output is rendered with no added
latency. The package also ships the room-acoustic bleed simulator and the
training harness needed to fit the gain predictor on bleed-corrupted
multitracks.
"""

from .dsp import AudioBuffer, FrameClock, SpectralConfig
from .scheduler import GainTimeline, run_offline
from .session import MultitrackSession, gen_synth, load_session

__all__ = [
    "AudioBuffer",
    "FrameClock",
    "SpectralConfig",
    "GainTimeline",
    "MultitrackSession",
    "gen_synth",
    "load_session",
    "run_offline",
]

__version__ = "0.1.0"
