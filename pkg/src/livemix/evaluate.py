"""Objective mix evaluation against a session's reference mix.

No perceptual claim is made: the report covers spectral distance to the
reference, clipped-sample counts, per-channel mean gains, and the largest
gain jump between consecutive control frames (a smoothness proxy).
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import scheduler
from .dsp import SpectralConfig
from .errors import InputError
from .losses import mrstft_loss
from .model import ALM_KIND, DMC_KIND, AlmPredictor, DmcPredictor, FixedGainPredictor

POLICY_NAMES = ("alm-mr", "alm-sr", "dmc", "raw")


@dataclass
class Policy:
    """A named predictor plus the frame-rate mode it runs in."""

    name: str
    predictor: object
    mode: str


def builtin_policy(name: str, models: dict, default_mode: str = "mr") -> Policy:
    """Instantiate one of the standard policies from loaded model sections.

    The baseline always runs single-rate (its embedding is its only input,
    so gains can only change when the long frame does); "raw" is the plain
    channel sum.
    """
    if name == "alm-mr" or name == "alm-sr":
        if ALM_KIND not in models:
            raise InputError(f"policy {name!r} needs an 'alm' section in the weights")
        return Policy(name, AlmPredictor(models[ALM_KIND]), name.split("-")[1])
    if name == "dmc":
        if DMC_KIND not in models:
            raise InputError("policy 'dmc' needs a 'dmc' section in the weights")
        return Policy(name, DmcPredictor(models[DMC_KIND]), "sr")
    if name == "raw":
        return Policy(name, FixedGainPredictor(1.0), default_mode)
    raise InputError(f"unknown policy {name!r} (expected one of {', '.join(POLICY_NAMES)})")


@dataclass
class PolicyResult:
    policy: str
    mode: str
    stft_distance: float
    clipped_samples: int
    mean_gain: list
    max_gain_step: float
    num_frames: int


@dataclass
class EvalReport:
    sample_rate: int
    num_channels: int
    num_samples: int
    channel_names: list
    policies: list

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        gain_cols = [f"mean_gain_{i}" for i in range(self.num_channels)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["policy", "mode", "stft_distance", "clipped_samples", "max_gain_step", *gain_cols]
            )
            for r in self.policies:
                writer.writerow(
                    [r.policy, r.mode, repr(r.stft_distance), r.clipped_samples,
                     repr(r.max_gain_step), *[repr(g) for g in r.mean_gain]]
                )


def evaluate(session, policies, loss_config: SpectralConfig | None = None,
             warmup_gain: float = 1.0):
    """Run every policy over the session and score it against the reference.

    Returns (EvalReport, artifacts) where artifacts maps policy name to its
    (mix AudioBuffer, GainTimeline) for rendering.
    """
    if session.reference_mix is None:
        raise InputError("evaluation needs a session with a reference mix")
    loss_config = loss_config or SpectralConfig()
    results = []
    artifacts = {}
    for policy in policies:
        mix, timeline = scheduler.run_offline(
            session, policy.mode, policy.predictor, warmup_gain=warmup_gain
        )
        distance = mrstft_loss(mix, session.reference_mix, loss_config).item()
        results.append(
            PolicyResult(
                policy=policy.name,
                mode=policy.mode,
                stft_distance=float(distance),
                clipped_samples=int(np.sum(np.abs(mix.samples) > 1.0)),
                mean_gain=[float(g) for g in timeline.mean_per_channel()],
                max_gain_step=float(timeline.max_step()),
                num_frames=timeline.num_frames,
            )
        )
        artifacts[policy.name] = (mix, timeline)
    report = EvalReport(
        sample_rate=session.sample_rate,
        num_channels=session.num_channels,
        num_samples=session.num_samples,
        channel_names=[c.name for c in session.channels],
        policies=results,
    )
    return report, artifacts
