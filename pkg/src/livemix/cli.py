"""Command-line interface.

Subcommands: mix, train, simulate-bleed, eval, gen-synth.
Exit codes: 0 success, 2 bad input, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import report as report_mod
from . import training, wavio, weights
from .dsp import FrameClock
from .errors import InputError
from .evaluate import builtin_policy, evaluate
from .model import ALM_KIND
from .scheduler import run_offline
from .session import gen_synth, load_session, save_session

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_INTERNAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="livemix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_mix = sub.add_parser("mix", help="render a zero-latency mix of a session")
    p_mix.add_argument("--session", required=True, help="session manifest JSON")
    p_mix.add_argument("--mode", choices=("mr", "sr"), default="mr")
    p_mix.add_argument("--weights", required=True, help="model weights file")
    p_mix.add_argument("--out", required=True, help="output mix WAV path")
    p_mix.add_argument("--gains-csv", default=None,
                       help="gain timeline CSV (default: <out>.gains.csv)")
    p_mix.add_argument("--warmup-gain", type=float, default=1.0,
                       help="gain for the first frame, before any prediction exists")
    p_mix.set_defaults(func=cmd_mix)

    p_train = sub.add_parser("train", help="fit the gain predictor on sessions")
    p_train.add_argument("--data", required=True,
                         help="manifest file, or directory searched for manifest JSONs")
    p_train.add_argument("--config", required=True, help="training config JSON")
    p_train.add_argument("--out", required=True, help="output weights file")
    p_train.add_argument("--loss-csv", default=None,
                         help="loss log CSV (default: <out>.loss.csv)")
    p_train.add_argument("--checkpoint-every", type=int, default=None,
                         help="override the config's checkpoint interval")
    p_train.set_defaults(func=cmd_train)

    p_bleed = sub.add_parser("simulate-bleed", help="corrupt a session with room bleed")
    p_bleed.add_argument("--session", required=True)
    p_bleed.add_argument("--config", required=True, help="bleed config JSON")
    p_bleed.add_argument("--seed", type=int, required=True)
    p_bleed.add_argument("--out", required=True, help="output directory")
    p_bleed.set_defaults(func=cmd_simulate_bleed)

    p_eval = sub.add_parser("eval", help="score mixing policies against the reference")
    p_eval.add_argument("--session", required=True)
    p_eval.add_argument("--weights", action="append", default=[],
                        help="weights file; repeat to merge sections from several files")
    p_eval.add_argument("--policies", default="alm-mr,alm-sr,dmc,raw",
                        help="comma-separated: alm-mr, alm-sr, dmc, raw")
    p_eval.add_argument("--mode", choices=("mr", "sr"), default="mr",
                        help="frame mode for policies without an intrinsic one")
    p_eval.add_argument("--out", required=True, help="report JSON path")
    p_eval.add_argument("--no-figures", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("gen-synth", help="generate a synthetic session")
    p_synth.add_argument("--spec", required=True, help="generator spec JSON")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_gen_synth)

    return parser


def cmd_mix(args) -> int:
    session = load_session(args.session)
    models = weights.load_weights(args.weights)
    params = models.get(ALM_KIND) or next(iter(models.values()))
    predictor = training.make_predictor(params)
    mix, timeline = run_offline(session, args.mode, predictor, warmup_gain=args.warmup_gain)
    wavio.write_wav(args.out, mix)
    gains_csv = args.gains_csv or f"{args.out}.gains.csv"
    timeline.write_csv(gains_csv)
    print(f"wrote {args.out} ({mix.duration_seconds:.2f} s) and {gains_csv}")
    return EXIT_OK


def _find_manifests(data_path):
    if os.path.isfile(data_path):
        return [data_path]
    if not os.path.isdir(data_path):
        raise InputError(f"training data path not found: {data_path}")
    found = []
    for root, _, files in sorted(os.walk(data_path)):
        for name in sorted(files):
            if name.endswith(".json") and "manifest" in name:
                found.append(os.path.join(root, name))
    if not found:
        raise InputError(f"no session manifests under {data_path}")
    return found


def cmd_train(args) -> int:
    cfg = training.TrainConfig.from_json(args.config)
    if args.checkpoint_every is not None:
        cfg.checkpoint_every = args.checkpoint_every
    sessions = [load_session(path) for path in _find_manifests(args.data)]

    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    log_rows = []

    def on_epoch(record):
        log_rows.append(record)
        print(f"epoch {record.epoch}: loss {record.loss:.6f} lr {record.lr:g}")

    def checkpoint(epoch, params):
        weights.save_weights(f"{args.out}.epoch{epoch + 1}", params)

    params, history = training.train(sessions, cfg, on_epoch=on_epoch, checkpoint=checkpoint)
    weights.save_weights(args.out, params)
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr"])
        for r in history:
            writer.writerow([r.epoch, repr(r.loss), repr(r.lr)])
    report_mod.save_loss_curve(history, f"{args.out}.loss.png")
    print(f"wrote {args.out}, {loss_csv}, {args.out}.loss.png")
    return EXIT_OK


def cmd_simulate_bleed(args) -> int:
    from .bleedsim import BleedConfig, apply_bleed

    session = load_session(args.session)
    try:
        with open(args.config) as fh:
            cfg = BleedConfig.from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise InputError(f"bleed config not found: {args.config}") from exc
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InputError(f"bad bleed config {args.config}: {exc}") from exc
    corrupted, metadata = apply_bleed(
        session.stem_matrix(), cfg, sample_rate=session.sample_rate, seed=args.seed
    )
    out_session = session.with_stems(corrupted)
    manifest_path = save_session(out_session, args.out)
    with open(os.path.join(args.out, "bleed_metadata.json"), "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote corrupted session to {args.out} (manifest {manifest_path})")
    return EXIT_OK


def cmd_eval(args) -> int:
    session = load_session(args.session)
    models = {}
    for path in args.weights:
        models.update(weights.load_weights(path))
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    if not names:
        raise InputError("no policies requested")
    policies = [builtin_policy(name, models, default_mode=args.mode) for name in names]
    report, artifacts = evaluate(session, policies)

    report.write_json(args.out)
    stem, _ = os.path.splitext(args.out)
    report.write_csv(f"{stem}.csv")
    written = [args.out, f"{stem}.csv"]
    if not args.no_figures:
        for policy in policies:
            _, timeline = artifacts[policy.name]
            clock = FrameClock.for_mode(policy.mode, session.sample_rate)
            fig_path = f"{stem}_gains_{policy.name}.png"
            report_mod.save_gain_timeline_figure(
                timeline, clock, report.channel_names, fig_path, title=policy.name
            )
            written.append(fig_path)
        report_mod.save_metrics_figure(report, f"{stem}_metrics.png")
        written.append(f"{stem}_metrics.png")
    print("wrote " + ", ".join(written))
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    session = gen_synth(args.spec, seed=args.seed)
    manifest_path = save_session(session, args.out)
    print(f"wrote synthetic session to {args.out} (manifest {manifest_path})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
