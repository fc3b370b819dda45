"""Command-line entry point.

Subcommands::

    cuetrack simulate --out DIR                      frames.jsonl, truth.jsonl, events.jsonl
    cuetrack train --frames F --truth T --checkpoint CK [--loss-csv CSV]
    cuetrack track --frames F [--checkpoint CK] --out TRACKS
    cuetrack eval --tracks TRACKS --truth T [--events E] [--out REPORT]
    cuetrack stats --truth T [--every N]
    cuetrack ablate --frames F --truth T [--events E] [--checkpoint CK] [--out REPORT]

Every subcommand accepts ``--config`` (JSON, EngineConfig schema) and
``--seed``. Failures print one JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ABLATIONS, ConfigError, EngineConfig, load_config
from .io import (FormatError, load_checkpoint, read_frames, read_tracks, read_truth, save_checkpoint,
                 write_events, write_frames, write_loss_curve, write_tracks, write_truth)
from .learn import train
from .metrics import continuity_stats, evaluate, format_table, subsample
from .model import ModelParams
from .simgen import generate, to_training_pairs
from .tracker import track_sequence

logger = logging.getLogger("cuetrack")

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_INPUT, **extra):
        super().__init__(message)
        self.kind, self.message, self.code, self.extra = kind, message, code, extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _engine_config(args) -> EngineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    for flag, name in (("no_tcp", "no_tcp"), ("no_mga", "no_mga"), ("naive_fusion", "no_mcf")):
        if getattr(args, flag, False):
            cfg = cfg.ablated(name)
    return cfg


def _load_params(path, cfg: EngineConfig) -> ModelParams:
    if path is None:
        return ModelParams.init(cfg.mcf.d, cfg.mcf.hidden, cfg.learn.seed)
    params, meta = load_checkpoint(path)
    if params.dim != cfg.mcf.d or params.mcf.hidden != cfg.mcf.hidden:
        raise CliError("config", f"checkpoint dims {meta['dims']} do not match config d={cfg.mcf.d} "
                                 f"h={cfg.mcf.hidden}")
    return params


def _check_dim(frames, cfg: EngineConfig, path) -> None:
    for f in frames:
        for d in f.detections:
            if d.app.shape[0] != cfg.mcf.d:
                raise CliError("config", f"{path}: frame {f.frame_id} has embedding dim {d.app.shape[0]}, "
                                         f"config expects {cfg.mcf.d}")
            return


def cmd_simulate(args) -> int:
    cfg = _engine_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames, truth = generate(cfg.scenario)
    write_frames(out / "frames.jsonl", frames)
    write_truth(out / "truth.jsonl", truth)
    write_events(out / "events.jsonl", truth.events)
    logger.info("wrote %d frames to %s", len(frames), out)
    return 0


def cmd_train(args) -> int:
    cfg = _engine_config(args)
    frames = read_frames(args.frames)
    truth = read_truth(args.truth)
    if [f.frame_id for f in frames] != truth.frame_ids:
        raise CliError("input", f"{args.frames} and {args.truth} cover different frame ranges")
    _check_dim(frames, cfg, args.frames)
    pairs = to_training_pairs(frames, truth)
    if not pairs:
        raise CliError("input", "no adjacent frame pair with detections to train on")
    params, curve = train(pairs, cfg.mcf, cfg.mga, cfg.learn)
    save_checkpoint(args.checkpoint, params, cfg.fingerprint())
    loss_path = args.loss_csv or str(Path(args.checkpoint).with_suffix(".loss.csv"))
    write_loss_curve(loss_path, curve)
    return 0


def _run(frames, params, cfg):
    return list(track_sequence(frames, params, cfg))


def cmd_track(args) -> int:
    cfg = _engine_config(args)
    frames = read_frames(args.frames)
    _check_dim(frames, cfg, args.frames)
    write_tracks(args.out, _run(frames, _load_params(args.checkpoint, cfg), cfg))
    return 0


def _emit_report(text_table: str, payload: dict, out: str | None) -> None:
    if out:
        Path(out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(json.dumps(payload, sort_keys=True))
    print(text_table)


def cmd_eval(args) -> int:
    truth = read_truth(args.truth, args.events)
    report = evaluate(read_tracks(args.tracks), truth)
    _emit_report(format_table(report), report.to_dict(), args.out)
    return 0


def cmd_stats(args) -> int:
    truth = read_truth(args.truth)
    if args.every > 1:
        truth = subsample(truth, args.every)
    print(json.dumps(continuity_stats(truth).to_dict(), sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = _engine_config(args)
    frames = read_frames(args.frames)
    truth = read_truth(args.truth, args.events)
    _check_dim(frames, cfg, args.frames)
    params = _load_params(args.checkpoint, cfg)
    rows = {name: evaluate(_run(frames, params, cfg.ablated(name)), truth) for name in ABLATIONS}
    _emit_report(format_table(rows), {k: v.to_dict() for k, v in rows.items()}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cuetrack", description="Multi-cue tracking engine.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def command(name, func, help_text, ablation_flags=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="EngineConfig JSON file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the learn and scenario seeds")
        if ablation_flags:
            p.add_argument("--no-tcp", action="store_true", help="disable confidence propagation")
            p.add_argument("--no-mga", action="store_true", help="disable parent enhancement")
            p.add_argument("--naive-fusion", action="store_true", help="sum the cues instead of fusing")
        p.set_defaults(func=func)
        return p

    p = command("simulate", cmd_simulate, "generate a synthetic scenario")
    p.add_argument("--out", required=True, help="output directory")

    p = command("train", cmd_train, "train the fusion and attention weights", ablation_flags=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint output path")
    p.add_argument("--loss-csv", help="loss curve path (default: next to the checkpoint)")

    p = command("track", cmd_track, "track a detection stream", ablation_flags=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--checkpoint", help="trained weights (seeded initialization when omitted)")
    p.add_argument("--out", required=True, help="track JSONL output path")

    p = command("eval", cmd_eval, "score tracks against ground truth")
    p.add_argument("--tracks", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--events", help="event log, needed for the recovery rate")
    p.add_argument("--out", help="also write the report JSON here")

    p = command("stats", cmd_stats, "annotation continuity statistics")
    p.add_argument("--truth", required=True)
    p.add_argument("--every", type=int, default=1, help="keep every N-th frame first")

    p = command("ablate", cmd_ablate, "evaluate the module ablation rows")
    p.add_argument("--frames", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--events")
    p.add_argument("--checkpoint")
    p.add_argument("--out", help="also write the reports JSON here")
    return parser


def _fail(err: CliError) -> int:
    payload = {"error": err.kind, "message": err.message}
    payload.update(err.extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return err.code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        return args.func(args)
    except CliError as err:
        return _fail(err)
    except FormatError as err:
        return _fail(CliError("format", err.message, EXIT_INPUT, file=err.path, line=err.line, field=err.field))
    except ConfigError as err:
        return _fail(CliError("config", str(err), EXIT_INPUT))
    except OSError as err:
        return _fail(CliError("io", f"{err.filename}: {err.strerror}", EXIT_INPUT))
    except ValueError as err:
        return _fail(CliError("input", str(err), EXIT_RUNTIME))


if __name__ == "__main__":
    sys.exit(main())
