"""``kfae`` command line: synth, train, extract, eval.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import autoencoder, evaluation, imaging, keyframe
from .distances import METRICS
from .errors import KfaeError
from .imaging import atomic_write_text

log = logging.getLogger("kfae")

EPILOG = ("Defaults not fixed by the method (init, widths, token split, "
          "validation, k-means seeding, oversampling, dedup details) are listed in the README.")


def _int_at_least(lo):
    def parse(text):
        try:
            val = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if val < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {val}")
        return val
    return parse


def _float_at_least(lo):
    def parse(text):
        try:
            val = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if not val >= lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {val}")
        return val
    return parse


def _stride(text):
    val = _int_at_least(0)(text)
    if val == 1:
        raise argparse.ArgumentTypeError("stride must be 0 (no validation) or >= 2")
    return val


def _widths(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("widths must be positive")
    return vals


def _confusion(text):
    try:
        tp, fp, fn, tn = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected tp,fp,fn,tn") from None
    if min(tp, fp, fn, tn) < 0:
        raise argparse.ArgumentTypeError("counts must be non-negative")
    return evaluation.ConfusionMatrix(tp, fp, fn, tn)


def _write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def cmd_train(args) -> int:
    try:
        mcfg = autoencoder.ModelConfig(
            input_shape=(3, args.image_size, args.image_size),
            encoder_widths=args.encoder_widths, token_count=args.tokens,
            token_dim=args.token_dim, decoder_widths=args.decoder_widths)
    except ValueError as exc:
        print(f"kfae train: configuration: {exc}", file=sys.stderr)
        return 2
    tcfg = autoencoder.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                                   validation_stride=args.val_stride,
                                   early_stop_patience=args.patience, lr=args.lr)
    stage = "loading frames"
    try:
        raw = imaging.load_frame_sequence(args.frames)
        stage = "preprocessing"
        tensors = [imaging.preprocess_frame(f, args.image_size) for f in raw]
        stage = "training"
        log.info("training on %d frames", len(tensors))
        params, history = autoencoder.train(tensors, mcfg, tcfg)
        stage = "writing outputs"
        autoencoder.save_model(params, mcfg, args.out)
        history["config"] = {"model": mcfg.to_json(), "train": vars(tcfg)}
        _write_json(args.log or f"{args.out}.log.json", history)
    except (KfaeError, ValueError, OSError) as exc:
        print(f"kfae train: {stage} failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_extract(args) -> int:
    stage = "extraction"
    try:
        kset, raw = keyframe.extract_keyframes(
            args.frames, args.model, args.k, args.oversample, args.metric, args.seed,
            args.restarts)
        stage = "writing report"
        _write_json(args.out, kset.to_report(keyframe.video_name(args.frames)))
        chosen = [(i, raw[i]) for i in kset.frame_indices]
        if args.sheet:
            stage = "rendering contact sheet"
            sheet = imaging.render_contact_sheet(chosen, args.cols)
            tmp = Path(args.sheet).with_name(f".{Path(args.sheet).name}.tmp")
            sheet.save(tmp, format="PNG")
            tmp.replace(args.sheet)
        if args.save_frames:
            stage = "saving frames"
            dest = Path(args.save_frames)
            dest.mkdir(parents=True, exist_ok=True)
            for i, _ in chosen:
                for ext in ("png", "ppm"):
                    src = Path(args.frames) / f"frame_{i:06d}.{ext}"
                    if src.exists():
                        shutil.copy2(src, dest / src.name)
    except (KfaeError, ValueError, OSError) as exc:
        print(f"kfae extract: {stage} failed: {exc}", file=sys.stderr)
        return 1
    for kf in kset.survivors:
        print(f"frame {kf.frame_index:6d}  cluster {kf.cluster_id:3d}  "
              f"distance {kf.centroid_distance:.4f}")
    return 0


def cmd_eval(args) -> int:
    stage = "reading inputs"
    try:
        if args.confusion is not None:
            cm = args.confusion
        else:
            if not args.report or not args.truth:
                print("kfae eval: --report and --truth are required unless --confusion is given",
                      file=sys.stderr)
                return 2
            truth = evaluation.GroundTruth.load(args.truth)
            try:
                report = json.loads(Path(args.report).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise KfaeError(f"cannot read report {args.report}: {exc}") from exc
            frames = _report_frames(report)
            stage = "matching"
            cm = evaluation.match_intervals(frames, truth)
        result = evaluation.score_report(cm)
        if args.out:
            stage = "writing scores"
            _write_json(args.out, result)
    except (KfaeError, ValueError, OSError) as exc:
        print(f"kfae eval: {stage} failed: {exc}", file=sys.stderr)
        return 1
    c = result["confusion"]
    print(f"tp={c['tp']} fp={c['fp']} fn={c['fn']} tn={c['tn']}")
    print(evaluation.format_table(result))
    return 0


def _report_frames(report) -> list[int]:
    if not isinstance(report, dict) or not isinstance(report.get("keyframes"), list):
        raise KfaeError("keyframes: expected a list in the report")
    frames = []
    for i, kf in enumerate(report["keyframes"]):
        if not isinstance(kf, dict) or not isinstance(kf.get("frame"), int):
            raise KfaeError(f"keyframes[{i}].frame: expected an integer")
        frames.append(kf["frame"])
    return frames


def cmd_synth(args) -> int:
    spec = imaging.SceneSpec(args.scenes, args.frames_per_scene, args.seed)
    try:
        out = Path(args.out)
        imaging.generate_synthetic_sequence(spec, out, args.truth or out / "truth.json")
        _write_json(out / "manifest.json", {
            "scenes": spec.scene_count, "frames_per_scene": spec.frames_per_scene,
            "seed": spec.seed, "width": spec.width, "height": spec.height,
            "square": spec.square, "square_value": spec.square_value,
            "total_frames": spec.total_frames,
        })
    except (KfaeError, OSError) as exc:
        print(f"kfae synth: writing outputs failed: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfae", description="Keyframe extraction with an attention-pooled autoencoder.",
        epilog=EPILOG, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress lines")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("train", help="train the autoencoder on a frame directory",
                       formatter_class=fmt, epilog=EPILOG)
    p.add_argument("--frames", required=True, help="directory of frame_%%06d.png/.ppm files")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="training log JSON (default: <out>.log.json)")
    p.add_argument("--seed", type=_int_at_least(0), default=0)
    p.add_argument("--epochs", type=_int_at_least(1), default=50)
    p.add_argument("--batch-size", type=_int_at_least(1), default=32)
    p.add_argument("--lr", type=_float_at_least(0.0), default=1e-3)
    p.add_argument("--patience", type=_int_at_least(1), default=5, help="early-stop patience")
    p.add_argument("--val-stride", type=_stride, default=10,
                   help="hold out every n-th frame for validation (0 disables)")
    p.add_argument("--image-size", type=_int_at_least(1), default=64)
    p.add_argument("--encoder-widths", type=_widths, default=[2048, 1024])
    p.add_argument("--decoder-widths", type=_widths, default=[1024, 2048])
    p.add_argument("--tokens", type=_int_at_least(1), default=16)
    p.add_argument("--token-dim", type=_int_at_least(1), default=64, help="also the latent size")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="select keyframes with a trained model",
                       formatter_class=fmt, epilog=EPILOG)
    p.add_argument("--frames", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("-k", type=_int_at_least(1), required=True, help="requested keyframe count")
    p.add_argument("--oversample", type=_float_at_least(1.0), default=1.5)
    p.add_argument("--metric", choices=sorted(METRICS), default="euclidean")
    p.add_argument("--seed", type=_int_at_least(0), default=0)
    p.add_argument("--restarts", type=_int_at_least(1), default=8)
    p.add_argument("--out", required=True, help="keyframe report JSON")
    p.add_argument("--sheet", help="contact sheet PNG")
    p.add_argument("--cols", type=_int_at_least(1), default=4, help="contact sheet columns")
    p.add_argument("--save-frames", help="copy selected frames into this directory")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="score a keyframe report against truth intervals",
                       formatter_class=fmt)
    p.add_argument("--report")
    p.add_argument("--truth")
    p.add_argument("--out", help="score report JSON")
    p.add_argument("--confusion", type=_confusion, help="debug: score tp,fp,fn,tn directly")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic scene sequence", formatter_class=fmt)
    p.add_argument("--scenes", type=_int_at_least(1), required=True)
    p.add_argument("--frames-per-scene", type=_int_at_least(1), required=True)
    p.add_argument("--seed", type=_int_at_least(0), default=0)
    p.add_argument("--out", required=True, help="frame directory")
    p.add_argument("--truth", help="truth JSON (default: <out>/truth.json)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
