"""``liplab`` command line: synth, audspec, train, predict, eval.

Exit status is 0 on success, 1 on a data or runtime failure and 2 on a usage
error. Results go to stdout, progress and diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datapipe
from .audspec import (
    AUD_RATE,
    AudSpec,
    AudSpecParams,
    FormatError,
    aud2wav,
    decompress,
    read_auds,
    read_wav,
    resample,
    wav2aud,
    write_auds,
    write_wav,
)
from .metrics import MetricReport, corr2d
from .nets import AutoencoderModel, LipReaderModel, NetConfig, load_model, save_model
from .tensorcore import CheckpointError
from .training import (
    TrainConfig,
    check_compatible,
    decode_prediction,
    load_train_config,
    train_autoencoder,
    train_lipreader,
)

log = logging.getLogger("liplab")


class DataError(Exception):
    """A runtime failure caused by inputs; reported with exit status 1."""


def _existing_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"input file not found: {path}")
    return p


def _existing_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"directory not found: {path}")
    return p


def _output_path(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise DataError(f"output directory does not exist: {parent}")
    return p


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> None:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise DataError(f"{out} exists and is not a directory")
    manifest = datapipe.build_dataset(args.count, args.seed, out, args.duration)
    log.info("wrote %d samples to %s", len(manifest), out)
    _emit({"count": len(manifest), "manifest": str(out / "manifest.json")})


# ---------------------------------------------------------------- audspec


def _params(args) -> AudSpecParams:
    try:
        return AudSpecParams(frm_len=args.frmlen, tc=args.tc, fac=args.fac, shft=args.shft)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def cmd_audspec(args) -> None:
    src = _existing_file(args.input)
    dst = _output_path(args.output)
    if args.action == "encode":
        params = _params(args)
        w = read_wav(src)
        if w.sample_rate != AUD_RATE:
            w = resample(w, AUD_RATE)
        s = wav2aud(w, params)
        write_auds(dst, s)
        _emit({"frames": s.n_frames, "channels": s.frames.shape[1], "output": str(dst)})
    else:
        s = read_auds(src)
        w = aud2wav(s, iters=args.iters, seed=args.seed)
        write_wav(dst, w)
        score = corr2d(wav2aud(w, s.params).frames, s.frames)
        log.info("round-trip corr2d %.4f", score)
        _emit({"samples": len(w), "sample_rate": w.sample_rate, "corr2d": round(score, 6), "output": str(dst)})


# ------------------------------------------------------------------ train


def _config(path) -> tuple[TrainConfig, dict]:
    try:
        return load_train_config(path)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"invalid training config {path}: {exc}") from exc


def _net_config(base: NetConfig, overrides: dict) -> NetConfig:
    try:
        return NetConfig.from_dict({**base.to_dict(), **overrides})
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid net config: {exc}") from exc


def _split(entries: list[dict], name: str) -> list[dict]:
    return [e for e in entries if e["split"] == name]


def _spectrogram_frames(data: Path, entries: list[dict]) -> np.ndarray:
    if not entries:
        return np.zeros((0, 128))
    return np.concatenate([datapipe.audio_features(read_wav(data / e["wav"])) for e in entries])


def _history_path(out: Path) -> Path:
    return out.with_name(out.name + ".history.csv")


def _load(path, kind: type):
    try:
        model = load_model(path)
    except (OSError, KeyError, ValueError, CheckpointError) as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(model, kind):
        raise DataError(f"{path} holds a {model.kind}, expected a {kind.kind}")
    return model


def cmd_train(args) -> None:
    data = _existing_dir(args.data)
    cfg, net_over = _config(_existing_file(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _output_path(args.out)
    entries = datapipe.load_manifest(data)
    train, val = _split(entries, "train"), _split(entries, "val")
    if not train:
        raise DataError(f"{data} has no training samples")
    if args.model == "ae":
        net = _net_config(NetConfig(), net_over)
        run = train_autoencoder(_spectrogram_frames(data, train), _spectrogram_frames(data, val), cfg, net)
    else:
        if args.ae is None:
            raise DataError("train lip needs --ae")
        ae = _load(_existing_file(args.ae), AutoencoderModel)
        net = _net_config(replace(ae.cfg, h=128, w=128), net_over)
        try:
            check_compatible(net, ae)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        if net.h != net.w:
            raise DataError(f"frames are resized to squares; got h={net.h}, w={net.w}")

        def samples(items):
            return [
                datapipe.make_paired_sample(*datapipe.load_entry(data, e), ae, size=net.h, sample_id=e["id"])
                for e in items
            ]

        run = train_lipreader(samples(train), samples(val), ae, cfg, net)
    save_model(out, run.model)
    run.write_history(_history_path(out))
    last = run.history[-1]
    _emit(
        {
            "val_loss": last.val_loss,
            "best_val_loss": run.best_val,
            "best_epoch": run.best_epoch,
            "epochs": len(run.history),
            "checkpoint": str(out),
            "history": str(_history_path(out)),
        }
    )


# ---------------------------------------------------------------- predict


def predict_spectrogram(frames: datapipe.FrameSequence, lip: LipReaderModel, ae: AutoencoderModel) -> np.ndarray:
    """Compressed spectrogram ``(K * la, 128)`` predicted from a clip."""
    check_compatible(lip.cfg, ae)
    if lip.cfg.h != lip.cfg.w:
        raise ValueError(f"lip reader must use square frames, got {lip.cfg.h}x{lip.cfg.w}")
    video = datapipe.derivatives(datapipe.preprocess(frames, lip.cfg.h))
    k = video.shape[3] // lip.cfg.lv
    if k == 0:
        raise ValueError(f"clip has {video.shape[3]} frames, fewer than one slice of {lip.cfg.lv}")
    slices = np.stack(datapipe.slice_video(video, lip.cfg.lv, k))
    return np.maximum(decode_prediction(lip, ae, slices), 0.0)


def cmd_predict(args) -> None:
    src = _existing_file(args.frames)
    lip = _load(_existing_file(args.lip), LipReaderModel)
    ae = _load(_existing_file(args.ae), AutoencoderModel)
    out = _output_path(args.out)
    spec_out = _output_path(args.spec_out) if args.spec_out else None
    frames = datapipe.read_vfrm(src)
    try:
        spec = predict_spectrogram(frames, lip, ae)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    s = decompress(AudSpec(spec))
    if spec_out is not None:
        write_auds(spec_out, s)
    w = aud2wav(s, iters=args.iters, seed=args.seed)
    write_wav(out, w)
    _emit({"frames": s.n_frames, "samples": len(w), "sample_rate": w.sample_rate, "output": str(out)})


# ------------------------------------------------------------------- eval


def _spectrograms(directory: Path) -> dict[str, np.ndarray]:
    out = {}
    for path in sorted(directory.iterdir()):
        if path.suffix == ".wav":
            w = read_wav(path)
            out[path.stem] = wav2aud(w if w.sample_rate == AUD_RATE else resample(w, AUD_RATE)).frames
        elif path.suffix == ".auds":
            out[path.stem] = read_auds(path).frames
    return out


def cmd_eval(args) -> None:
    ref_dir, test_dir = _existing_dir(args.ref), _existing_dir(args.test)
    out = _output_path(args.out)
    ref, test = _spectrograms(ref_dir), _spectrograms(test_dir)
    missing_test = sorted(set(ref) - set(test))
    missing_ref = sorted(set(test) - set(ref))
    if missing_test or missing_ref or not ref:
        raise DataError(
            f"id mismatch: missing from test {missing_test}, missing from ref {missing_ref}"
            if ref or test
            else "no .wav or .auds files to compare"
        )
    report = MetricReport(config={"ref": str(ref_dir), "test": str(test_dir)})
    for sid in sorted(ref):
        a, b = ref[sid], test[sid]
        n = min(len(a), len(b))
        if n != max(len(a), len(b)):
            log.warning("%s: %d vs %d frames, comparing the first %d", sid, len(a), len(b), n)
        try:
            report.add(sid, a[:n], b[:n])
        except ValueError as exc:
            raise DataError(f"{sid}: {exc}") from exc
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit({"mean": report.mean, "report": str(out)})


# ----------------------------------------------------------------- parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liplab", description="Lip video to speech via auditory bottleneck features.")
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic paired corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=3.0)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("audspec", help="WAV <-> auditory spectrogram")
    a.add_argument("action", choices=("encode", "decode"))
    a.add_argument("input")
    a.add_argument("output")
    a.add_argument("--frmlen", type=float, default=10.0)
    a.add_argument("--tc", type=float, default=10.0)
    a.add_argument("--fac", type=int, default=-2)
    a.add_argument("--shft", type=int, default=-1)
    a.add_argument("--iters", type=_positive_int, default=50)
    a.add_argument("--seed", type=int, default=7)
    a.set_defaults(func=cmd_audspec)

    t = sub.add_parser("train", help="train the autoencoder or the lip reader")
    t.add_argument("model", choices=("ae", "lip"))
    t.add_argument("--data", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--ae", help="trained autoencoder checkpoint (lip only)")
    t.add_argument("--seed", type=int, help="override the seed in the config file")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="speech from a frame file")
    r.add_argument("--frames", required=True)
    r.add_argument("--lip", required=True)
    r.add_argument("--ae", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--spec-out", help="also write the predicted spectrogram as AUDS")
    r.add_argument("--iters", type=_positive_int, default=50)
    r.add_argument("--seed", type=int, default=7)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="compare matching recordings of two directories")
    e.add_argument("--ref", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)
    return p


def _thread_limit():
    value = os.environ.get("LIPLAB_THREADS")
    if not value:
        return nullcontext()
    try:
        n = int(value)
    except ValueError:
        n = 0
    if n < 1:
        raise DataError(f"LIPLAB_THREADS must be a positive integer, got {value!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and args.model == "lip" and args.ae is None:
        parser.error("train lip requires --ae")
    if args.command == "synth" and args.duration <= 0:
        parser.error("--duration must be positive")
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO, format="liplab: %(message)s", force=True)
    try:
        with _thread_limit():
            args.func(args)
    except (DataError, FormatError, CheckpointError, FileNotFoundError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"liplab: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
