"""``farfield`` command line: enhance, simulate, gradcheck, spectrogram.

Configs are JSON files; command-line flags override file values, which
override defaults.  Exit status is 0 on success, 1 when processing an
input fails and 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .gradcheck import GraphProbe, PipelineGraph, format_report, smoothness_sweep, sweep_failures
from .io import read_wav, save_matrix, write_wav
from .pipeline import PipelineConfig, enhance_utterance, run_report
from .simulation import SceneConfig, export_scene, load_scene, render_scene
from .stft import StftConfig, stft

log = logging.getLogger("farfield")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SPEC_EPS = 1e-10
MANIFEST_SCHEMA = "farfield.manifest/1"


class UsageError(Exception):
    """Bad flags or config; maps to exit status 2."""


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return data


def _dump_json(path: str, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _build(factory, d: dict):
    try:
        return factory(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


# ---------------------------------------------------------------- enhance

def pipeline_config(args) -> PipelineConfig:
    d = _load_json(args.config)
    if args.stages:
        d["stages"] = [s for s in args.stages.split(",") if s]
    if args.reference_channel is not None:
        d["reference"] = {"mode": "fixed", "channel": args.reference_channel}
    if args.soft_reference:
        d["reference"] = {"mode": "soft"}
    wpe = dict(d.get("wpe", {}))
    for flag, key in (("taps", "taps"), ("delay", "delay"), ("iterations", "iterations")):
        if getattr(args, flag) is not None:
            wpe[key] = getattr(args, flag)
    if wpe:
        d["wpe"] = wpe
    if args.mask_kind:
        d["mask_kind"] = args.mask_kind
    if args.skip_wpe_probability is not None:
        d["skip_wpe_probability"] = args.skip_wpe_probability
    return _build(PipelineConfig.from_dict, d)


def _read_input(path: str):
    """A WAV file, or a scene directory with its oracle components."""
    if os.path.isdir(path):
        bundle = load_scene(path)
        oracle = {"early": bundle.early, "reverberant": bundle.reverberant,
                  "noise": bundle.noise}
        return bundle.observed, oracle, {"dry": bundle.dry}
    return read_wav(path), None, None


def _utt_name(path: str) -> str:
    base = os.path.basename(os.path.normpath(path))
    return os.path.splitext(base)[0]


def cmd_enhance(args) -> int:
    cfg = pipeline_config(args)
    os.makedirs(args.out, exist_ok=True)
    records, shape, status = [], None, EXIT_OK
    for index, path in enumerate(args.inputs):
        name = _utt_name(path)
        try:
            audio, oracle, refs = _read_input(path)
            if shape is None:
                shape = (audio.sample_rate, audio.channels)
            elif (audio.sample_rate, audio.channels) != shape:
                raise ValueError(f"{path}: sample rate/channels {audio.sample_rate}/"
                                 f"{audio.channels} differ from first input {shape}")
            res = enhance_utterance(audio, cfg, name=name, index=index,
                                    oracle=oracle, references=refs)
        except (OSError, ValueError) as exc:
            log.error("%s: %s", path, exc)
            records.append({"name": name, "index": index, "error": str(exc)})
            status = EXIT_FAILURE
            continue
        outputs = {}
        final = res.enhanced if res.enhanced is not None else res.dereverberated
        if final is not None:
            outputs["enhanced"] = f"{name}.enhanced.wav"
            write_wav(os.path.join(args.out, outputs["enhanced"]), res.to_audio(final), args.wav_format)
        if args.write_taps and res.dereverberated is not None:
            outputs["dereverberated"] = f"{name}.derev.wav"
            write_wav(os.path.join(args.out, outputs["dereverberated"]),
                      res.to_audio(res.dereverberated), args.wav_format)
        if res.features is not None:
            outputs["features"] = f"{name}.features.txt"
            save_matrix(os.path.join(args.out, outputs["features"]), res.features,
                        kind="logmel_mvn", n_mels=res.features.shape[1])
        res.record["outputs"] = outputs
        records.append(res.record)
    report_path = args.report or os.path.join(args.out, "report.json")
    _dump_json(report_path, run_report(cfg, records))
    return status


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    base = _build(SceneConfig.from_dict, d)
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    os.makedirs(args.out, exist_ok=True)
    scenes = []
    for i in range(args.count):
        cfg = _build(SceneConfig.from_dict, {**base.to_dict(), "seed": base.seed + i})
        sub = f"scene_{cfg.seed:06d}"
        manifest = export_scene(render_scene(cfg), os.path.join(args.out, sub))
        digest = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
        scenes.append({"seed": cfg.seed, "dir": sub, "sha256": digest,
                       "metrics": manifest["metrics"]})
    _dump_json(os.path.join(args.out, "manifest.json"),
               {"schema": MANIFEST_SCHEMA, "version": __version__,
                "config": base.to_dict(), "count": args.count, "scenes": scenes})
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    d = _load_json(args.config)
    for key in ("pipeline", "loss", "seed", "activation"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    if args.steps:
        d["steps"] = args.steps
    probe = _build(GraphProbe.from_dict, d)
    if args.n < 0:
        raise UsageError("-n must be >= 0")
    graph = PipelineGraph(probe)
    point = None
    if args.pin is not None:
        masks = {k: np.full(graph.shape, args.pin) for k in graph.mask_names}
        point = graph.params_from_masks(masks)
    reports = smoothness_sweep(probe, args.n, graph=graph, point=point)
    text = format_report(probe, reports)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    flagged = [i for i, r in enumerate(reports) if not r.passed and r.flags]
    for i in flagged:
        log.warning("probe %d failed convergence on a flagged branch: %s", i,
                    ", ".join(reports[i].flags))
    bad = sweep_failures(reports)
    passed = sum(r.passed for r in reports)
    print(f"gradcheck: {passed}/{len(reports)} probes converge, "
          f"{len(flagged)} flagged, {len(bad)} unexplained failures", file=sys.stderr)
    return EXIT_FAILURE if bad else EXIT_OK


# ---------------------------------------------------------------- spectrogram

def log_magnitude(spec: np.ndarray) -> np.ndarray:
    """(T, B) complex STFT -> (B, T) matrix of ``log(|X| + eps)``."""
    return np.log(np.abs(spec) + SPEC_EPS).T


def cmd_spectrogram(args) -> int:
    if args.stage_taps:
        cfg = pipeline_config(args)
        audio, oracle, refs = _read_input(args.input)
        res = enhance_utterance(audio, cfg, name=_utt_name(args.input),
                                oracle=oracle, references=refs)
        os.makedirs(args.out, exist_ok=True)
        ch = cfg.reference.channel if cfg.reference.mode == "fixed" else 0
        taps = {"input": res.observed, "wpe": res.dereverberated, "mvdr": res.enhanced}
        for tap, spec in taps.items():
            if spec is None:
                continue
            spec = spec[:, :, min(ch, spec.shape[2] - 1)]
            save_matrix(os.path.join(args.out, f"{tap}.txt"), log_magnitude(spec),
                        tap=tap, rows_are="bins", hop=cfg.stft.hop,
                        sample_rate=audio.sample_rate)
        return EXIT_OK
    try:
        scfg = StftConfig(args.fft_size, args.hop)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    audio = read_wav(args.input)
    if not 0 <= args.channel < audio.channels:
        raise ValueError(f"channel {args.channel} not in input with {audio.channels} channels")
    spec = stft(audio, scfg).data[:, :, args.channel]
    save_matrix(args.out, log_magnitude(spec), tap="input", rows_are="bins",
                hop=scfg.hop, sample_rate=audio.sample_rate)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_pipeline_flags(p):
    p.add_argument("--config", help="pipeline config (JSON)")
    p.add_argument("--stages", help="comma-separated subset of wpe,mvdr,features")
    p.add_argument("--reference-channel", type=int, help="fixed 0-based reference channel")
    p.add_argument("--soft-reference", action="store_true", help="SNR-weighted reference")
    p.add_argument("--taps", type=int, help="WPE filter taps per channel")
    p.add_argument("--delay", type=int, help="WPE prediction delay in frames")
    p.add_argument("--iterations", type=int, help="iterative WPE passes")
    p.add_argument("--mask-kind", choices=("tf", "sad"))
    p.add_argument("--skip-wpe-probability", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="farfield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"farfield {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance WAV files or scene directories")
    p.add_argument("inputs", nargs="+", help="WAV files or scene directories")
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_pipeline_flags(p)
    p.add_argument("--write-taps", action="store_true",
                   help="also write the dereverberated multichannel WAV")
    p.add_argument("--wav-format", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--report", help="report path (default OUT/report.json)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("simulate", help="render seeded synthetic scenes")
    p.add_argument("--config", help="scene config (JSON)")
    p.add_argument("-n", "--count", type=int, default=1)
    p.add_argument("--seed", type=int, help="first seed (overrides the config)")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gradcheck", help="finite-difference smoothness sweep")
    p.add_argument("--config", help="probe config (JSON)")
    p.add_argument("-n", type=int, default=10, help="number of probes")
    p.add_argument("--pipeline", choices=("wpe_only", "mvdr_only", "full"))
    p.add_argument("--loss", choices=("stft_mse", "logmel_mse", "output_power"))
    p.add_argument("--seed", type=int)
    p.add_argument("--activation", choices=("sigmoid", "clipped_relu_1"))
    p.add_argument("--steps", type=float, nargs="+")
    p.add_argument("--pin", type=float, help="evaluate every probe at masks equal to this value")
    p.add_argument("-o", "--out", help="write JSON lines here instead of stdout")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("spectrogram", help="dump log-magnitude matrices")
    p.add_argument("input", help="WAV file or scene directory")
    p.add_argument("-o", "--out", required=True,
                   help="output matrix file (directory with --stage-taps)")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--fft-size", type=int, default=512)
    p.add_argument("--hop", type=int, default=128)
    p.add_argument("--stage-taps", action="store_true",
                   help="run the pipeline and dump input, post-WPE and post-MVDR")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_spectrogram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"farfield: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"farfield: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
