"""Stage composition: WPE -> MVDR -> features, with per-utterance reports.

The whole front end is described by one :class:`PipelineConfig`, which
serialises to JSON.  :func:`enhance_utterance` runs it on one multichannel
recording and returns every intermediate STFT together with a report
record, so the CLI and library callers see identical numbers.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .beamform import ReferenceSpec, mvdr_pipeline
from .dereverb import WpeConfig, wpe_iterative, wpe_oneshot
from .features import MelConfig, extract_features
from .masks import MaskProviderSpec, make_mask, tf_to_sad
from .simulation import metric_stft_mse
from .stft import AudioBuffer, StftConfig, StftTensor, istft, stft

STAGES = ("wpe", "mvdr", "features")
CONFIG_SCHEMA = "farfield.pipeline/1"
REPORT_SCHEMA = "farfield.report/1"


def _check_keys(d: dict, known: set, what: str):
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {what} fields: {sorted(unknown)}")


@dataclass
class PipelineConfig:
    """Everything needed to enhance an utterance.

    With the WPE mask left at the constant 1.0 the dereverberation stage is
    the classic iterative algorithm and ``wpe.iterations`` applies; any other
    mask provider runs the single-pass mask-driven variant.
    ``skip_wpe_probability`` drops WPE for a seeded random subset of
    utterances, for A/B comparisons.
    """

    stages: tuple = STAGES
    wpe: WpeConfig = field(default_factory=WpeConfig)
    wpe_mask: MaskProviderSpec = field(default_factory=lambda: MaskProviderSpec("constant", "derev", 1.0))
    speech_mask: MaskProviderSpec = field(default_factory=lambda: MaskProviderSpec("energy_sad", "speech"))
    noise_mask: MaskProviderSpec = field(default_factory=lambda: MaskProviderSpec("constant", "noise", 1.0))
    mask_kind: str = "tf"  # tf | sad
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    stft: StftConfig = field(default_factory=StftConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    skip_wpe_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ValueError("at least one stage is required")
        for s in stages:
            if s not in STAGES:
                raise ValueError(f"unknown stage {s!r}")
        if len(set(stages)) != len(stages) or list(stages) != sorted(stages, key=STAGES.index):
            raise ValueError(f"stages must be distinct and ordered as {STAGES}, got {stages}")
        self.stages = stages
        if self.mask_kind not in ("tf", "sad"):
            raise ValueError(f"unknown mask kind {self.mask_kind!r}")
        if not 0.0 <= self.skip_wpe_probability <= 1.0:
            raise ValueError("skip_wpe_probability must lie in [0, 1]")
        if self.mel.fft_size != self.stft.fft_size:
            raise ValueError("mel.fft_size must equal stft.fft_size")

    @property
    def iterative_wpe(self) -> bool:
        m = self.wpe_mask
        return m.provider == "constant" and m.value == 1.0

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA, "stages": list(self.stages),
                "wpe": self.wpe.to_dict(), "wpe_mask": self.wpe_mask.to_dict(),
                "speech_mask": self.speech_mask.to_dict(),
                "noise_mask": self.noise_mask.to_dict(),
                "mask_kind": self.mask_kind, "reference": self.reference.to_dict(),
                "stft": self.stft.to_dict(), "mel": self.mel.to_dict(),
                "skip_wpe_probability": self.skip_wpe_probability, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        schema = d.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ValueError(f"unsupported config schema {schema!r}")
        _check_keys(d, {"stages", "wpe", "wpe_mask", "speech_mask", "noise_mask",
                        "mask_kind", "reference", "stft", "mel",
                        "skip_wpe_probability", "seed"}, "pipeline")
        kw = {}
        try:
            if "stages" in d:
                kw["stages"] = tuple(d["stages"])
            if "wpe" in d:
                kw["wpe"] = WpeConfig(**d["wpe"])
            for name in ("wpe_mask", "speech_mask", "noise_mask"):
                if name in d:
                    kw[name] = MaskProviderSpec.from_dict(d[name])
            if "reference" in d:
                kw["reference"] = ReferenceSpec(**d["reference"])
            if "stft" in d:
                kw["stft"] = StftConfig(**d["stft"])
            if "mel" in d:
                kw["mel"] = MelConfig(**d["mel"])
            elif "stft" in d:
                kw["mel"] = MelConfig(fft_size=kw["stft"].fft_size)
        except TypeError as exc:
            raise ValueError(str(exc)) from None
        for name in ("mask_kind", "skip_wpe_probability", "seed"):
            if name in d:
                kw[name] = d[name]
        return cls(**kw)


@dataclass
class EnhanceResult:
    """Stage taps of one utterance plus its report record.

    ``observed``, ``dereverberated`` and ``enhanced`` are STFTs of shape
    (T, B, M), (T, B, M) and (T, B, 1); stages that did not run leave
    their tap as ``None``.  ``features`` is (T, n_mels) or ``None``.
    """

    observed: np.ndarray
    dereverberated: np.ndarray | None
    enhanced: np.ndarray | None
    features: np.ndarray | None
    record: dict
    length: int
    sample_rate: int
    stft_config: StftConfig

    def to_audio(self, tap: np.ndarray) -> AudioBuffer:
        return istft(StftTensor(tap, self.stft_config, self.sample_rate, self.length))


def _stage_mask(spec: MaskProviderSpec, y, oracle, kind: str):
    mask = make_mask(spec, y, oracle)
    return tf_to_sad(mask) if kind == "sad" else mask


def wpe_skipped(cfg: PipelineConfig, index: int) -> bool:
    """Whether the A/B switch drops WPE for utterance ``index``."""
    if cfg.skip_wpe_probability <= 0.0:
        return False
    rng = np.random.default_rng([cfg.seed, index, 11])
    return bool(rng.random() < cfg.skip_wpe_probability)


def enhance_utterance(audio: AudioBuffer, cfg: PipelineConfig, *, name: str = "utt",
                      index: int = 0, oracle: dict | None = None,
                      references: dict | None = None) -> EnhanceResult:
    """Run the configured stages on one multichannel recording.

    Parameters
    ----------
    audio : AudioBuffer
        (samples, M) observation.
    oracle : dict, optional
        Time-domain ``early``, ``reverberant`` and ``noise`` components
        (AudioBuffers of the same shape), needed by ``oracle_irm`` masks.
    references : dict, optional
        ``dry`` (1-channel) reference; enables the metrics section.
    """
    n_ch = audio.channels
    if cfg.reference.mode == "fixed" and "mvdr" in cfg.stages and cfg.reference.channel >= n_ch:
        raise ValueError(f"reference channel {cfg.reference.channel} needs at least "
                         f"{cfg.reference.channel + 1} channels, input has {n_ch}")
    timings = {}
    t0 = time.perf_counter()
    y = stft(audio, cfg.stft).data
    oracle_stft = None
    if oracle is not None:
        oracle_stft = {k: stft(v, cfg.stft).data for k, v in oracle.items()}
    timings["stft"] = time.perf_counter() - t0

    record = {"name": name, "index": index, "sample_rate": audio.sample_rate,
              "channels": n_ch, "samples": len(audio), "frames": int(y.shape[0]),
              "diagnostics": {}}
    diag = record["diagnostics"]
    d = None
    skip = wpe_skipped(cfg, index)
    if "wpe" in cfg.stages:
        diag["wpe_skipped"] = skip
    if "wpe" in cfg.stages and not skip:
        t0 = time.perf_counter()
        if cfg.iterative_wpe:
            d, filt = wpe_iterative(y, cfg.wpe, return_filter=True)
        else:
            mask = _stage_mask(cfg.wpe_mask, y, oracle_stft, cfg.mask_kind)
            d, filt = wpe_oneshot(y, mask, cfg.wpe, return_filter=True)
        timings["wpe"] = time.perf_counter() - t0
        diag["wpe"] = filt.report()
    elif "wpe" in cfg.stages:
        d = y

    x = None
    source = y if d is None else d
    if "mvdr" in cfg.stages:
        t0 = time.perf_counter()
        ws = _stage_mask(cfg.speech_mask, source, oracle_stft, cfg.mask_kind)
        wn = _stage_mask(cfg.noise_mask, source, oracle_stft, cfg.mask_kind)
        x, info = mvdr_pipeline(source, ws, wn, cfg.reference, return_info=True)
        timings["mvdr"] = time.perf_counter() - t0
        diag["mvdr"] = info

    feats = None
    if "features" in cfg.stages:
        t0 = time.perf_counter()
        if x is not None:
            single = x
        else:
            ch = cfg.reference.channel if cfg.reference.mode == "fixed" else 0
            single = source[:, :, min(ch, n_ch - 1)][:, :, None]
        mel = MelConfig(**{**cfg.mel.to_dict(), "sample_rate": audio.sample_rate})
        feats = extract_features(single, mel)
        timings["features"] = time.perf_counter() - t0

    record["timings"] = timings
    if references is not None and "dry" in references:
        dry = stft(references["dry"], cfg.stft).data
        metrics = {"stft_mse_observed_ch0": metric_stft_mse(y[:, :, :1], dry)}
        if d is not None and "wpe" in cfg.stages:
            metrics["stft_mse_dereverberated_ch0"] = metric_stft_mse(d[:, :, :1], dry)
        if x is not None:
            metrics["stft_mse_enhanced"] = metric_stft_mse(x, dry)
        record["metrics"] = metrics
    return EnhanceResult(y, d, x, feats, record, len(audio), audio.sample_rate,
                         cfg.stft)


def run_report(cfg: PipelineConfig, records: list) -> dict:
    """Top-level report: tool version, config echo and one record per utterance."""
    return {"schema": REPORT_SCHEMA, "tool": "farfield", "version": __version__,
            "config": cfg.to_dict(), "utterances": list(records)}
