"""Synthetic reverberant, noisy multichannel scenes and enhancement metrics.

Room responses are exponentially decaying Gaussian noise after a unit
direct path; the source is speech-like bursts of voiced, formant-filtered
excitation separated by silent pauses.  Everything is driven by one seed.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import butter, convolve, fftconvolve, lfilter, sosfilt

from .stft import AudioBuffer, StftConfig

SEGSNR_RANGE = (-10.0, 35.0)
DRR_CAP_DB = 60.0


@dataclass(frozen=True)
class RirConfig:
    t60_like_decay: float = 0.5  # seconds; power envelope exp(-6.9 t / t60)
    direct_delay_spread: int = 8  # max extra direct-path delay, samples
    tail_density: float = 1.0  # fraction of nonzero tail taps
    drr_db: float = 0.0  # direct-path to tail energy ratio
    length: float | None = None  # seconds; default 2 * t60

    def __post_init__(self):
        if self.t60_like_decay < 0:
            raise ValueError("t60_like_decay must be >= 0")
        if not 0 < self.tail_density <= 1:
            raise ValueError("tail_density must lie in (0, 1]")
        if self.direct_delay_spread < 0:
            raise ValueError("direct_delay_spread must be >= 0")


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "white"  # "white" or "diffuse_lowpass"
    snr_db: float | None = 20.0  # None disables noise
    coherence: float = 0.5  # diffuse_lowpass: weight of the shared component
    cutoff_hz: float = 2000.0

    def __post_init__(self):
        if self.kind not in ("white", "diffuse_lowpass"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite, or None for no noise")


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    channels: int = 2
    duration: float = 3.0
    sample_rate: int = 16000
    rir: RirConfig = field(default_factory=RirConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    source: str = "synthetic_speechlike"  # or a WAV path
    early_ms: float = 0.0  # span of the early image after the direct path (0: direct only)
    frame_hop: int = 128  # activity label granularity, samples

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        rir = RirConfig(**d.pop("rir", {}))
        noise = NoiseConfig(**d.pop("noise", {}))
        return cls(rir=rir, noise=noise, **d)


@dataclass
class SceneBundle:
    config: SceneConfig
    dry: AudioBuffer  # 1 channel
    rirs: np.ndarray  # (rir_length, M)
    early: AudioBuffer  # dry convolved with the first `early_ms` of each RIR
    reverberant: AudioBuffer
    noise: AudioBuffer
    observed: AudioBuffer
    activity: np.ndarray  # bool per `frame_hop` block of the dry signal

    @property
    def sample_rate(self) -> int:
        return self.config.sample_rate

    def active_samples(self) -> np.ndarray:
        hop = self.config.frame_hop
        return np.repeat(self.activity, hop)[:len(self.dry)]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def synth_rir(cfg: SceneConfig) -> np.ndarray:
    """Per-channel room impulse responses, shape (length, M).

    Each channel has a unit direct path delayed by up to
    ``direct_delay_spread`` samples, followed by Gaussian taps under the
    power envelope ``exp(-6.9 t / t60)``.  The tail is scaled so the
    expected direct-to-tail energy ratio equals ``drr_db``.  ``t60 = 0``
    gives a pure delayed impulse.
    """
    rc, fs, n_ch = cfg.rir, cfg.sample_rate, cfg.channels
    rng = _rng(cfg.seed, 1)
    delays = rng.integers(0, rc.direct_delay_spread + 1, size=n_ch)
    if rc.t60_like_decay == 0:
        h = np.zeros((int(delays.max()) + 1, n_ch))
        h[delays, np.arange(n_ch)] = 1.0
        return h
    length = rc.length if rc.length is not None else 2.0 * rc.t60_like_decay
    n_tail = max(int(round(length * fs)), 1)
    h = np.zeros((rc.direct_delay_spread + 1 + n_tail, n_ch))
    t = np.arange(1, n_tail + 1) / fs
    envelope = np.exp(-6.9 * t / rc.t60_like_decay)  # power
    tail_energy = 10.0 ** (-rc.drr_db / 10.0)
    gain = np.sqrt(tail_energy / envelope.sum())
    for m in range(n_ch):
        taps = rng.standard_normal(n_tail)
        if rc.tail_density < 1.0:
            taps *= (rng.random(n_tail) < rc.tail_density) / np.sqrt(rc.tail_density)
        d = delays[m]
        h[d, m] = 1.0
        h[d + 1:d + 1 + n_tail, m] = gain * np.sqrt(envelope) * taps
    return h


def speechlike_source(cfg: SceneConfig) -> np.ndarray:
    """Voiced bursts with formant colouring and syllabic modulation, and
    silent pauses.  The first 0.2 s is silent."""
    fs = cfg.sample_rate
    n = int(round(cfg.duration * fs))
    rng = _rng(cfg.seed, 0)
    out = np.zeros(n)
    pos = int(0.2 * fs)
    while pos < n:
        dur = int(rng.uniform(0.25, 0.6) * fs)
        seg = min(dur, n - pos)
        if seg <= int(0.02 * fs):
            break
        tt = np.arange(seg) / fs
        f0 = rng.uniform(100.0, 220.0) * (1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(1, 3) * tt))
        phase = 2 * np.pi * np.cumsum(f0) / fs
        excitation = np.zeros(seg)
        for k in range(1, 30):
            excitation += np.cos(k * phase) / k
        excitation += 0.3 * rng.standard_normal(seg)
        voiced = np.zeros(seg)
        for _ in range(3):
            fc = rng.uniform(300.0, 3500.0)
            r = np.exp(-np.pi * rng.uniform(80.0, 200.0) / fs)
            a = [1.0, -2 * r * np.cos(2 * np.pi * fc / fs), r * r]
            voiced += lfilter([1.0 - r], a, excitation)
        voiced /= np.sqrt(np.mean(voiced ** 2))
        syllables = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * tt) ** 2
        envelope = np.sin(np.pi * np.arange(seg) / seg) ** 0.5
        gain = 10.0 ** (rng.uniform(-3.0, 3.0) / 20.0)
        out[pos:pos + seg] = gain * voiced * syllables * envelope
        pos += seg + int(rng.uniform(0.1, 0.35) * fs)
    peak = np.abs(out).max()
    return out / peak * 0.5 if peak > 0 else out


def _activity(dry: np.ndarray, hop: int) -> np.ndarray:
    n_blocks = -(-len(dry) // hop)
    padded = np.zeros(n_blocks * hop)
    padded[:len(dry)] = dry
    energy = (padded.reshape(n_blocks, hop) ** 2).sum(axis=1)
    if energy.max() <= 0:
        return np.zeros(n_blocks, dtype=bool)
    return energy > energy.max() * 1e-4


def _noise(cfg: SceneConfig, n: int) -> np.ndarray:
    nc, n_ch = cfg.noise, cfg.channels
    rng = _rng(cfg.seed, 2)
    if nc.kind == "white":
        return rng.standard_normal((n, n_ch))
    # lowpass noise with a shared component arriving with per-channel delays
    max_lag = 16
    shared = rng.standard_normal(n + max_lag)
    lags = rng.integers(0, max_lag + 1, size=n_ch)
    indep = rng.standard_normal((n, n_ch))
    a = nc.coherence
    mix = np.stack([shared[lags[m]:lags[m] + n] for m in range(n_ch)], axis=1)
    mix = a * mix + np.sqrt(1.0 - a * a) * indep
    sos = butter(4, nc.cutoff_hz, fs=cfg.sample_rate, output="sos")
    return sosfilt(sos, mix, axis=0)


def _convolve(x: np.ndarray, rirs: np.ndarray) -> np.ndarray:
    # direct summation for short (anechoic) responses keeps them exact
    method = "direct" if rirs.shape[0] <= 64 else "fft"
    return np.stack([convolve(x, rirs[:, m], method=method)
                     for m in range(rirs.shape[1])], axis=1)


def render_scene(cfg: SceneConfig) -> SceneBundle:
    """Convolve the source with each RIR and add noise at the target SNR.

    Noise is scaled per channel so the reverberant-speech to noise energy
    ratio over the dry signal's active samples equals ``snr_db``.
    """
    fs = cfg.sample_rate
    if cfg.source == "synthetic_speechlike":
        dry = speechlike_source(cfg)
    else:
        from .io import read_wav
        try:
            audio = read_wav(cfg.source)
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot read source {cfg.source!r}: {exc}") from exc
        dry = audio.samples[:, 0]
        fs = audio.sample_rate
        if fs != cfg.sample_rate:
            raise ValueError(f"source sample rate {fs} != {cfg.sample_rate}")
    n = len(dry)
    rirs = synth_rir(cfg)
    n_early = int(round(cfg.early_ms * 1e-3 * fs))
    first = np.argmax(rirs != 0, axis=0)
    early_rirs = np.zeros_like(rirs)
    for m in range(cfg.channels):
        stop = first[m] + n_early + 1
        early_rirs[:stop, m] = rirs[:stop, m]
    reverberant = _convolve(dry, rirs)[:n]
    early = _convolve(dry, early_rirs)[:n]
    activity = _activity(dry, cfg.frame_hop)
    active = np.repeat(activity, cfg.frame_hop)[:n]

    if cfg.noise.snr_db is None:
        noise = np.zeros((n, cfg.channels))
    else:
        noise = _noise(cfg, n)
        p_speech = (reverberant[active] ** 2).sum(axis=0)
        p_noise = (noise[active] ** 2).sum(axis=0)
        noise *= np.sqrt(p_speech / p_noise / 10.0 ** (cfg.noise.snr_db / 10.0))
    observed = reverberant + noise
    return SceneBundle(cfg, AudioBuffer(dry, fs), rirs, AudioBuffer(early, fs),
                       AudioBuffer(reverberant, fs), AudioBuffer(noise, fs),
                       AudioBuffer(observed, fs), activity)


def measured_snr_db(bundle: SceneBundle) -> np.ndarray:
    active = bundle.active_samples()
    s = (bundle.reverberant.samples[active] ** 2).sum(axis=0)
    v = (bundle.noise.samples[active] ** 2).sum(axis=0)
    return 10.0 * np.log10(s / v)


def late_energy_fraction(rirs: np.ndarray, samples: int) -> np.ndarray:
    """Per-channel share of RIR energy arriving more than ``samples`` after
    the direct path."""
    first = np.argmax(rirs != 0, axis=0)
    out = []
    for m in range(rirs.shape[1]):
        h = rirs[:, m]
        out.append((h[first[m] + samples + 1:] ** 2).sum() / (h ** 2).sum())
    return np.array(out)


def stft_frame_labels(bundle: SceneBundle, cfg: StftConfig | None = None) -> np.ndarray:
    """Activity labels resampled onto the STFT frame grid of ``cfg``.

    Frame ``t`` is centred on sample ``t * hop``; it is labelled active when
    the label block containing that sample is active.
    """
    cfg = cfg or StftConfig()
    n = len(bundle.dry)
    n_frames = 1 + -(-n // cfg.hop) if cfg.center_pad else 1 + (n - cfg.fft_size) // cfg.hop
    centers = np.arange(n_frames) * cfg.hop + (0 if cfg.center_pad else cfg.fft_size // 2)
    blocks = np.minimum(centers, n - 1) // bundle.config.frame_hop
    return bundle.activity[np.minimum(blocks, len(bundle.activity) - 1)]


# metrics ---------------------------------------------------------------------

def metric_stft_mse(estimate, reference) -> float:
    """Mean squared difference of magnitude spectrograms.

    A single-channel ``reference`` is broadcast over the estimate's channels.
    """
    est = np.abs(np.asarray(estimate))
    ref = np.abs(np.asarray(reference))
    if est.ndim == 2:
        est = est[:, :, None]
    if ref.ndim == 2:
        ref = ref[:, :, None]
    if est.shape[:2] != ref.shape[:2] or ref.shape[2] not in (1, est.shape[2]):
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    return float(np.mean((est - ref) ** 2))


def align_to(signal: np.ndarray, dry: np.ndarray, max_lag: int,
             min_corr: float = 0.05) -> tuple[np.ndarray, int]:
    """Shift ``dry`` by the lag (0..max_lag) maximising its correlation with
    ``signal``.  Raises if the normalised correlation peak is below
    ``min_corr``."""
    n = min(len(signal), len(dry))
    signal, dry = signal[:n], dry[:n]
    xc = fftconvolve(signal, dry[::-1], mode="full")[n - 1:n + max_lag]
    lag = int(np.argmax(np.abs(xc)))
    denom = np.sqrt((signal ** 2).sum() * (dry ** 2).sum())
    if denom == 0 or abs(xc[lag]) / denom < min_corr:
        raise ValueError("alignment failed: correlation peak below threshold")
    shifted = np.zeros(n)
    shifted[lag:] = dry[:n - lag]
    return shifted, lag


def drr_db(signal: np.ndarray, dry: np.ndarray, max_lag: int) -> float:
    """Energy of the best scaled, delayed copy of ``dry`` in ``signal``
    over the energy of what remains, in dB, capped at 60 dB."""
    ref, _ = align_to(signal, dry, max_lag)
    n = len(ref)
    signal = signal[:n]
    alpha = np.dot(signal, ref) / np.dot(ref, ref)
    coherent = alpha * ref
    resid = ((signal - coherent) ** 2).sum()
    coh = (coherent ** 2).sum()
    if resid <= coh * 10.0 ** (-DRR_CAP_DB / 10.0):
        return DRR_CAP_DB
    return float(10.0 * np.log10(coh / resid))


def metric_drr_gain(enhanced: AudioBuffer, observed: AudioBuffer, dry: AudioBuffer,
                    channel: int = 0, max_lag: int | None = None) -> float:
    """DRR of ``enhanced`` minus DRR of ``observed`` (both at ``channel``), dB.

    The enhanced DRR is capped at +60 dB before the difference is taken.
    """
    max_lag = max_lag if max_lag is not None else int(0.05 * dry.sample_rate)
    d = dry.samples[:, 0]
    e = enhanced.samples[:, min(channel, enhanced.channels - 1)]
    o = observed.samples[:, channel]
    return drr_db(e, d, max_lag) - drr_db(o, d, max_lag)


def metric_segsnr(enhanced: np.ndarray, clean: np.ndarray, frame_len: int = 256,
                  active_db: float = -40.0) -> float:
    """Segmental SNR over frames whose clean energy is within ``active_db``
    of the loudest frame; per-frame values clamped to [-10, 35] dB."""
    n = min(len(enhanced), len(clean))
    n_frames = n // frame_len
    if n_frames == 0:
        raise ValueError("signal shorter than one frame")
    e = np.asarray(enhanced[:n_frames * frame_len], float).reshape(n_frames, frame_len)
    c = np.asarray(clean[:n_frames * frame_len], float).reshape(n_frames, frame_len)
    sig = (c ** 2).sum(axis=1)
    err = ((e - c) ** 2).sum(axis=1)
    active = sig > sig.max() * 10.0 ** (active_db / 10.0)
    lo, hi = SEGSNR_RANGE
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(sig[active] / err[active])
    snr = np.clip(np.nan_to_num(snr, posinf=hi, neginf=lo), lo, hi)
    return float(snr.mean())


# export ----------------------------------------------------------------------

def export_scene(bundle: SceneBundle, directory: str | os.PathLike,
                 metrics: dict | None = None) -> dict:
    """Write a scene as float32 WAVs plus ``scene.json``; returns the manifest."""
    from .io import write_wav

    os.makedirs(directory, exist_ok=True)
    fs = bundle.sample_rate
    files = {"dry": bundle.dry, "early": bundle.early,
             "reverberant": bundle.reverberant, "noise": bundle.noise,
             "observed": bundle.observed, "rirs": AudioBuffer(bundle.rirs, fs)}
    for name, audio in files.items():
        write_wav(os.path.join(directory, f"{name}.wav"), audio)
    manifest = {"schema": "farfield.scene/1",
                "config": bundle.config.to_dict(),
                "files": {k: f"{k}.wav" for k in files},
                "activity": bundle.activity.astype(int).tolist(),
                "metrics": {"snr_db": [round(float(v), 6) for v in measured_snr_db(bundle)]
                            if bundle.config.noise.snr_db is not None else None,
                            **(metrics or {})}}
    with open(os.path.join(directory, "scene.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def load_scene(directory: str | os.PathLike) -> SceneBundle:
    from .io import read_wav

    with open(os.path.join(directory, "scene.json")) as fh:
        manifest = json.load(fh)
    cfg = SceneConfig.from_dict(manifest["config"])
    audio = {k: read_wav(os.path.join(directory, v)) for k, v in manifest["files"].items()}
    return SceneBundle(cfg, audio["dry"], audio["rirs"].samples, audio["early"],
                       audio["reverberant"], audio["noise"], audio["observed"],
                       np.array(manifest["activity"], dtype=bool))
