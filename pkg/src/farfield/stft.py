"""Multichannel STFT analysis and synthesis.

Every STFT array in this package has shape ``(frames, bins, channels)``,
i.e. ``(T, B, M)`` with ``B = fft_size // 2 + 1``.  Time-domain audio is
``(samples, channels)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

WINDOWS = ("sqrt-hann", "hann")


def _periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def analysis_window(fft_size: int, window: str) -> np.ndarray:
    if window == "sqrt-hann":
        return np.sqrt(_periodic_hann(fft_size))
    if window == "hann":
        return _periodic_hann(fft_size)
    raise ValueError(f"unknown window {window!r}, expected one of {WINDOWS}")


def synthesis_window(fft_size: int, window: str) -> np.ndarray:
    # hann analysis pairs with a rectangular synthesis window
    if window == "sqrt-hann":
        return np.sqrt(_periodic_hann(fft_size))
    if window == "hann":
        return np.ones(fft_size)
    raise ValueError(f"unknown window {window!r}, expected one of {WINDOWS}")


def validate_cola(fft_size: int, hop: int, window: str = "sqrt-hann") -> bool:
    """Check the constant-overlap-add condition of an analysis/synthesis pair.

    The product of analysis and synthesis windows, shifted by multiples of
    ``hop``, must sum to a constant (within 1e-10) at every sample.
    """
    if hop <= 0 or hop > fft_size:
        return False
    prod = analysis_window(fft_size, window) * synthesis_window(fft_size, window)
    # one period of the overlap-add sum, length `hop`
    n_frames = -(-fft_size // hop)
    padded = np.zeros(n_frames * hop)
    padded[:fft_size] = prod
    total = padded.reshape(n_frames, hop).sum(axis=0)
    return bool(np.ptp(total) <= 1e-10 * max(np.abs(total).max(), 1.0)
                and total.min() > 0)


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 128
    window: str = "sqrt-hann"
    center_pad: bool = True

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError(f"hop must be in (0, fft_size], got {self.hop}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")
        if not validate_cola(self.fft_size, self.hop, self.window):
            raise ValueError(
                f"{self.window} window with fft_size={self.fft_size}, "
                f"hop={self.hop} violates the COLA condition")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def to_dict(self) -> dict:
        return {"fft_size": self.fft_size, "hop": self.hop,
                "window": self.window, "center_pad": self.center_pad}


@dataclass
class AudioBuffer:
    """Real multichannel audio, ``samples`` has shape (n_samples, channels)."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise ValueError("samples must be 1-D or (n_samples, channels)")
        if s.shape[1] < 1:
            raise ValueError("audio needs at least one channel")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = s

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class StftTensor:
    """Complex spectrogram of shape (T, B, M) plus the config that made it."""

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = 16000
    length: int | None = None  # time-domain length, used to trim on synthesis

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3:
            raise ValueError("STFT data must have shape (T, B, M)")
        if d.shape[1] != self.config.n_bins:
            raise ValueError(
                f"expected {self.config.n_bins} bins for fft_size "
                f"{self.config.fft_size}, got {d.shape[1]}")
        self.data = d

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "StftTensor":
        return replace(self, data=data)


def _n_frames(length: int, cfg: StftConfig) -> int:
    padded = length + (cfg.fft_size if cfg.center_pad else 0)
    return 1 + -(-(padded - cfg.fft_size) // cfg.hop)


def stft(audio: AudioBuffer | np.ndarray, cfg: StftConfig | None = None,
         sample_rate: int = 16000) -> StftTensor:
    """Short-time Fourier transform of multichannel audio.

    With ``center_pad`` the signal is reflect-padded by ``fft_size // 2`` on
    both sides, so frame ``t`` is centred on sample ``t * hop``.  The tail is
    zero-padded up to a whole number of hops so every sample is covered.
    """
    cfg = cfg or StftConfig()
    if not isinstance(audio, AudioBuffer):
        audio = AudioBuffer(audio, sample_rate)
    x = audio.samples
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot transform empty audio")
    if cfg.center_pad:
        half = cfg.fft_size // 2
        mode = "reflect" if n > half else "constant"
        x = np.pad(x, ((half, half), (0, 0)), mode=mode)
    elif n < cfg.fft_size:
        raise ValueError("audio shorter than fft_size with center_pad=False")
    n_frames = _n_frames(n, cfg)
    need = (n_frames - 1) * cfg.hop + cfg.fft_size
    x = np.pad(x, ((0, need - x.shape[0]), (0, 0)))

    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * analysis_window(cfg.fft_size, cfg.window)[None, :, None]
    spec = np.fft.rfft(frames, axis=1)
    return StftTensor(spec, cfg, audio.sample_rate, length=n)


def istft(spec: StftTensor, length: int | None = None) -> AudioBuffer:
    """Inverse STFT by windowed overlap-add.

    The overlap-added signal is divided by the overlap-added product of the
    analysis and synthesis windows wherever that sum is nonzero.
    """
    cfg = spec.config
    data = np.asarray(spec.data)
    n_frames = data.shape[0]
    if n_frames == 0:
        raise ValueError("cannot invert an STFT with zero frames")
    frames = np.fft.irfft(data, n=cfg.fft_size, axis=1)
    syn = synthesis_window(cfg.fft_size, cfg.window)
    prod = analysis_window(cfg.fft_size, cfg.window) * syn
    total = (n_frames - 1) * cfg.hop + cfg.fft_size
    out = np.zeros((total, data.shape[2]))
    wsum = np.zeros(total)
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.fft_size)
        out[sl] += frames[t] * syn[:, None]
        wsum[sl] += prod
    nonzero = wsum > 1e-10
    out[nonzero] /= wsum[nonzero, None]

    if cfg.center_pad:
        out = out[cfg.fft_size // 2:]
    length = length if length is not None else spec.length
    if length is not None:
        if out.shape[0] < length:
            out = np.pad(out, ((0, length - out.shape[0]), (0, 0)))
        out = out[:length]
    return AudioBuffer(out, spec.sample_rate)
