"""Log-mel filterbank features with utterance-level mean/variance normalisation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dereverb import _as_stft

LOG_EPS = 1e-10
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float | None = None  # defaults to sample_rate / 2
    sample_rate: int = 16000
    fft_size: int = 512

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0.0 <= self.f_min < self.upper <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 <= f_min < f_max <= {self.sample_rate / 2}, got "
                f"f_min={self.f_min}, f_max={self.upper}")

    @property
    def upper(self) -> float:
        return self.sample_rate / 2 if self.f_max is None else self.f_max

    def to_dict(self) -> dict:
        return {"n_mels": self.n_mels, "f_min": self.f_min, "f_max": self.f_max,
                "sample_rate": self.sample_rate, "fft_size": self.fft_size}


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_matrix(cfg: MelConfig) -> np.ndarray:
    """Triangular mel filterbank of shape (n_mels, fft_size // 2 + 1).

    ``n_mels + 2`` edge frequencies are spaced uniformly on the mel scale
    between ``f_min`` and ``f_max``; filter ``k`` rises from edge ``k`` to
    a unit peak at edge ``k + 1`` and falls to zero at edge ``k + 2``.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.upper),
                                  cfg.n_mels + 2))
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def logmel(x, cfg: MelConfig | None = None, fbank: np.ndarray | None = None) -> np.ndarray:
    """``log(mel @ |X| + eps)`` per frame; the filterbank sees magnitudes.

    ``x`` is a single-channel STFT, (T, B) or (T, B, 1).  Returns (T, n_mels).
    """
    x = _as_stft(x)
    if x.shape[2] != 1:
        raise ValueError("logmel expects a single-channel STFT")
    if fbank is None:
        fbank = mel_matrix(cfg or MelConfig(fft_size=2 * (x.shape[1] - 1)))
    return np.log(np.abs(x[:, :, 0]) @ fbank.T + LOG_EPS)


def mvn(features: np.ndarray) -> np.ndarray:
    """Normalise each feature dimension to zero mean, unit variance over frames."""
    features = np.asarray(features, dtype=float)
    mean = features.mean(axis=0, keepdims=True)
    # constant dims: the mean can be off by an ulp, which the floor would amplify
    centered = np.where(np.ptp(features, axis=0, keepdims=True) == 0, 0.0, features - mean)
    std = np.maximum(centered.std(axis=0, keepdims=True), STD_FLOOR)
    return centered / std


def extract_features(x, cfg: MelConfig | None = None) -> np.ndarray:
    """Full feature stage: MVN of log-mel of ``|X|``."""
    return mvn(logmel(x, cfg))
