"""Weighted prediction error (WPE) dereverberation in the STFT domain.

Two front doors share the same normal-equation solver:

* :func:`wpe_iterative` -- the classic loop, the variance of the desired
  signal is re-estimated from the previous output each round, starting
  from the observation.
* :func:`wpe_oneshot` -- a single solve where the variance comes from a
  mask applied to the observed power, so no iteration is needed.

Arrays are ``(T, B, M)``.  The stacked observation ``Ỹ`` has shape
``(T, B, M * L)`` with channel-major, tap-minor layout: element
``m * L + l`` at frame ``t`` holds ``y[t - delay - l, b, m]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitize, load_diagonal, solve_hpd


class UtteranceTooShortError(ValueError):
    """Too few frames for the requested delay and filter order."""


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 5
    delay: int = 3
    iterations: int = 3
    variance_floor: float = 1e-10  # relative to the mean observed power
    diag_load: float = 1e-6  # relative to trace(R) / (M * L)

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ValueError("taps, delay and iterations must all be >= 1")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be > 0")
        if self.diag_load < 0:
            raise ValueError("diag_load must be >= 0")

    def to_dict(self) -> dict:
        return {"taps": self.taps, "delay": self.delay,
                "iterations": self.iterations,
                "variance_floor": self.variance_floor,
                "diag_load": self.diag_load}


@dataclass
class PredictionFilter:
    """Per-bin prediction filters ``G[b]`` of shape (M * L, M)."""

    coeffs: np.ndarray  # (B, M * L, M)
    degenerate_bins: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=int))
    floored_cells: int = 0

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=(1, 2))

    def report(self) -> dict:
        return {"degenerate_bins": int(self.degenerate_bins.size),
                "floored_cells": int(self.floored_cells),
                "filter_norm_max": float(self.norms.max(initial=0.0)),
                "filter_norm_mean": float(self.norms.mean()) if self.norms.size else 0.0}


def _as_stft(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[:, :, None]
    if y.ndim != 3:
        raise ValueError("expected an STFT array of shape (T, B, M)")
    return y


def stack_delayed(y, delay: int, taps: int) -> np.ndarray:
    """Stack ``taps`` delayed copies of ``y`` starting ``delay`` frames back.

    Frames before the start of the utterance are zero.
    """
    y = _as_stft(y)
    n_frames, n_bins, n_ch = y.shape
    if n_frames <= delay:
        raise UtteranceTooShortError(
            f"{n_frames} frames cannot support a prediction delay of {delay}")
    out = np.zeros((n_frames, n_bins, n_ch, taps), dtype=np.result_type(y, np.complex128))
    for lag in range(taps):
        shift = delay + lag
        if shift >= n_frames:
            break
        out[shift:, :, :, lag] = y[:n_frames - shift]
    return out.reshape(n_frames, n_bins, n_ch * taps)


def variance_from_signal(d, floor: float) -> np.ndarray:
    """Channel-averaged power ``mean_m |d|^2`` floored at ``floor``; (T, B)."""
    d = _as_stft(d)
    power = d.real ** 2 + d.imag ** 2
    return np.maximum(power.mean(axis=-1), floor)


def check_mask(mask, name: str = "mask") -> np.ndarray:
    mask = np.asarray(mask, dtype=float)
    if mask.size and (np.isnan(mask).any() or mask.min() < 0.0 or mask.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return mask


def variance_from_mask(mask, y, floor: float) -> np.ndarray:
    """Variance of the desired signal from a mask on the observed power.

    The desired power per channel is ``mask * |y|^2``; it is averaged over
    channels and floored.  ``mask`` broadcasts against ``y`` so a
    time-only mask of shape (T, 1, M) works unchanged.
    """
    y = _as_stft(y)
    mask = check_mask(mask)
    if mask.ndim == 2:
        mask = mask[:, :, None]
    power = mask * (y.real ** 2 + y.imag ** 2)
    return np.maximum(power.mean(axis=-1), floor)


def wpe_normal_equations(y_tilde, y, lam, diag_load: float = 1e-6) -> PredictionFilter:
    """Solve the variance-weighted normal equations bin by bin.

    ``R[b] = sum_t ỹ ỹ^H / λ`` and ``P[b] = sum_t ỹ y^H / λ``; the filter
    solves ``(R + diag_load * tr(R) / (M L) I) G = P`` with a Cholesky
    solve.  Bins where that fails fall back to ``G = 0``.
    """
    y = _as_stft(y)
    lam = np.asarray(lam, dtype=float)
    weighted = y_tilde / lam[..., None]
    R = hermitize(np.einsum("tbk,tbl->bkl", weighted, y_tilde.conj()))
    P = np.einsum("tbk,tbm->bkm", weighted, y.conj())
    G, failed = solve_hpd(load_diagonal(R, diag_load), P)
    return PredictionFilter(G, np.flatnonzero(failed))


def apply_prediction_filter(y, G, delay: int, taps: int) -> np.ndarray:
    """``d = y - G^H ỹ`` for every frame and bin; shape preserved."""
    y = _as_stft(y)
    coeffs = G.coeffs if isinstance(G, PredictionFilter) else np.asarray(G)
    if coeffs.shape[0] != y.shape[1]:
        raise ValueError("filter and STFT bin counts differ")
    y_tilde = stack_delayed(y, delay, taps)
    return y - np.einsum("bkm,tbk->tbm", coeffs.conj(), y_tilde)


def _check_length(y, cfg: WpeConfig):
    if y.shape[0] <= cfg.delay + cfg.taps:
        raise UtteranceTooShortError(
            f"{y.shape[0]} frames; need more than delay + taps = "
            f"{cfg.delay + cfg.taps}")


def _abs_floor(y, cfg: WpeConfig) -> float:
    mean_power = float(np.mean(y.real ** 2 + y.imag ** 2))
    return cfg.variance_floor * mean_power if mean_power > 0 else cfg.variance_floor


def wpe_iterative(y, cfg: WpeConfig | None = None, return_filter: bool = False):
    """Iterative WPE; the first variance estimate uses ``y`` itself.

    Parameters
    ----------
    y : array (T, B, M)
        Observed multichannel STFT.
    cfg : WpeConfig
    return_filter : bool
        Also return the :class:`PredictionFilter` of the final iteration.
    """
    cfg = cfg or WpeConfig()
    y = _as_stft(y)
    _check_length(y, cfg)
    floor = _abs_floor(y, cfg)
    y_tilde = stack_delayed(y, cfg.delay, cfg.taps)
    d = y
    for _ in range(cfg.iterations):
        lam = variance_from_signal(d, floor)
        filt = wpe_normal_equations(y_tilde, y, lam, cfg.diag_load)
        filt.floored_cells = int(np.count_nonzero(lam <= floor))
        d = apply_prediction_filter(y, filt, cfg.delay, cfg.taps)
    return (d, filt) if return_filter else d


def wpe_oneshot(y, mask, cfg: WpeConfig | None = None, return_filter: bool = False):
    """Single-pass WPE driven by a desired-signal mask in [0, 1].

    ``mask`` is (T, B, M), or (T, 1, M) for a time-only mask.
    """
    cfg = cfg or WpeConfig()
    y = _as_stft(y)
    _check_length(y, cfg)
    floor = _abs_floor(y, cfg)
    lam = variance_from_mask(mask, y, floor)
    filt = wpe_normal_equations(stack_delayed(y, cfg.delay, cfg.taps), y, lam,
                                cfg.diag_load)
    filt.floored_cells = int(np.count_nonzero(lam <= floor))
    d = apply_prediction_filter(y, filt, cfg.delay, cfg.taps)
    return (d, filt) if return_filter else d
