"""Mask-based MVDR beamforming with a reference-channel formulation.

The filter per bin is ``f = (Φ_N^{-1} Φ_S) u / tr(Φ_N^{-1} Φ_S)``, where the
PSD matrices come from mask-weighted outer products of the (dereverberated)
multichannel STFT and ``u`` weights the reference microphone(s).  No
steering vector is estimated.

Shapes: STFT ``(T, B, M)``; channel-averaged masks ``(T, B)`` or ``(T, 1)``;
PSD matrices ``(B, M, M)``; filters ``(B, M)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dereverb import _as_stft, check_mask
from .linalg import hermitize, load_diagonal, solve_hpd

TRACE_FLOOR = 1e-10


@dataclass(frozen=True)
class ReferenceSpec:
    """Reference microphone choice: ``mode`` is ``"fixed"`` or ``"soft"``."""

    mode: str = "fixed"
    channel: int = 0
    eps: float = 1e-10  # soft mode: relative floor on noise power

    def __post_init__(self):
        if self.mode not in ("fixed", "soft"):
            raise ValueError(f"unknown reference mode {self.mode!r}")
        if self.mode == "fixed" and self.channel < 0:
            raise ValueError("reference channel must be >= 0")

    def to_dict(self) -> dict:
        d = {"mode": self.mode}
        if self.mode == "fixed":
            d["channel"] = self.channel
        return d


def average_masks(mask) -> np.ndarray:
    """Mean over the trailing channel axis: (T, B, M) -> (T, B)."""
    mask = check_mask(mask)
    return mask.mean(axis=-1)


def estimate_psd(d, mask, normalize: bool = False) -> np.ndarray:
    """Mask-weighted spatial covariance ``sum_t w(t,b) d d^H`` per bin.

    ``mask`` is channel-independent, shape (T, B) or (T, 1).  With
    ``normalize`` the sum is divided by ``sum_t w`` (floored at 1e-10).
    """
    d = _as_stft(d)
    w = check_mask(mask)
    if w.ndim == 3:
        raise ValueError("estimate_psd needs a channel-averaged mask")
    w = np.broadcast_to(w, d.shape[:2])
    psd = hermitize(np.einsum("tb,tbm,tbn->bmn", w, d, d.conj()))
    if normalize:
        psd = psd / np.maximum(w.sum(axis=0), 1e-10)[:, None, None]
    return psd


def select_reference(ref: ReferenceSpec, psd_speech: np.ndarray,
                     psd_noise: np.ndarray) -> np.ndarray:
    """Resolve a reference spec to channel weights ``u`` summing to one.

    Soft mode weights each channel by its posterior SNR accumulated over
    bins, ``sum_b Φ_S[m,m] / (sum_b Φ_N[m,m] + eps)``.  This stands in for a
    learned attention mechanism and has the same interface.
    """
    n_ch = psd_speech.shape[-1]
    if ref.mode == "fixed":
        if ref.channel >= n_ch:
            raise ValueError(
                f"reference channel {ref.channel} not available with {n_ch} channels")
        u = np.zeros(n_ch)
        u[ref.channel] = 1.0
        return u
    speech = np.real(np.diagonal(psd_speech, axis1=-2, axis2=-1)).sum(axis=0)
    noise = np.real(np.diagonal(psd_noise, axis1=-2, axis2=-1)).sum(axis=0)
    eps = ref.eps * max(noise.mean(), np.finfo(float).tiny)
    snr = np.maximum(speech, 0.0) / (np.maximum(noise, 0.0) + eps)
    if not np.isfinite(snr).all() or snr.sum() <= 0:
        return np.full(n_ch, 1.0 / n_ch)
    return snr / snr.sum()


def mvdr_filter(psd_speech, psd_noise, u, diag_load: float = 1e-6,
                return_fallback: bool = False):
    """Reference-channel MVDR filter for every bin.

    Parameters
    ----------
    psd_speech, psd_noise : array (B, M, M)
    u : array (M,)
        Reference weights (one-hot or soft).
    diag_load : float
        Noise PSD loading relative to ``tr(Φ_N) / M``.

    Returns
    -------
    f : array (B, M)
    fallback : bool array (B,), only with ``return_fallback``
        Bins where the noise PSD could not be inverted or the trace fell
        below ``1e-10 * M``; those bins use ``f = u``.
    """
    psd_speech = np.asarray(psd_speech)
    psd_noise = np.asarray(psd_noise)
    u = np.asarray(u, dtype=float)
    n_ch = psd_speech.shape[-1]
    numerator, failed = solve_hpd(load_diagonal(psd_noise, diag_load), psd_speech)
    trace = np.trace(numerator, axis1=-2, axis2=-1)
    fallback = failed | (np.abs(trace) < TRACE_FLOOR * n_ch)
    safe_trace = np.where(fallback, 1.0, trace)
    f = (numerator @ u) / safe_trace[:, None]
    f[fallback] = u
    return (f, fallback) if return_fallback else f


def apply_beamformer(f, d) -> np.ndarray:
    """``x(t, b) = f(b)^H d(t, b)``; returns shape (T, B, 1)."""
    d = _as_stft(d)
    f = np.asarray(f)
    if f.shape[0] != d.shape[1]:
        raise ValueError("filter and STFT bin counts differ")
    return np.einsum("bm,tbm->tb", f.conj(), d)[:, :, None]


def mvdr_pipeline(d, mask_speech, mask_noise, ref: ReferenceSpec | None = None,
                  diag_load: float = 1e-6, normalize_psd: bool = False,
                  return_info: bool = False):
    """Average masks, estimate both PSDs, resolve ``u``, filter and apply.

    Masks may be channel-dependent (T, B, M) or time-only (T, 1, M); they
    are averaged over channels first.  ``return_info`` adds a dict with
    the reference weights, fallback bins and filter norms.
    """
    d = _as_stft(d)
    ref = ref or ReferenceSpec()
    w_s = average_masks(mask_speech)
    w_n = average_masks(mask_noise)
    psd_s = estimate_psd(d, w_s, normalize_psd)
    psd_n = estimate_psd(d, w_n, normalize_psd)
    u = select_reference(ref, psd_s, psd_n)
    f, fallback = mvdr_filter(psd_s, psd_n, u, diag_load, return_fallback=True)
    x = apply_beamformer(f, d)
    if not return_info:
        return x
    norms = np.linalg.norm(f, axis=-1)
    info = {"reference_weights": u.tolist(),
            "fallback_bins": int(fallback.sum()),
            "filter_norm_max": float(norms.max()),
            "filter_norm_mean": float(norms.mean())}
    return x, info
