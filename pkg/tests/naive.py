"""Loop-based reference implementations used as test oracles.

Everything here is written element by element with plain Python loops and
dense inverses, independent of the vectorised library code.
"""
import math

import numpy as np


def dft_frames(x, fft_size, hop, window):
    """Direct O(N^2) DFT of each windowed frame of a 1-D signal (no padding)."""
    n_frames = 1 + (len(x) - fft_size) // hop
    n_bins = fft_size // 2 + 1
    out = np.zeros((n_frames, n_bins), complex)
    for t in range(n_frames):
        for k in range(n_bins):
            acc = 0j
            for n in range(fft_size):
                acc += x[t * hop + n] * window[n] * complex(
                    math.cos(2 * math.pi * k * n / fft_size),
                    -math.sin(2 * math.pi * k * n / fft_size))
            out[t, k] = acc
    return out


def stack(y, delay, taps):
    T, B, M = y.shape
    out = np.zeros((T, B, M * taps), complex)
    for t in range(T):
        for b in range(B):
            for m in range(M):
                for l in range(taps):
                    s = t - delay - l
                    if s >= 0:
                        out[t, b, m * taps + l] = y[s, b, m]
    return out


def variance(power_per_channel, floor):
    T, B, M = power_per_channel.shape
    lam = np.zeros((T, B))
    for t in range(T):
        for b in range(B):
            lam[t, b] = max(sum(power_per_channel[t, b, m] for m in range(M)) / M, floor)
    return lam


def normal_equations(ytil, y, lam, diag_load):
    T, B, K = ytil.shape
    M = y.shape[2]
    G = np.zeros((B, K, M), complex)
    for b in range(B):
        R = np.zeros((K, K), complex)
        P = np.zeros((K, M), complex)
        for t in range(T):
            v = ytil[t, b][:, None]
            R += v @ v.conj().T / lam[t, b]
            P += v @ y[t, b][None, :].conj() / lam[t, b]
        R = R + diag_load * np.trace(R).real / K * np.eye(K)
        G[b] = np.linalg.inv(R) @ P
    return G


def apply_filter(y, G, delay, taps):
    ytil = stack(y, delay, taps)
    d = np.zeros_like(y)
    T, B, M = y.shape
    for t in range(T):
        for b in range(B):
            d[t, b] = y[t, b] - G[b].conj().T @ ytil[t, b]
    return d


def wpe(y, taps, delay, iterations, variance_floor=1e-10, diag_load=1e-6, mask=None):
    """Iterative WPE, or the single mask-driven pass when ``mask`` is given."""
    floor = variance_floor * np.mean(np.abs(y) ** 2)
    ytil = stack(y, delay, taps)
    d = y
    if mask is not None:
        lam = variance(np.broadcast_to(mask, y.shape) * np.abs(y) ** 2, floor)
        return apply_filter(y, normal_equations(ytil, y, lam, diag_load), delay, taps)
    for _ in range(iterations):
        lam = variance(np.abs(d) ** 2, floor)
        d = apply_filter(y, normal_equations(ytil, y, lam, diag_load), delay, taps)
    return d


def psd(d, w):
    T, B, M = d.shape
    out = np.zeros((B, M, M), complex)
    for b in range(B):
        for t in range(T):
            v = d[t, b][:, None]
            out[b] += w[t, b] * (v @ v.conj().T)
    return out


def mvdr(psd_s, psd_n, u, diag_load):
    B, M, _ = psd_s.shape
    f = np.zeros((B, M), complex)
    for b in range(B):
        n = psd_n[b] + diag_load * np.trace(psd_n[b]).real / M * np.eye(M)
        num = np.linalg.inv(n) @ psd_s[b]
        f[b] = num @ u / np.trace(num)
    return f


def hz_to_mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_bank(n_mels, f_min, f_max, sample_rate, fft_size):
    lo, hi = hz_to_mel(f_min), hz_to_mel(f_max)
    edges = [mel_to_hz(lo + i * (hi - lo) / (n_mels + 1)) for i in range(n_mels + 2)]
    n_bins = fft_size // 2 + 1
    fb = np.zeros((n_mels, n_bins))
    for k in range(n_mels):
        a, c, e = edges[k], edges[k + 1], edges[k + 2]
        for j in range(n_bins):
            f = j * sample_rate / fft_size
            if a < f <= c:
                fb[k, j] = (f - a) / (c - a)
            elif c < f < e:
                fb[k, j] = (e - f) / (e - c)
    return fb, edges


def segsnr(enhanced, clean, frame_len, active_db=-40.0):
    n_frames = min(len(enhanced), len(clean)) // frame_len
    sig, err = [], []
    for i in range(n_frames):
        s = e = 0.0
        for n in range(i * frame_len, (i + 1) * frame_len):
            s += clean[n] ** 2
            e += (enhanced[n] - clean[n]) ** 2
        sig.append(s)
        err.append(e)
    top = max(sig)
    vals = []
    for s, e in zip(sig, err):
        if s > top * 10 ** (active_db / 10):
            v = 35.0 if e == 0 else 10 * math.log10(s / e)
            vals.append(min(max(v, -10.0), 35.0))
    return sum(vals) / len(vals)
