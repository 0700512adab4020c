"""WAV and text-matrix file formats."""
from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .stft import AudioBuffer

MATRIX_MAGIC = "farfield-matrix v1"


def read_wav(path: str | os.PathLike) -> AudioBuffer:
    """Read a PCM16 or float32 WAV; PCM is scaled to [-1, 1)."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    else:
        data = data.astype(np.float64)
    return AudioBuffer(data, int(rate))


def write_wav(path: str | os.PathLike, audio: AudioBuffer, fmt: str = "float32"):
    """Write interleaved multichannel audio as ``float32`` or ``pcm16``."""
    samples = audio.samples
    if fmt == "float32":
        out = samples.astype(np.float32)
    elif fmt == "pcm16":
        out = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unsupported WAV format {fmt!r}")
    if out.shape[1] == 1:
        out = out[:, 0]
    wavfile.write(path, audio.sample_rate, out)


def save_matrix(path: str | os.PathLike, matrix: np.ndarray, **meta):
    """Write a real 2-D matrix as text with a one-line header.

    Header: ``# farfield-matrix v1 rows=R cols=C key=value ...``; then one
    whitespace-separated row per line.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    fields = [MATRIX_MAGIC, f"rows={matrix.shape[0]}", f"cols={matrix.shape[1]}"]
    fields += [f"{k}={v}" for k, v in meta.items()]
    np.savetxt(path, matrix, fmt="%.17g", header=" ".join(fields), comments="# ")


def load_matrix(path: str | os.PathLike) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith("# " + MATRIX_MAGIC):
        raise ValueError(f"{path}: not a {MATRIX_MAGIC} file")
    meta = dict(item.split("=", 1) for item in header[2 + len(MATRIX_MAGIC):].split())
    rows, cols = int(meta.pop("rows")), int(meta.pop("cols"))
    matrix = np.loadtxt(path, ndmin=2).reshape(rows, cols)
    return matrix, meta
