"""Mask providers for the dereverberation and beamforming stages.

TF masks have shape (T, B, M); time-only (SAD) masks have shape (T, 1, M)
and broadcast over bins wherever a TF mask is accepted.  All values lie in
[0, 1].
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dereverb import _as_stft

MLP_SCHEMA = "farfield.mlp/1"
ACTIVATIONS = ("clipped_relu_1", "sigmoid")
HIDDEN_ACTIVATIONS = ("tanh", "relu")
PROVIDERS = ("oracle_irm", "constant", "energy_sad", "mlp")
TARGETS = ("derev", "speech", "noise")


def clamp_activation(x, kind: str):
    """Output nonlinearity mapping reals into [0, 1]."""
    x = np.asarray(x, dtype=float)
    if kind == "clipped_relu_1":
        return np.clip(x, 0.0, 1.0)
    if kind == "sigmoid":
        # tanh form avoids overflow in exp for large |x|
        return 0.5 * (1.0 + np.tanh(0.5 * x))
    raise ValueError(f"unknown activation {kind!r}")


def oracle_irm(reference, interference, eps: float = 1e-10,
               exponent: float = 1.0) -> np.ndarray:
    """Ideal ratio mask ``(|r|^2 / (|r|^2 + |i|^2 + eps'))^exponent``.

    ``eps'`` is ``eps`` times the mean power of both inputs, so the mask is
    invariant to a common rescaling.  ``exponent=0.5`` gives the amplitude
    ratio mask.
    """
    ref = _as_stft(reference)
    interf = _as_stft(interference)
    if ref.shape != interf.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {interf.shape}")
    p_ref = ref.real ** 2 + ref.imag ** 2
    p_int = interf.real ** 2 + interf.imag ** 2
    scale = 0.5 * (p_ref.mean() + p_int.mean())
    floor = eps * scale if scale > 0 else eps
    mask = p_ref / (p_ref + p_int + floor)
    return mask if exponent == 1.0 else mask ** exponent


def energy_sad(y, threshold_db: float = -6.0, width_db: float = 3.0) -> np.ndarray:
    """Frame-level speech activity mask per channel, shape (T, 1, M).

    A frame is active when its log energy exceeds the channel's median
    frame energy plus ``threshold_db``.  The edge is a logistic whose
    10%-90% transition spans ``width_db``.
    """
    y = _as_stft(y)
    energy = (y.real ** 2 + y.imag ** 2).sum(axis=1)  # (T, M)
    level = 10.0 * np.log10(np.maximum(energy, 1e-20))
    thresh = np.median(level, axis=0, keepdims=True) + threshold_db
    scale = width_db / (2.0 * np.log(9.0))
    return clamp_activation((level - thresh) / scale, "sigmoid")[:, None, :]


def constant_mask(y, value: float) -> np.ndarray:
    if not 0.0 <= value <= 1.0:
        raise ValueError("constant mask value must lie in [0, 1]")
    y = _as_stft(y)
    return np.full(y.shape, float(value))


def sad_to_tf(mask, n_bins: int) -> np.ndarray:
    """Explicitly repeat a (T, 1, M) time-only mask over ``n_bins`` bins."""
    mask = np.asarray(mask)
    return np.repeat(mask, n_bins, axis=1) if mask.shape[1] == 1 else mask


def tf_to_sad(mask) -> np.ndarray:
    """Collapse a TF mask to a time-only mask by averaging over bins."""
    return np.asarray(mask).mean(axis=1, keepdims=True)


@dataclass
class MlpWeights:
    """Per-frame feed-forward mask network.

    ``layers`` holds ``(weight, bias)`` pairs with ``weight`` of shape
    (out, in).  The input is a channel's magnitude spectrum for one frame
    (size B); the output has size B for ``kind="tf"`` or 1 for ``"sad"``.
    """

    layers: list
    activation: str = "sigmoid"
    hidden_activation: str = "tanh"
    kind: str = "tf"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.kind not in ("tf", "sad"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        layers = []
        for i, (w, b) in enumerate(self.layers):
            w = np.atleast_2d(np.asarray(w, dtype=float))
            b = np.asarray(b, dtype=float).reshape(-1)
            if b.shape[0] != w.shape[0]:
                raise ValueError(f"layer {i}: bias size {b.shape[0]} != rows {w.shape[0]}")
            if layers and layers[-1][0].shape[0] != w.shape[1]:
                raise ValueError(
                    f"layer {i}: expects {w.shape[1]} inputs, previous layer "
                    f"gives {layers[-1][0].shape[0]}")
            layers.append((w, b))
        if self.kind == "tf" and layers[-1][0].shape[0] != layers[0][0].shape[1]:
            raise ValueError("tf network must output one value per input bin")
        if self.kind == "sad" and layers[-1][0].shape[0] != 1:
            raise ValueError("sad network must output a single value")
        self.layers = layers

    @property
    def n_inputs(self) -> int:
        return self.layers[0][0].shape[1]

    def to_dict(self) -> dict:
        return {"schema": MLP_SCHEMA, "kind": self.kind,
                "activation": self.activation,
                "hidden_activation": self.hidden_activation,
                "layers": [{"weight": w.tolist(), "bias": b.tolist()}
                           for w, b in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpWeights":
        if d.get("schema") != MLP_SCHEMA:
            raise ValueError(f"unsupported weights schema {d.get('schema')!r}")
        try:
            layers = [(layer["weight"], layer["bias"]) for layer in d["layers"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed layer list: {exc}") from None
        return cls(layers, d.get("activation", "sigmoid"),
                   d.get("hidden_activation", "tanh"), d.get("kind", "tf"))


def save_mlp(path: str | os.PathLike, weights: MlpWeights):
    with open(path, "w") as fh:
        json.dump(weights.to_dict(), fh, indent=1)


def load_mlp(path: str | os.PathLike) -> MlpWeights:
    with open(path) as fh:
        return MlpWeights.from_dict(json.load(fh))


def mlp_infer(weights: MlpWeights, y) -> np.ndarray:
    """Run the network on every (frame, channel) magnitude spectrum.

    The same parameters serve all channels, so the result does not depend
    on channel count or order.
    """
    y = _as_stft(y)
    if y.shape[1] != weights.n_inputs:
        raise ValueError(f"network expects {weights.n_inputs} bins, got {y.shape[1]}")
    h = np.abs(y).transpose(0, 2, 1)  # (T, M, B)
    for i, (w, b) in enumerate(weights.layers):
        h = h @ w.T + b
        if i < len(weights.layers) - 1:
            h = np.tanh(h) if weights.hidden_activation == "tanh" else np.maximum(h, 0.0)
    return clamp_activation(h, weights.activation).transpose(0, 2, 1)


@dataclass
class MaskProviderSpec:
    """Which mask source to use for one pipeline target."""

    provider: str = "constant"
    target: str = "derev"
    value: float = 1.0  # constant
    threshold_db: float = -6.0  # energy_sad
    weights_path: str | None = None  # mlp

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ValueError(f"unknown mask provider {self.provider!r}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown mask target {self.target!r}")
        if self.provider == "constant" and not 0.0 <= self.value <= 1.0:
            raise ValueError("constant mask value must lie in [0, 1]")
        if self.provider == "mlp" and not self.weights_path:
            raise ValueError("mlp provider needs weights_path")

    def to_dict(self) -> dict:
        d = {"provider": self.provider, "target": self.target}
        if self.provider == "constant":
            d["value"] = self.value
        elif self.provider == "energy_sad":
            d["threshold_db"] = self.threshold_db
        elif self.provider == "mlp":
            d["weights_path"] = self.weights_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MaskProviderSpec":
        known = {"provider", "target", "value", "threshold_db", "weights_path"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown mask provider fields: {sorted(unknown)}")
        return cls(**d)


def make_mask(spec: MaskProviderSpec, y, oracle: dict | None = None) -> np.ndarray:
    """Produce a mask for ``y`` according to ``spec``.

    ``oracle`` maps ``"early"``, ``"reverberant"`` and ``"noise"`` to STFTs
    of the scene components; only the ``oracle_irm`` provider needs it.
    For ``derev`` the desired part is the early speech image plus noise
    (WPE leaves noise alone) and the late reverberation is interference;
    the amplitude form of the mask is used, which keeps the weighted
    variance close to the early-image power.
    """
    y = _as_stft(y)
    if spec.provider == "constant":
        return constant_mask(y, spec.value)
    if spec.provider == "energy_sad":
        return energy_sad(y, spec.threshold_db)
    if spec.provider == "mlp":
        return mlp_infer(load_mlp(spec.weights_path), y)
    if oracle is None:
        raise ValueError("oracle_irm needs the scene's component signals")
    if spec.target == "derev":
        early = _as_stft(oracle["early"])
        late = _as_stft(oracle["reverberant"]) - early
        return oracle_irm(early + _as_stft(oracle["noise"]), late, exponent=0.5)
    if spec.target == "speech":
        return oracle_irm(oracle["reverberant"], oracle["noise"])
    return oracle_irm(oracle["noise"], oracle["reverberant"])
