"""Finite-difference checks that the enhancement graph is smooth in its masks.

A :class:`GraphProbe` picks a sub-graph (WPE only, MVDR only, or the full
WPE -> MVDR -> log-mel/MVN chain), a scalar loss and a set of step sizes.
:func:`directional_derivative` evaluates central differences of the loss
along a direction in mask space; :func:`derivative_report` turns a
sequence of them into an observed convergence order.  Second-order
convergence is what a differentiable graph must show.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .beamform import ReferenceSpec, mvdr_pipeline
from .dereverb import WpeConfig, wpe_oneshot
from .features import MelConfig, logmel, mel_matrix, mvn
from .masks import clamp_activation
from .simulation import NoiseConfig, RirConfig, SceneConfig, render_scene
from .stft import StftConfig, stft

PIPELINES = ("wpe_only", "mvdr_only", "full")
LOSSES = ("stft_mse", "logmel_mse", "output_power")
MASK_NAMES = {"wpe_only": ("derev",), "mvdr_only": ("speech", "noise"),
              "full": ("derev", "speech", "noise")}


@dataclass
class GraphProbe:
    pipeline: str = "full"
    loss: str = "logmel_mse"
    seed: int = 0
    # one decade; below ~3e-5 roundoff in the loss dominates, above ~3e-3
    # quartic terms of the log/MVN stage bend the quotient sequence
    steps: tuple = (1e-3, 10 ** -3.5, 1e-4)
    activation: str | None = None  # None: perturb masks directly
    min_order: float = 1.9
    scene: SceneConfig = field(default_factory=lambda: SceneConfig(
        seed=0, channels=2, duration=0.5,
        rir=RirConfig(t60_like_decay=0.3), noise=NoiseConfig(snr_db=10.0)))
    stft: StftConfig = field(default_factory=lambda: StftConfig(256, 64))
    wpe: WpeConfig = field(default_factory=WpeConfig)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    n_mels: int = 40

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.activation not in (None, "sigmoid", "clipped_relu_1"):
            raise ValueError(f"unknown activation {self.activation!r}")
        steps = tuple(float(h) for h in self.steps)
        if len(steps) < 3:
            raise ValueError("need at least three step sizes")
        if any(h <= 1e-12 for h in steps) or any(a <= b for a, b in zip(steps, steps[1:])):
            raise ValueError("step sizes must be strictly decreasing and > 1e-12")
        self.steps = steps

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline, "loss": self.loss, "seed": self.seed,
                "steps": list(self.steps), "activation": self.activation,
                "min_order": self.min_order, "scene": self.scene.to_dict(),
                "stft": self.stft.to_dict(), "wpe": self.wpe.to_dict(),
                "reference": self.reference.to_dict(), "n_mels": self.n_mels}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphProbe":
        d = dict(d)
        kw = {}
        if "scene" in d:
            kw["scene"] = SceneConfig.from_dict(d.pop("scene"))
        if "stft" in d:
            kw["stft"] = StftConfig(**d.pop("stft"))
        if "wpe" in d:
            kw["wpe"] = WpeConfig(**d.pop("wpe"))
        if "reference" in d:
            kw["reference"] = ReferenceSpec(**d.pop("reference"))
        if "steps" in d:
            d["steps"] = tuple(d["steps"])
        return cls(**d, **kw)


@dataclass
class DerivativeReport:
    steps: list
    quotients: list
    extrapolated: float
    order: float | None
    verdict: str  # smooth | exact | kink | nonconvergent
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict in ("smooth", "exact")

    def to_dict(self) -> dict:
        return {"steps": self.steps, "quotients": self.quotients,
                "extrapolated": self.extrapolated, "order": self.order,
                "verdict": self.verdict, "passed": self.passed,
                "flags": self.flags, "diagnostics": self.diagnostics}


def scalar_loss(x, kind: str, target=None) -> float:
    """Scalar objective standing in for the recogniser's loss.

    ``stft_mse`` is ``mean |x - target|^2`` on complex STFTs, ``logmel_mse``
    the same on real feature matrices, ``output_power`` is ``mean |x|^2``.
    """
    x = np.asarray(x)
    if kind == "output_power":
        return float(np.mean(x.real ** 2 + x.imag ** 2))
    if kind not in ("stft_mse", "logmel_mse"):
        raise ValueError(f"unknown loss {kind!r}")
    target = np.asarray(target)
    if x.shape != target.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {target.shape}")
    diff = x - target
    return float(np.mean(diff.real ** 2 + diff.imag ** 2))


class PipelineGraph:
    """The selected sub-graph, frozen around one rendered scene."""

    def __init__(self, probe: GraphProbe, target=None):
        self.probe = probe
        bundle = render_scene(probe.scene)
        self.y = stft(bundle.observed, probe.stft).data
        self.shape = self.y.shape
        self.fbank = mel_matrix(MelConfig(n_mels=probe.n_mels,
                                          sample_rate=probe.scene.sample_rate,
                                          fft_size=probe.stft.fft_size))
        ref_ch = probe.reference.channel if probe.reference.mode == "fixed" else 0
        direct = stft(bundle.early, probe.stft).data
        if target is not None:
            self.target = np.asarray(target)
        elif probe.loss == "stft_mse":
            self.target = direct if probe.pipeline == "wpe_only" else direct[:, :, ref_ch:ref_ch + 1]
        elif probe.loss == "logmel_mse":
            self.target = mvn(logmel(direct[:, :, ref_ch:ref_ch + 1], fbank=self.fbank))
        else:
            self.target = None

    @property
    def mask_names(self):
        return MASK_NAMES[self.probe.pipeline]

    def masks_from_params(self, params: dict) -> dict:
        act = self.probe.activation
        if act is None:
            return params
        return {k: clamp_activation(v, act) for k, v in params.items()}

    def params_from_masks(self, masks: dict) -> dict:
        act = self.probe.activation
        if act == "sigmoid":
            return {k: np.log(v) - np.log1p(-v) for k, v in masks.items()}
        return {k: np.array(v, dtype=float) for k, v in masks.items()}

    def forward(self, params: dict) -> tuple[np.ndarray, dict]:
        """Run the sub-graph; returns the graph output and branch diagnostics."""
        p = self.probe
        masks = self.masks_from_params(params)
        diag = {"degenerate_bins": 0, "fallback_bins": 0, "floored_cells": 0}
        d = self.y
        if p.pipeline in ("wpe_only", "full"):
            d, filt = wpe_oneshot(self.y, masks["derev"], p.wpe, return_filter=True)
            diag["degenerate_bins"] = int(filt.degenerate_bins.size)
            diag["floored_cells"] = filt.floored_cells
        out = d
        if p.pipeline in ("mvdr_only", "full"):
            out, info = mvdr_pipeline(d, masks["speech"], masks["noise"], p.reference,
                                      return_info=True)
            diag["fallback_bins"] = info["fallback_bins"]
        if p.loss == "logmel_mse":
            single = out if out.shape[2] == 1 else out[:, :, :1]
            out = logmel(single, fbank=self.fbank)
            if p.pipeline == "full":
                out = mvn(out)
        return out, diag

    def loss(self, params: dict) -> tuple[float, dict]:
        out, diag = self.forward(params)
        return scalar_loss(out, self.probe.loss, self.target), diag

    def random_point(self, rng: np.random.Generator) -> dict:
        """Masks drawn uniformly in [0.1, 0.9], expressed as parameters."""
        masks = {k: rng.uniform(0.1, 0.9, self.shape) for k in self.mask_names}
        return self.params_from_masks(masks)

    def random_direction(self, rng: np.random.Generator) -> dict:
        """Gaussian direction scaled to unit max-norm across all mask tensors.

        Max-norm keeps ``h`` meaningful as the largest change of any single
        mask value, independent of the mask size.
        """
        d = {k: rng.standard_normal(self.shape) for k in self.mask_names}
        norm = max(float(np.abs(v).max()) for v in d.values())
        return {k: v / norm for k, v in d.items()}


def _shift(params: dict, direction: dict, h: float) -> dict:
    return {k: params[k] + h * direction[k] for k in params}


def directional_derivative(graph: PipelineGraph, params: dict, direction: dict,
                           h: float, return_diagnostics: bool = False):
    """Central difference ``(L(p + h v) - L(p - h v)) / 2h``.

    When the probe perturbs masks directly, both points must stay in
    [0, 1].
    """
    plus, minus = _shift(params, direction, h), _shift(params, {k: -v for k, v in direction.items()}, h)
    if graph.probe.activation is None:
        for point in (plus, minus):
            for v in point.values():
                if v.min() < 0.0 or v.max() > 1.0:
                    raise ValueError(f"perturbation with h={h} leaves [0, 1]")
    l_plus, d_plus = graph.loss(plus)
    l_minus, d_minus = graph.loss(minus)
    q = (l_plus - l_minus) / (2.0 * h)
    if return_diagnostics:
        return q, (l_plus, l_minus), [d_plus, d_minus]
    return q


def observed_order(steps, quotients) -> float | None:
    """Order ``p`` with ``q(h) = q* + c h^p`` fitted through three points.

    Returns ``None`` unless the differences shrink monotonically with a
    consistent sign.
    """
    (h1, h2, h3), (q1, q2, q3) = steps, quotients
    d1, d2 = q1 - q2, q2 - q3
    if d1 == 0 or d2 == 0 or d1 * d2 < 0 or abs(d2) >= abs(d1):
        return None
    ratio = d1 / d2

    def gap(p):
        return (h1 ** p - h2 ** p) / (h2 ** p - h3 ** p) - ratio

    lo, hi = 1e-3, 12.0
    if gap(lo) >= 0:
        return lo
    if gap(hi) <= 0:
        return hi
    return float(brentq(gap, lo, hi, xtol=1e-10))


def derivative_report(graph: PipelineGraph, params: dict, direction: dict) -> DerivativeReport:
    probe = graph.probe
    steps = list(probe.steps)
    quotients, flags = [], set()
    losses, diags = [], []
    for h in steps:
        q, pair, d = directional_derivative(graph, params, direction, h, return_diagnostics=True)
        quotients.append(q)
        losses.extend(pair)
        diags.extend(d)

    # roundoff level of the quotient at the smallest step
    scale = max(abs(v) for v in losses)
    noise = 1e3 * np.finfo(float).eps * scale / steps[-1]

    orders = []
    for i in range(len(steps) - 2):
        orders.append(observed_order(steps[i:i + 3], quotients[i:i + 3]))
    spread = max(quotients) - min(quotients)
    if spread <= noise:
        verdict, order = "exact", None
    elif any(o is None for o in orders):
        verdict, order = "nonconvergent", None
    else:
        order = min(orders)
        verdict = "smooth" if order >= probe.min_order else "kink"

    if any(d["degenerate_bins"] for d in diags):
        flags.add("degenerate_wpe_bin")
    if any(d["fallback_bins"] for d in diags):
        flags.add("mvdr_fallback_bin")
    if len({d["floored_cells"] for d in diags}) > 1:
        flags.add("variance_floor")
    if probe.activation == "clipped_relu_1":
        reach = steps[0] * max(float(np.abs(v).max()) for v in direction.values())
        for v in params.values():
            if (np.abs(v) <= reach).any() or (np.abs(v - 1.0) <= reach).any():
                flags.add("clamp_boundary")
                break

    h_a, h_b = steps[-2], steps[-1]
    extrapolated = quotients[-1] + (quotients[-1] - quotients[-2]) / ((h_a / h_b) ** 2 - 1.0)
    return DerivativeReport(steps, quotients, float(extrapolated), order, verdict,
                            sorted(flags), {"roundoff_level": noise,
                                            "orders": orders})


def smoothness_sweep(probe: GraphProbe, n_directions: int,
                     graph: PipelineGraph | None = None,
                     point: dict | None = None) -> list[DerivativeReport]:
    """Derivative reports at ``n_directions`` random interior points.

    Each probe draws a fresh mask point in [0.1, 0.9] (unless ``point`` is
    given) and a unit Gaussian direction, all from ``probe.seed``.
    """
    graph = graph or PipelineGraph(probe)
    rng = np.random.default_rng([probe.seed, 7])
    reports = []
    for _ in range(n_directions):
        params = point if point is not None else graph.random_point(rng)
        reports.append(derivative_report(graph, params, graph.random_direction(rng)))
    return reports


def sweep_failures(reports) -> list[int]:
    """Indices of reports that failed without any branch flag attached."""
    return [i for i, r in enumerate(reports) if not r.passed and not r.flags]


def format_report(probe: GraphProbe, reports) -> str:
    """One JSON record per probe, newline-separated."""
    lines = []
    for i, r in enumerate(reports):
        rec = {"probe": i, "pipeline": probe.pipeline, "loss": probe.loss}
        rec.update(r.to_dict())
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")
