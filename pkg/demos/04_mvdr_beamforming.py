"""Mask-based MVDR beamforming with a fixed or soft reference channel.

Run: python3 demos/04_mvdr_beamforming.py
"""
import numpy as np

from farfield import ReferenceSpec, istft, mvdr_filter, mvdr_pipeline, oracle_irm, stft
from farfield.simulation import NoiseConfig, RirConfig, SceneConfig, metric_segsnr, render_scene

# The filter is distortionless towards the reference when the speech PSD is
# rank one: f^H v equals the reference entry of v.
rng = np.random.default_rng(1)
v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
a = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
f = mvdr_filter(np.outer(v, v.conj())[None], (a @ a.conj().T)[None], np.eye(4)[2])[0]
print(f"f^H v = {complex(f.conj() @ v):.6f},  v[2] = {complex(v[2]):.6f}")

# A noisy reverberant 4-channel scene and oracle speech/noise masks.
b = render_scene(SceneConfig(seed=5, channels=4, duration=3.0, rir=RirConfig(0.3),
                             noise=NoiseConfig("diffuse_lowpass", 0.0)))
ys = stft(b.observed)
R, N = stft(b.reverberant).data, stft(b.noise).data
ws, wn = oracle_irm(R, N), oracle_irm(N, R)

print("\nsegmental SNR against the reverberant image (dB):")
for m in range(4):
    print(f"  input channel {m}: {metric_segsnr(b.observed.samples[:, m], b.reverberant.samples[:, m]):6.2f}")
for ref in (ReferenceSpec("fixed", 0), ReferenceSpec("soft")):
    x, info = mvdr_pipeline(ys.data, ws, wn, ref, return_info=True)
    out = istft(ys.with_data(x)).samples[:, 0]
    # the soft reference mixes channels, so score against the same mixture
    u = np.array(info["reference_weights"])
    target = b.reverberant.samples @ u
    print(f"  MVDR, {ref.mode:5s} reference: {metric_segsnr(out, target):6.2f}"
          f"   u = {np.round(u, 3)}")
