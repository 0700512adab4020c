"""Mask providers: oracle ratio masks, energy SAD, a small MLP.

Run: python3 demos/05_masks.py
"""
import numpy as np

from farfield import MlpWeights, energy_sad, mlp_infer, oracle_irm, stft
from farfield.masks import sad_to_tf, tf_to_sad
from farfield.simulation import NoiseConfig, RirConfig, SceneConfig, render_scene, stft_frame_labels

b = render_scene(SceneConfig(seed=2, channels=2, duration=3.0,
                             rir=RirConfig(0.0), noise=NoiseConfig(snr_db=20.0)))
y = stft(b.observed).data
R, N = stft(b.reverberant).data, stft(b.noise).data

irm = oracle_irm(R, N)
print("oracle IRM:", irm.shape, f"range [{irm.min():.3f}, {irm.max():.3f}]")

# Frame-level speech activity from the log energy, compared with the
# labels derived from the dry source.
sad = energy_sad(y)
labels = stft_frame_labels(b)
agree = np.mean((sad[:, 0, 0] > 0.5) == labels)
print(f"SAD shape {sad.shape}, agreement with ground truth {agree:.1%}")

# Converting between frame-level and time-frequency masks.
print("SAD -> TF:", sad_to_tf(sad, y.shape[1]).shape, "  TF -> SAD:", tf_to_sad(irm).shape)

# An untrained MLP, just to show the interface: magnitude frames in,
# one mask value per bin out, squashed to [0, 1].
rng = np.random.default_rng(0)
B, H = y.shape[1], 64
w = MlpWeights([(rng.standard_normal((H, B)) * 0.05, np.zeros(H)),
                (rng.standard_normal((B, H)) * 0.05, np.zeros(B))], activation="sigmoid")
print("MLP mask:", mlp_infer(w, y).shape)
