"""Log-mel features with per-utterance mean/variance normalisation.

Run: python3 demos/06_features.py
"""
import numpy as np

from farfield import MelConfig, extract_features, logmel, mel_matrix, stft
from farfield.simulation import SceneConfig, render_scene

np.set_printoptions(precision=3, suppress=True)

fb = mel_matrix(MelConfig(n_mels=80))
print("filterbank:", fb.shape, " peak bins of the first five filters:", fb[:5].argmax(axis=1))

x = stft(render_scene(SceneConfig(seed=4, channels=1)).observed).data
raw = logmel(x)
feats = extract_features(x)
print("log-mel:", raw.shape, f" mean {raw.mean():.2f}")
print("after MVN, per-dim mean (first 5):", feats.mean(axis=0)[:5])
print("after MVN, per-dim std  (first 5):", feats.std(axis=0)[:5])
