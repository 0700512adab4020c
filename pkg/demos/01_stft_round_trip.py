"""STFT analysis and overlap-add synthesis.

Run: python3 demos/01_stft_round_trip.py
"""
import numpy as np

from farfield import AudioBuffer, StftConfig, istft, stft, validate_cola

np.set_printoptions(precision=4, suppress=True)

# Which frame/hop pairs reconstruct perfectly?  The window product has to
# overlap-add to a constant.
for hop in (128, 256, 384, 512):
    print(f"fft 512, hop {hop:3d}: sqrt-hann COLA = {validate_cola(512, hop, 'sqrt-hann')}")

# A three-channel signal, 1 s at 16 kHz.
rng = np.random.default_rng(0)
x = AudioBuffer(rng.standard_normal((16000, 3)), 16000)

cfg = StftConfig(fft_size=512, hop=128)
X = stft(x, cfg)
print("\nSTFT shape (frames, bins, channels):", X.shape)

y = istft(X)
err = np.linalg.norm(y.samples - x.samples) / np.linalg.norm(x.samples)
print(f"round-trip relative error: {err:.2e}")

# The STFT is a linear map: scaling the input scales every coefficient.
print("linear:", np.allclose(stft(AudioBuffer(2.5 * x.samples), cfg).data, 2.5 * X.data))

# A 1 kHz tone lands in bin 1000 / (16000 / 512) = 32.
t = np.arange(16000) / 16000
tone = stft(np.sin(2 * np.pi * 1000 * t), cfg).data[:, :, 0]
print("dominant bin of a 1 kHz tone:", np.bincount(np.abs(tone).argmax(axis=1)).argmax())
