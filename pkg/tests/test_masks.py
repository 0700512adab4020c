import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from farfield.masks import (MaskProviderSpec, MlpWeights, clamp_activation, constant_mask,
                            energy_sad, load_mlp, make_mask, mlp_infer, oracle_irm, sad_to_tf,
                            save_mlp, tf_to_sad)
from farfield.simulation import NoiseConfig, RirConfig, SceneConfig, render_scene, stft_frame_labels
from farfield.stft import stft

from conftest import random_stft


# ---------------------------------------------------------------- activations

def test_clamp_examples():
    assert clamp_activation(1.7, "clipped_relu_1") == 1.0
    assert clamp_activation(-0.3, "clipped_relu_1") == 0.0
    assert clamp_activation(0.0, "sigmoid") == 0.5


@given(st.floats(-700, 700))
def test_sigmoid_matches_logistic(x):
    expect = 1.0 / (1.0 + np.exp(-x)) if x > -700 else 0.0
    assert abs(clamp_activation(x, "sigmoid") - expect) < 1e-15
    assert 0.0 <= clamp_activation(x, "sigmoid") <= 1.0


def test_unknown_activation():
    with pytest.raises(ValueError):
        clamp_activation(0.0, "softplus")


# ---------------------------------------------------------------- oracle IRM

def test_irm_without_interference_is_one(rng):
    r = random_stft(rng, (5, 4, 2))
    np.testing.assert_allclose(oracle_irm(r, np.zeros_like(r)), 1.0, atol=1e-8)


def test_irm_equal_magnitudes_is_half(rng):
    r = random_stft(rng, (5, 4, 2))
    i = np.abs(r) * np.exp(1j * rng.uniform(0, 6, r.shape))
    np.testing.assert_allclose(oracle_irm(r, i), 0.5, atol=1e-9)


def test_irm_direct_formula(rng):
    r, i = random_stft(rng, (5, 4, 2)), random_stft(rng, (5, 4, 2))
    pr, pi = np.abs(r) ** 2, np.abs(i) ** 2
    eps = 1e-10 * 0.5 * (pr.mean() + pi.mean())
    np.testing.assert_allclose(oracle_irm(r, i), pr / (pr + pi + eps), rtol=1e-12)
    np.testing.assert_allclose(oracle_irm(r, i, exponent=0.5), np.sqrt(pr / (pr + pi + eps)), rtol=1e-12)


def test_irm_shape_mismatch(rng):
    with pytest.raises(ValueError):
        oracle_irm(random_stft(rng, (5, 4, 2)), random_stft(rng, (5, 4, 1)))


@given(st.floats(1e-6, 1e6))
def test_irm_scale_invariant(alpha):
    rng = np.random.default_rng(0)
    r, i = random_stft(rng, (5, 4, 2)), random_stft(rng, (5, 4, 2))
    np.testing.assert_allclose(oracle_irm(alpha * r, alpha * i), oracle_irm(r, i), rtol=1e-12)


# ---------------------------------------------------------------- SAD

def test_sad_constant_energy_is_active(rng):
    y = np.exp(1j * rng.uniform(0, 6, (40, 9, 2)))
    mask = energy_sad(y, threshold_db=-6.0)
    assert mask.shape == (40, 1, 2)
    assert mask.min() > 0.999


def test_sad_digital_silence_is_inactive(rng):
    y = random_stft(rng, (40, 9, 1))
    y[10:20] = 0.0
    mask = energy_sad(y)
    assert mask[10:20].max() < 1e-6 and mask[:10].min() > 0.5


def test_sad_transition_width():
    # levels -1.5 dB and +1.5 dB around the threshold give 10 % and 90 %
    med = 0.0
    levels = np.array([med, med, med, med - 6 - 1.5, med - 6 + 1.5])
    y = np.sqrt(10 ** (levels / 10))[:, None, None] * np.ones((1, 1, 1))
    mask = energy_sad(y, -6.0, 3.0)[:, 0, 0]
    np.testing.assert_allclose(mask[3:], [0.1, 0.9], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_sad_agrees_with_scene_activity(seed):
    b = render_scene(SceneConfig(seed=seed, rir=RirConfig(t60_like_decay=0.0),
                                 noise=NoiseConfig(snr_db=20.0)))
    mask = energy_sad(stft(b.observed).data)[:, 0, :] > 0.5
    labels = stft_frame_labels(b)
    assert (mask == labels[:, None]).mean() > 0.9


# ---------------------------------------------------------------- MLP

def zero_net(n_bins, activation):
    return MlpWeights([(np.zeros((n_bins, n_bins)), np.zeros(n_bins))], activation)


def small_net(rng, n_bins, hidden=6, kind="tf"):
    out = n_bins if kind == "tf" else 1
    return MlpWeights([(0.3 * rng.standard_normal((hidden, n_bins)), rng.standard_normal(hidden)),
                       (0.3 * rng.standard_normal((out, hidden)), rng.standard_normal(out))],
                      "sigmoid", kind=kind)


def test_zero_network_sigmoid_is_half(rng):
    y = random_stft(rng, (6, 5, 2))
    assert np.all(mlp_infer(zero_net(5, "sigmoid"), y) == 0.5)


def test_zero_network_clipped_relu_is_zero(rng):
    y = random_stft(rng, (6, 5, 2))
    assert not mlp_infer(zero_net(5, "clipped_relu_1"), y).any()


def test_duplicate_channels_get_identical_masks(rng):
    y = np.repeat(random_stft(rng, (6, 5, 1)), 2, axis=2)
    mask = mlp_infer(small_net(rng, 5), y)
    assert np.array_equal(mask[:, :, 0], mask[:, :, 1])


def test_sad_network_output_shape(rng):
    mask = mlp_infer(small_net(rng, 5, kind="sad"), random_stft(rng, (6, 5, 3)))
    assert mask.shape == (6, 1, 3)


def test_network_matches_manual_forward_pass(rng):
    net = small_net(rng, 5)
    y = random_stft(rng, (4, 5, 2))
    (w1, b1), (w2, b2) = net.layers
    for t in range(4):
        for m in range(2):
            h = np.tanh(w1 @ np.abs(y[t, :, m]) + b1)
            expect = 1 / (1 + np.exp(-(w2 @ h + b2)))
            np.testing.assert_allclose(mlp_infer(net, y)[t, :, m], expect, rtol=1e-12)


def test_layers_must_chain():
    with pytest.raises(ValueError):
        MlpWeights([(np.zeros((4, 5)), np.zeros(4)), (np.zeros((5, 3)), np.zeros(5))])
    with pytest.raises(ValueError):
        MlpWeights([(np.zeros((4, 5)), np.zeros(3))])
    with pytest.raises(ValueError):
        MlpWeights([(np.zeros((4, 5)), np.zeros(4))], kind="tf")


def test_input_size_mismatch(rng):
    with pytest.raises(ValueError):
        mlp_infer(zero_net(5, "sigmoid"), random_stft(rng, (6, 7, 1)))


def test_weights_file_round_trip(tmp_path, rng):
    net = small_net(rng, 5)
    save_mlp(tmp_path / "w.json", net)
    back = load_mlp(tmp_path / "w.json")
    y = random_stft(rng, (6, 5, 2))
    assert np.array_equal(mlp_infer(back, y), mlp_infer(net, y))
    assert json.loads((tmp_path / "w.json").read_text())["schema"] == "farfield.mlp/1"


def test_malformed_weights_file(tmp_path):
    (tmp_path / "w.json").write_text(json.dumps({"schema": "farfield.mlp/1",
                                                 "layers": [{"weight": [[1, 2]], "bias": [0, 0]}]}))
    with pytest.raises(ValueError):
        load_mlp(tmp_path / "w.json")
    (tmp_path / "v.json").write_text(json.dumps({"schema": "other", "layers": []}))
    with pytest.raises(ValueError):
        load_mlp(tmp_path / "v.json")


# ---------------------------------------------------------------- providers

def test_provider_spec_validation():
    with pytest.raises(ValueError):
        MaskProviderSpec("magic")
    with pytest.raises(ValueError):
        MaskProviderSpec("constant", "derev", 1.5)
    with pytest.raises(ValueError):
        MaskProviderSpec("mlp", "speech")
    with pytest.raises(ValueError):
        MaskProviderSpec.from_dict({"provider": "constant", "colour": "red"})


def test_provider_spec_round_trip():
    for spec in (MaskProviderSpec("constant", "noise", 0.3),
                 MaskProviderSpec("energy_sad", "speech", threshold_db=-3),
                 MaskProviderSpec("mlp", "speech", weights_path="w.json"),
                 MaskProviderSpec("oracle_irm", "derev")):
        assert MaskProviderSpec.from_dict(spec.to_dict()) == spec


def test_make_mask_providers(tmp_path, rng):
    y = random_stft(rng, (8, 5, 2))
    early, late, noise = (random_stft(rng, y.shape) for _ in range(3))
    oracle = {"early": early, "reverberant": early + late, "noise": noise}
    assert np.all(make_mask(MaskProviderSpec("constant", value=0.25), y) == 0.25)
    np.testing.assert_allclose(make_mask(MaskProviderSpec("energy_sad"), y), energy_sad(y))
    np.testing.assert_allclose(make_mask(MaskProviderSpec("oracle_irm", "speech"), y, oracle),
                               oracle_irm(early + late, noise))
    np.testing.assert_allclose(make_mask(MaskProviderSpec("oracle_irm", "noise"), y, oracle),
                               oracle_irm(noise, early + late))
    np.testing.assert_allclose(make_mask(MaskProviderSpec("oracle_irm", "derev"), y, oracle),
                               oracle_irm(early + noise, late, exponent=0.5))
    save_mlp(tmp_path / "w.json", zero_net(5, "sigmoid"))
    assert np.all(make_mask(MaskProviderSpec("mlp", weights_path=str(tmp_path / "w.json")), y) == 0.5)
    with pytest.raises(ValueError):
        make_mask(MaskProviderSpec("oracle_irm", "speech"), y)


@given(st.integers(0, 2 ** 31), st.sampled_from(["oracle", "sad", "const", "mlp_sig", "mlp_relu"]))
def test_every_provider_stays_in_unit_interval(seed, which):
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-5, 5)
    y = random_stft(rng, (7, 5, 2), scale)
    if which == "oracle":
        mask = oracle_irm(y, random_stft(rng, y.shape, scale))
    elif which == "sad":
        mask = energy_sad(y, rng.uniform(-20, 5))
    elif which == "const":
        mask = constant_mask(y, rng.random())
    else:
        net = small_net(rng, 5)
        net.activation = "sigmoid" if which == "mlp_sig" else "clipped_relu_1"
        mask = mlp_infer(net, y)
    assert mask.min() >= 0.0 and mask.max() <= 1.0


def test_sad_tf_conversions(rng):
    sad = rng.random((6, 1, 2))
    tf = sad_to_tf(sad, 5)
    assert tf.shape == (6, 5, 2)
    np.testing.assert_allclose(tf_to_sad(tf), sad, rtol=1e-15)
