import numpy as np
import pytest
from hypothesis import given, strategies as st

from farfield.beamform import (ReferenceSpec, apply_beamformer, average_masks, estimate_psd,
                               mvdr_filter, mvdr_pipeline, select_reference)
from farfield.masks import oracle_irm
from farfield.simulation import (NoiseConfig, RirConfig, SceneConfig, metric_segsnr,
                                 render_scene)
from farfield.stft import istft, stft

import naive
from conftest import random_stft


def random_pd(rng, m):
    a = random_stft(rng, (m, 2 * m))
    return a @ a.conj().T + 0.1 * np.eye(m)


# ---------------------------------------------------------------- masks and PSDs

def test_average_identical_masks(rng):
    w = np.repeat(rng.random((5, 4, 1)), 3, axis=2)
    np.testing.assert_allclose(average_masks(w), w[:, :, 0], rtol=0, atol=1e-15)


def test_average_two_extremes():
    w = np.zeros((1, 1, 2))
    w[0, 0, 1] = 1.0
    assert average_masks(w)[0, 0] == 0.5


def test_average_matches_mean_oracle(rng):
    w = rng.random((6, 5, 4))
    expect = (w[..., 0] + w[..., 1] + w[..., 2] + w[..., 3]) / 4
    np.testing.assert_allclose(average_masks(w), expect, rtol=0, atol=1e-15)


def test_psd_single_frame_outer_product(rng):
    d = np.zeros((6, 2, 3), complex)
    d0 = random_stft(rng, (2, 3))
    d[4] = d0
    phi = estimate_psd(d, np.ones((6, 2)))
    for b in range(2):
        outer = np.outer(d0[b], d0[b].conj())
        # equal up to the last bit, which hermitisation may touch
        assert np.abs(phi[b] - outer).max() <= 4 * np.finfo(float).eps * np.abs(outer).max()


def test_psd_zero_mask(rng):
    assert not estimate_psd(random_stft(rng, (6, 2, 3)), np.zeros((6, 2))).any()


def test_psd_matches_loop_accumulation(rng):
    d = random_stft(rng, (20, 4, 3))
    w = rng.random((20, 4))
    expect = naive.psd(d, w)
    np.testing.assert_allclose(estimate_psd(d, w), expect, rtol=0, atol=1e-12 * np.abs(expect).max())


def test_psd_normalisation_flag(rng):
    d = random_stft(rng, (20, 4, 3))
    w = rng.random((20, 4))
    ratio = estimate_psd(d, w, normalize=True) * w.sum(axis=0)[:, None, None]
    np.testing.assert_allclose(ratio, estimate_psd(d, w), rtol=1e-13)


@given(st.integers(0, 2 ** 31), st.integers(1, 6))
def test_psd_hermitian_and_psd(seed, m):
    rng = np.random.default_rng(seed)
    phi = estimate_psd(random_stft(rng, (int(rng.integers(1, 30)), 3, m)), rng.random((1, 3)).repeat(1, 0))
    assert np.abs(phi - phi.conj().transpose(0, 2, 1)).max() <= 1e-12 * max(np.abs(phi).max(), 1)
    for b in range(3):
        tr = np.trace(phi[b]).real
        assert np.linalg.eigvalsh(phi[b]).min() >= -1e-10 * tr


def test_psd_rejects_channel_dependent_mask(rng):
    with pytest.raises(ValueError):
        estimate_psd(random_stft(rng, (4, 2, 2)), np.ones((4, 2, 2)))


# ---------------------------------------------------------------- reference

def test_fixed_reference_channel_two_of_eight():
    phi = np.tile(np.eye(8), (3, 1, 1))
    u = select_reference(ReferenceSpec("fixed", 2), phi, phi)
    assert np.array_equal(u, np.eye(8)[2])


def test_fixed_reference_out_of_range():
    phi = np.tile(np.eye(2), (3, 1, 1))
    with pytest.raises(ValueError):
        select_reference(ReferenceSpec("fixed", 2), phi, phi)


def test_soft_reference_symmetric_statistics(rng):
    phi = np.tile(np.eye(4) * 2.0, (5, 1, 1))
    np.testing.assert_allclose(select_reference(ReferenceSpec("soft"), phi, phi), 0.25, rtol=1e-15)


def test_soft_reference_favours_high_snr_channel():
    speech = np.tile(np.eye(4), (5, 1, 1))
    speech[:, 0, 0] = 10.0
    noise = np.tile(np.eye(4), (5, 1, 1))
    u = select_reference(ReferenceSpec("soft"), speech, noise)
    assert np.all(u[0] > u[1:]) and abs(u.sum() - 1) < 1e-15
    np.testing.assert_allclose(u, np.array([10, 1, 1, 1]) / 13, rtol=1e-9)


@given(st.integers(0, 2 ** 31), st.integers(1, 8))
def test_soft_reference_is_a_distribution(seed, m):
    rng = np.random.default_rng(seed)
    phi_s = np.stack([random_pd(rng, m) for _ in range(3)])
    phi_n = np.stack([random_pd(rng, m) for _ in range(3)])
    u = select_reference(ReferenceSpec("soft"), phi_s, phi_n)
    assert np.all(u >= 0) and abs(u.sum() - 1) < 1e-12


def test_reference_spec_validation():
    with pytest.raises(ValueError):
        ReferenceSpec("attention")
    with pytest.raises(ValueError):
        ReferenceSpec("fixed", -1)


# ---------------------------------------------------------------- filter

@given(st.integers(0, 2 ** 31), st.integers(2, 8))
def test_distortionless_at_reference(seed, m):
    rng = np.random.default_rng(seed)
    v = random_stft(rng, (m,))
    phi_s = (3.0 * np.outer(v, v.conj()))[None]
    phi_n = random_pd(rng, m)[None]
    r = int(rng.integers(m))
    f = mvdr_filter(phi_s, phi_n, np.eye(m)[r])
    assert abs(f[0].conj() @ v - v[r]) < 1e-10 * max(1.0, np.abs(v).max())


def test_hand_computed_diagonal_case():
    f = mvdr_filter(np.diag([2.0, 0.0])[None], np.eye(2)[None], np.array([1.0, 0.0]))
    np.testing.assert_allclose(f[0], [1.0, 0.0], atol=1e-15)


def test_filter_matches_dense_inverse_oracle(rng):
    m = 4
    phi_s = np.stack([random_pd(rng, m) - 0.1 * np.eye(m) for _ in range(6)])
    phi_n = np.stack([random_pd(rng, m) for _ in range(6)])
    u = rng.random(m)
    u /= u.sum()
    expect = naive.mvdr(phi_s, phi_n, u, 1e-6)
    np.testing.assert_allclose(mvdr_filter(phi_s, phi_n, u), expect, rtol=0, atol=1e-10)


def test_unbeamformable_bin_falls_back_to_reference():
    phi_s = np.zeros((3, 2, 2), complex)
    phi_s[0] = np.eye(2)
    phi_n = np.tile(np.eye(2), (3, 1, 1))
    phi_n[2] = 0.0
    u = np.array([0.0, 1.0])
    f, fallback = mvdr_filter(phi_s, phi_n, u, return_fallback=True)
    assert list(fallback) == [False, True, True]
    assert np.array_equal(f[1], u) and np.array_equal(f[2], u)
    assert np.isfinite(f).all()


# ---------------------------------------------------------------- application

def test_one_hot_filter_selects_channel(rng):
    d = random_stft(rng, (7, 4, 3))
    x = apply_beamformer(np.tile(np.eye(3)[1], (4, 1)), d)
    assert np.array_equal(x[:, :, 0], d[:, :, 1])


def test_uniform_filter_on_identical_channels(rng):
    d = np.repeat(random_stft(rng, (7, 4, 1)), 4, axis=2)
    x = apply_beamformer(np.full((4, 4), 0.25), d)
    np.testing.assert_allclose(x, d[:, :, :1], rtol=1e-15)


def test_apply_matches_inner_product_oracle(rng):
    d = random_stft(rng, (7, 4, 3))
    f = random_stft(rng, (4, 3))
    x = apply_beamformer(f, d)
    for t in range(7):
        for b in range(4):
            assert abs(x[t, b, 0] - np.vdot(f[b], d[t, b])) < 1e-13


def test_apply_bin_mismatch(rng):
    with pytest.raises(ValueError):
        apply_beamformer(np.ones((3, 2)), random_stft(rng, (5, 4, 2)))


# ---------------------------------------------------------------- pipeline

def test_equal_masks_give_scaled_reference(rng):
    d = random_stft(rng, (30, 5, 4))
    ones = np.ones(d.shape)
    x, info = mvdr_pipeline(d, ones, ones, ReferenceSpec("fixed", 1), diag_load=0.0,
                            return_info=True)
    np.testing.assert_allclose(x[:, :, 0], d[:, :, 1] / 4, rtol=1e-10)
    assert info["reference_weights"] == [0.0, 1.0, 0.0, 0.0]
    assert info["fallback_bins"] == 0


def test_identical_channels_output_proportional(rng):
    d = np.repeat(random_stft(rng, (30, 5, 1)), 3, axis=2)
    x = mvdr_pipeline(d, rng.random(d.shape), rng.random(d.shape))[:, :, 0]
    ratio = x / d[:, :, 0]
    assert np.abs(ratio - ratio[:1]).max() < 1e-8 * np.abs(ratio).max()


def test_permutation_with_reference_remap(rng):
    d = random_stft(rng, (40, 6, 4))
    ws, wn = rng.random(d.shape), rng.random(d.shape)
    perm = np.array([3, 1, 0, 2])
    a = mvdr_pipeline(d, ws, wn, ReferenceSpec("fixed", 0))
    new_ref = int(np.flatnonzero(perm == 0)[0])
    b = mvdr_pipeline(d[:, :, perm], ws[:, :, perm], wn[:, :, perm], ReferenceSpec("fixed", new_ref))
    assert np.abs(a - b).max() < 1e-10 * np.abs(a).max()


@given(st.floats(1e-3, 1e3))
def test_scale_covariance(alpha):
    rng = np.random.default_rng(3)
    d = random_stft(rng, (30, 5, 3))
    ws, wn = rng.random(d.shape), rng.random(d.shape)
    a = alpha * mvdr_pipeline(d, ws, wn)
    b = mvdr_pipeline(alpha * d, ws, wn)
    assert np.abs(a - b).max() < 1e-9 * np.abs(a).max()


def test_sad_mask_equals_expanded_tf_mask(rng):
    d = random_stft(rng, (30, 5, 3))
    ws, wn = rng.random((30, 1, 3)), rng.random((30, 1, 3))
    a = mvdr_pipeline(d, ws, wn)
    b = mvdr_pipeline(d, np.repeat(ws, 5, axis=1), np.repeat(wn, 5, axis=1))
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_oracle_masks_raise_segmental_snr():
    b = render_scene(SceneConfig(seed=0, channels=4, duration=2.0,
                                 rir=RirConfig(t60_like_decay=0.3),
                                 noise=NoiseConfig("diffuse_lowpass", snr_db=0.0)))
    ys = stft(b.observed)
    r, n = stft(b.reverberant).data, stft(b.noise).data
    x = mvdr_pipeline(ys.data, oracle_irm(r, n), oracle_irm(n, r))
    out = metric_segsnr(istft(ys.with_data(x)).samples[:, 0], b.reverberant.samples[:, 0])
    best = max(metric_segsnr(b.observed.samples[:, m], b.reverberant.samples[:, m])
               for m in range(4))
    assert out > best + 1.0
