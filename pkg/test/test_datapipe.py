import json
import math

import numpy as np
import pytest
import torch

from adaptsr.data import (
    BicubicUpsampler,
    CorpusConfig,
    DegradationConfig,
    PairStream,
    PatchPairDataset,
    PatchSampler,
    add_gaussian_noise,
    bicubic_resize,
    cubic_kernel,
    degrade,
    gaussian_blur,
    jpeg_roundtrip,
    load_corpus,
    load_png_folder,
    make_pattern,
    make_synthetic_corpus,
    make_validation_pairs,
    resize_weights,
    sample_pairs,
    save_corpus,
    split_corpus,
    stack_pairs,
)
from adaptsr.errors import DimensionError, InvalidConfigError
from adaptsr.metrics import MetricConfig, psnr


@pytest.fixture(scope="module")
def corpus():
    return make_synthetic_corpus(8, 96, seed=0)


# =========================
# bicubic resize
# =========================
def test_cubic_kernel_values():
    x = torch.tensor([0.0, 1.0, -1.0, 2.0, -2.0, 2.5, 0.5], dtype=torch.float64)
    k = cubic_kernel(x)
    assert k[0] == 1.0
    assert torch.all(k[1:6] == 0.0)
    assert k[6] == pytest.approx(0.5625)


def test_resize_rows_sum_to_one():
    for in_size, out_size in [(8, 4), (8, 32), (17, 5), (5, 17)]:
        weights = resize_weights(in_size, out_size)
        torch.testing.assert_close(weights.sum(dim=1), torch.ones(out_size, dtype=torch.float64))


@pytest.mark.parametrize("scale", [0.25, 0.5, 2, 4])
def test_constant_image_stays_constant(scale):
    img = torch.full((3, 16, 16), 0.37, dtype=torch.float64)
    out = bicubic_resize(img, scale)
    assert out.shape == (3, int(16 * scale), int(16 * scale))
    torch.testing.assert_close(out, torch.full_like(out, 0.37), rtol=0, atol=1e-6)


def _oracle_weights(in_size, out_size):
    """Direct kernel sums with half-pixel centers and mirrored borders."""
    scale = out_size / in_size
    stretch = min(scale, 1.0)
    rows = []
    for i in range(out_size):
        center = (i + 0.5) / scale - 0.5
        row = [0.0] * in_size
        total = 0.0
        for p in range(-in_size, 2 * in_size):
            d = abs(center - p) * stretch
            if d >= 2:
                continue
            if d <= 1:
                w = 1.5 * d ** 3 - 2.5 * d ** 2 + 1
            else:
                w = -0.5 * d ** 3 + 2.5 * d ** 2 - 4 * d + 2
            q = -p - 1 if p < 0 else (2 * in_size - 1 - p if p >= in_size else p)
            row[q] += w
            total += w
        rows.append([w / total for w in row])
    return rows


def test_ramp_matches_direct_kernel_sums():
    ramp = torch.tensor([[x / 7 + y / 14 for x in range(8)] for y in range(8)], dtype=torch.float64)
    out = bicubic_resize(ramp[None], 0.5)[0]

    weights = _oracle_weights(8, 4)
    for i in range(4):
        for j in range(4):
            expected = sum(
                weights[i][p] * weights[j][q] * float(ramp[p, q])
                for p in range(8)
                for q in range(8)
            )
            assert float(out[i, j]) == pytest.approx(expected, abs=1e-10)


def test_resize_errors():
    with pytest.raises(InvalidConfigError):
        bicubic_resize(torch.rand(3, 8, 8), 0.01)
    with pytest.raises(InvalidConfigError):
        bicubic_resize(torch.rand(3, 8, 8), -2)
    with pytest.raises(DimensionError):
        bicubic_resize(torch.rand(8, 8), 2)


def test_bicubic_upsampler_shape():
    out = BicubicUpsampler(4)(torch.rand(2, 3, 5, 7))
    assert out.shape == (2, 3, 20, 28)


# =========================
# degradation
# =========================
def test_degenerate_config_is_clamped_bicubic():
    hr = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(0))
    lr = degrade(hr, DegradationConfig.bicubic(4), rng_state=5)
    assert torch.equal(lr, bicubic_resize(hr, 0.25).clamp(0.0, 1.0))


def test_degrade_is_seeded():
    hr = make_pattern("grating", 64, seed=1)
    cfg = DegradationConfig()
    first = degrade(hr, cfg, 11)
    assert first.shape == (3, 16, 16)
    assert float(first.min()) >= 0.0 and float(first.max()) <= 1.0
    assert torch.equal(first, degrade(hr, cfg, 11))
    assert not torch.equal(first, degrade(hr, cfg, 12))


def test_degrade_needs_divisible_dims():
    with pytest.raises(DimensionError):
        degrade(torch.rand(3, 30, 32), DegradationConfig(), 0)


def test_second_pass_ranges():
    second = DegradationConfig().second_pass()
    assert second.blur_sigma == (0.1, 1.0)
    assert second.noise_sigma == (0.5, 5.0)
    assert second.jpeg_quality == (80, 98)
    assert not second.second_order


def test_unknown_profile():
    unknown = DegradationConfig().unknown_profile()
    assert unknown.blur_sigma == (0.2, 3.0)
    assert unknown.noise_sigma == (0.0, 0.0)
    assert unknown.jpeg_quality == (100, 100)


def test_degradation_config_validation():
    with pytest.raises(InvalidConfigError):
        DegradationConfig(blur_kernel_size=6)
    with pytest.raises(InvalidConfigError):
        DegradationConfig(noise_sigma=(5.0, 1.0))
    with pytest.raises(InvalidConfigError):
        DegradationConfig(jpeg_quality=(60, 101))


def test_stage_identities():
    img = torch.rand(3, 16, 16)
    assert gaussian_blur(img, 0.0, 7) is img
    assert jpeg_roundtrip(img, 100) is img
    assert add_gaussian_noise(img, 0.0, np.random.default_rng(0)) is img


def test_blur_keeps_constant_image():
    img = torch.full((3, 20, 20), 0.6)
    torch.testing.assert_close(gaussian_blur(img, 1.5, 7), img, rtol=0, atol=1e-6)


def test_noise_level():
    img = torch.full((3, 64, 64), 0.5, dtype=torch.float64)
    noisy = add_gaussian_noise(img, 10.0, np.random.default_rng(0))
    assert abs(float((noisy - img).std()) - 10 / 255) < 0.003


def test_jpeg_is_lossy_but_close():
    img = make_pattern("filtered_noise", 64, seed=2)
    out = jpeg_roundtrip(img, 30)
    assert out.shape == img.shape
    assert not torch.equal(out, img)
    assert float((out - img).abs().mean()) < 0.1


# =========================
# corpus
# =========================
def test_corpus_is_seeded(corpus):
    again = make_synthetic_corpus(8, 96, seed=0)
    assert all(torch.equal(a, b) for a, b in zip(corpus, again))
    other = make_synthetic_corpus(8, 96, seed=1)
    assert not torch.equal(corpus[0], other[0])


def test_corpus_images_have_texture(corpus):
    for img in corpus:
        assert img.shape == (3, 96, 96)
        assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0
        grad = (img[:, :, 1:] - img[:, :, :-1]).abs().mean() + (img[:, 1:, :] - img[:, :-1, :]).abs().mean()
        assert float(grad) > 0


def test_stripes_lose_more_than_gradients():
    cfg = MetricConfig(use_y_channel=False)

    def round_trip_psnr(img):
        return psnr(bicubic_resize(bicubic_resize(img, 0.25), 4).clamp(0, 1), img, cfg)

    stripes = round_trip_psnr(make_pattern("stripes", 128, seed=3))
    gradient = round_trip_psnr(make_pattern("gradient", 128, seed=3))
    assert stripes < gradient


def test_unknown_pattern():
    with pytest.raises(InvalidConfigError):
        make_pattern("clouds", 32)


def test_save_and_load_png_folder(corpus, tmp_path):
    manifest = save_corpus(corpus[:3], tmp_path / "hr", seed=0)
    assert manifest["count"] == 3
    on_disk = json.loads((tmp_path / "hr" / "manifest.json").read_text())
    assert [f["name"] for f in on_disk["files"]] == ["img_0000.png", "img_0001.png", "img_0002.png"]

    loaded = load_png_folder(tmp_path / "hr")
    assert len(loaded) == 3
    for original, restored in zip(corpus, loaded):
        assert restored.shape == original.shape
        assert float((restored - original).abs().max()) <= 0.5 / 255 + 1e-6

    assert len(load_png_folder(tmp_path / "hr", limit=2)) == 2
    assert len(load_corpus(CorpusConfig(source="folder", folder=str(tmp_path / "hr"), n=2))) == 2


def test_png_folder_errors(tmp_path):
    with pytest.raises(InvalidConfigError):
        load_png_folder(tmp_path)
    with pytest.raises(InvalidConfigError):
        load_png_folder(tmp_path / "missing")
    with pytest.raises(InvalidConfigError):
        CorpusConfig(source="folder")


# =========================
# patch sampling
# =========================
def test_sample_pairs_shapes_and_seeding(corpus):
    sampler = PatchSampler(patch_size=64, seed=0)
    cfg = DegradationConfig()
    pairs = sample_pairs(corpus, sampler, cfg, n_batch=4)

    assert len(pairs) == 4
    for pair in pairs:
        assert pair.hr.shape == (3, 64, 64)
        assert pair.lr.shape == (3, 16, 16)
        assert pair.profile == "target"

    again = sample_pairs(corpus, sampler, cfg, n_batch=4)
    assert all(torch.equal(a.lr, b.lr) and torch.equal(a.hr, b.hr) for a, b in zip(pairs, again))
    other = sample_pairs(corpus, sampler, cfg, n_batch=4, batch_index=1)
    assert not all(torch.equal(a.hr, b.hr) for a, b in zip(pairs, other))


def test_pair_seed_replays_degradation(corpus):
    cfg = DegradationConfig()
    for pair in sample_pairs(corpus, PatchSampler(patch_size=32), cfg, n_batch=3):
        assert torch.equal(degrade(pair.hr, cfg, pair.seed), pair.lr)
        assert torch.equal(pair.hr, corpus[pair.image_index][:, pair.top:pair.top + 32, pair.left:pair.left + 32])


def test_profiles(corpus):
    cfg = DegradationConfig()
    unknown = sample_pairs(corpus, PatchSampler(patch_size=32), cfg, n_batch=3, unknown_mix_ratio=1.0)
    assert {p.profile for p in unknown} == {"unknown"}
    for pair in unknown:
        assert torch.equal(degrade(pair.hr, cfg.unknown_profile(), pair.seed), pair.lr)

    bicubic = sample_pairs(corpus, PatchSampler(patch_size=32), DegradationConfig.bicubic(4), n_batch=2)
    assert {p.profile for p in bicubic} == {"bicubic"}


def test_sampling_errors(corpus):
    cfg = DegradationConfig()
    with pytest.raises(DimensionError):
        sample_pairs(corpus, PatchSampler(patch_size=128), cfg, n_batch=1)
    with pytest.raises(InvalidConfigError):
        sample_pairs(corpus, PatchSampler(patch_size=30), cfg, n_batch=1)
    with pytest.raises(InvalidConfigError):
        sample_pairs(corpus, PatchSampler(patch_size=32), cfg, n_batch=1, unknown_mix_ratio=1.5)
    with pytest.raises(InvalidConfigError):
        sample_pairs([], PatchSampler(patch_size=32), cfg, n_batch=1)


def test_stack_pairs(corpus):
    lr, hr = stack_pairs(sample_pairs(corpus, PatchSampler(patch_size=32), DegradationConfig(), n_batch=5))
    assert lr.shape == (5, 3, 8, 8)
    assert hr.shape == (5, 3, 32, 32)


def test_pair_stream_is_identical_across_workers(corpus):
    sampler = PatchSampler(patch_size=32, seed=4)
    cfg = DegradationConfig(seed=2)
    with PairStream(corpus, sampler, cfg, batch=3, workers=1) as inline:
        expected = [next(inline) for _ in range(4)]
    with PairStream(corpus, sampler, cfg, batch=3, workers=3, prefetch=2) as loaded:
        got = [next(loaded) for _ in range(4)]

    for (lr_a, hr_a), (lr_b, hr_b) in zip(expected, got):
        assert torch.equal(lr_a, lr_b)
        assert torch.equal(hr_a, hr_b)


def test_pair_dataset_indexes_batch_and_slot(corpus):
    sampler = PatchSampler(patch_size=32, seed=1)
    cfg = DegradationConfig(seed=5)
    dataset = PatchPairDataset(corpus, sampler, cfg, batch=4, unknown_mix_ratio=0.5)
    pairs = sample_pairs(corpus, sampler, cfg, n_batch=4, batch_index=2, unknown_mix_ratio=0.5)

    lr, hr = dataset[2 * 4 + 3]
    assert torch.equal(lr, pairs[3].lr)
    assert torch.equal(hr, pairs[3].hr)

    with PairStream(corpus, sampler, cfg, batch=4, unknown_mix_ratio=0.5) as stream:
        for _ in range(2):
            next(stream)
        lr_batch, hr_batch = next(stream)
    assert torch.equal(lr_batch, stack_pairs(pairs)[0])
    assert torch.equal(hr_batch, stream.build(2)[1])


def test_pair_stream_rejects_bad_sizes(corpus):
    with pytest.raises(InvalidConfigError):
        PairStream(corpus, PatchSampler(patch_size=32), DegradationConfig(), batch=0)
    with pytest.raises(InvalidConfigError):
        PairStream(corpus, PatchSampler(patch_size=32), DegradationConfig(), batch=2, prefetch=0)
    with pytest.raises(InvalidConfigError):
        PatchPairDataset([], PatchSampler(patch_size=32), DegradationConfig(), batch=2)


# =========================
# validation split
# =========================
def test_split_corpus(corpus):
    train, held_out = split_corpus(corpus, val_count=6, per_image=4)
    assert len(held_out) == math.ceil(6 / 4)
    assert len(train) + len(held_out) == len(corpus)
    assert held_out[-1] is corpus[-1]
    with pytest.raises(InvalidConfigError):
        split_corpus(corpus[:2], val_count=8, per_image=4)


def test_validation_pairs(corpus):
    _, held_out = split_corpus(corpus, val_count=8, per_image=4)
    sampler = PatchSampler(patch_size=32, per_image=4)
    cfg = DegradationConfig()

    pairs = make_validation_pairs(held_out, sampler, cfg, count=8)
    assert len(pairs) == 8
    assert [p.image_index for p in pairs] == [0, 0, 0, 0, 1, 1, 1, 1]
    again = make_validation_pairs(held_out, sampler, cfg, count=8)
    assert all(torch.equal(a.lr, b.lr) for a, b in zip(pairs, again))
    with pytest.raises(InvalidConfigError):
        make_validation_pairs(held_out, sampler, cfg, count=0)
