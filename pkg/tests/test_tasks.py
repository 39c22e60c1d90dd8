import math

import numpy as np
import pytest

from camfield.config import TrainConfig
from camfield.image_io import read_ppm, write_ppm
from camfield.tasks import (
    ImageDataset,
    eval_signal1d,
    make_bandnoise,
    make_checkerboard,
    make_natural_image,
    make_ray_dataset,
    make_signal1d,
    make_video_dataset,
    psnr,
    split_generalization,
    train,
)


class TestSignal1D:
    def test_zero_phase_at_origin(self):
        spec = make_signal1d(0)
        spec.phases = np.zeros(10)
        assert eval_signal1d(spec, 0.0) == pytest.approx(0.0)

    def test_zero_phase_at_one(self):
        spec = make_signal1d(0)
        spec.phases = np.zeros(10)
        # every k_i is an integer, so sin(2 pi k) = 0
        assert eval_signal1d(spec, 1.0) == pytest.approx(0.0, abs=1e-9)

    def test_term_by_term_oracle(self):
        spec = make_signal1d(123)
        x = 0.1
        want = 0.0
        for i in range(10):
            k = 5 * (i + 1)
            want += math.sin(2 * math.pi * k * x + spec.phases[i])
        assert eval_signal1d(spec, x) == pytest.approx(want, rel=1e-12)

    def test_bounded_by_ten(self):
        spec = make_signal1d(7)
        x = np.linspace(0, 1, 2000)
        assert np.abs(spec.evaluate(x)).max() <= 10.0

    def test_reproducible_from_seed(self):
        a = make_signal1d(5)
        b = make_signal1d(5)
        np.testing.assert_array_equal(a.phases, b.phases)


class TestPsnr:
    def test_identical_is_infinite(self):
        x = np.random.default_rng(0).uniform(0, 1, (4, 4))
        assert math.isinf(psnr(x, x))

    def test_twenty_db(self):
        target = np.zeros(100)
        pred = np.full(100, 0.1)  # mse 0.01
        assert psnr(pred, target) == pytest.approx(20.0)

    def test_thirty_db(self):
        target = np.zeros(1000)
        pred = np.full(1000, math.sqrt(0.001))
        assert psnr(pred, target) == pytest.approx(30.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(np.zeros(3), np.zeros(4))


class TestImageDataset:
    def test_pixel_center_convention(self):
        img = np.zeros((2, 4, 3), dtype=np.float32)
        ds = ImageDataset.from_array(img)
        # first pixel (r=0, c=0) -> ((0+.5)/4, (0+.5)/2)
        np.testing.assert_allclose(ds.coords[0], [0.125, 0.25])
        # last pixel (r=1, c=3)
        np.testing.assert_allclose(ds.coords[-1], [0.875, 0.75])
        assert (ds.coords > 0).all() and (ds.coords < 1).all()

    def test_split_counts(self):
        img = np.random.default_rng(0).uniform(0, 1, (4, 4, 3)).astype(np.float32)
        tr, ev = split_generalization(img)
        assert len(tr) == 4
        assert len(ev) == 16

    def test_split_targets_are_even_pixels(self):
        img = np.arange(4 * 4 * 3, dtype=np.float32).reshape(4, 4, 3)
        tr, _ = split_generalization(img)
        np.testing.assert_array_equal(tr.image(), img[::2, ::2])

    def test_split_coords_are_block_centers(self):
        img = np.zeros((4, 4, 3), dtype=np.float32)
        tr, ev = split_generalization(img)
        assert (tr.coords > 0).all() and (tr.coords < 1).all()
        # half-res lattice of a 4x4 image: centers at 0.25 and 0.75
        np.testing.assert_allclose(sorted(set(tr.coords[:, 0])), [0.25, 0.75])

    def test_odd_dims_rejected(self):
        with pytest.raises(ValueError, match="even"):
            split_generalization(np.zeros((3, 4, 3)))


class TestPpmRoundTrip:
    def test_p6(self, tmp_path):
        img = np.random.default_rng(1).integers(0, 256, (5, 7, 3), dtype=np.uint8)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        np.testing.assert_array_equal(read_ppm(path), img)

    def test_comment_and_whitespace_header(self, tmp_path):
        path = tmp_path / "img.ppm"
        payload = bytes(range(12))
        path.write_bytes(b"P6\n# a comment\n 2\t2 \n255\n" + payload)
        arr = read_ppm(path)
        assert arr.shape == (2, 2, 3)
        assert arr.tobytes() == payload

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "img.ppm"
        path.write_bytes(b"P6\n4 4\n255\n\x00\x00")
        with pytest.raises(ValueError, match="truncated"):
            read_ppm(path)

    def test_non_8bit_rejected(self, tmp_path):
        path = tmp_path / "img.ppm"
        path.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
        with pytest.raises(ValueError, match="8-bit"):
            read_ppm(path)


class TestGenerators:
    def test_natural_image_range_and_determinism(self):
        a = make_natural_image(64, seed=7)
        b = make_natural_image(64, seed=7)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (64, 64, 3)
        assert a.min() > 0.0 and a.max() < 1.0

    def test_checkerboard(self):
        img = make_checkerboard(8, period=2)
        assert img[0, 0, 0] == 0.0
        assert img[0, 2, 0] == 1.0
        assert img[2, 0, 0] == 1.0

    def test_bandnoise(self):
        img = make_bandnoise(16, seed=3)
        assert img.shape == (16, 16, 3)
        assert 0.0 < img.min() and img.max() < 1.0

    def test_ray_dataset_shapes(self):
        coords, target = make_ray_dataset(0, n_rays=8, samples_per_ray=4)
        assert coords.shape == (8, 4, 5)
        assert target.shape == (8, 4, 1)
        assert coords.min() >= 0 and coords.max() <= 1
        # directional columns constant along each ray
        assert (coords[:, :, 3].std(axis=1) == 0).all()

    def test_video_dataset_shapes(self):
        t, video = make_video_dataset(0, frames=6, channels=2, height=4, width=4)
        assert t.shape == (6, 1)
        assert video.shape == (6, 2, 4, 4)
        assert video.min() > 0 and video.max() < 1


class TestTraining:
    def test_constant_image_learns_fast(self, tmp_path):
        img = (np.full((16, 16, 3), 0.42 * 255, dtype=np.uint8))
        path = tmp_path / "const.ppm"
        write_ppm(path, img)
        cfg = TrainConfig(
            task="image-regression", image=str(path), seed=0,
            hidden=(16, 16), encoding="fourier", fourier_frequencies=8,
            fourier_sigma=2.0, head="sigmoid", cam_layers=(),
            grid_resolution=(4, 4), lr_network=1e-2, lr_grid=1e-2,
            milestones=(), iterations=50, batch=0, psnr_every=0,
        )
        run = train(cfg)
        assert run.final_psnr > 40.0

    def test_reproducible_given_seed(self, tmp_path):
        img = (make_natural_image(16, seed=1) * 255).astype(np.uint8)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        cfg = TrainConfig(
            task="image-regression", image=str(path), seed=3,
            hidden=(16, 16), encoding="fourier", fourier_frequencies=8,
            fourier_sigma=4.0, head="sigmoid", cam_layers=(1,),
            grid_resolution=(4, 4), lr_network=1e-3, lr_grid=1e-2,
            milestones=(), iterations=40, batch=128, psnr_every=0,
        )
        a = train(cfg)
        b = train(cfg)
        assert abs(a.final_psnr - b.final_psnr) < 0.05

    def test_signal1d_smoke(self):
        cfg = TrainConfig(task="signal1d", seed=0, samples=64, hidden=(16, 16),
                          encoding="pe", pe_frequencies=4, iterations=30,
                          batch=0, psnr_every=0)
        run = train(cfg)
        assert math.isfinite(run.final_loss)
        assert run.best_loss <= run.log[9][1]  # improved on iteration 10's loss

    def test_synthetic_ray_smoke(self):
        cfg = TrainConfig(task="synthetic-ray", seed=0, rays=16, ray_samples=4,
                          hidden=(8, 8), encoding="none", cam_mode="ray",
                          cam_layers=(1, 2), cam_selector=(3, 4),
                          grid_resolution=(4, 4), iterations=25, batch=0,
                          psnr_every=0, lr_grid=1e-2)
        run = train(cfg)
        assert math.isfinite(run.final_loss)
        assert run.final_loss < run.log[0][1]

    def test_synthetic_video_smoke(self):
        cfg = TrainConfig(task="synthetic-video-tensor", seed=0, video_frames=6,
                          video_channels=2, video_height=4, video_width=4,
                          hidden=(16,), encoding="pe", pe_frequencies=4,
                          cam_mode="channel", cam_layers=(1,),
                          grid_resolution=(5,), grid_channels="match",
                          head="sigmoid", iterations=25, batch=0, psnr_every=0,
                          lr_grid=1e-2)
        run = train(cfg)
        assert math.isfinite(run.final_loss)
        assert run.final_loss < run.log[0][1]

    def test_artifacts_written(self, tmp_path):
        cfg = TrainConfig(task="signal1d", seed=0, samples=32, hidden=(8, 8),
                          encoding="pe", pe_frequencies=2, iterations=5,
                          batch=0, psnr_every=2)
        out = tmp_path / "run"
        out.mkdir()
        train(cfg, out_dir=str(out))
        assert (out / "metrics.tsv").exists()
        assert (out / "checkpoint.bin").exists()
        lines = (out / "metrics.tsv").read_text().strip().split("\n")
        assert len(lines) == 5
        fields = lines[1].split("\t")
        assert len(fields) == 4  # iteration, loss, psnr, lr
        assert fields[0] == "1"
        assert fields[2] != ""  # psnr logged on the every-2 cadence
