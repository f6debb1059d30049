import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from chaosgen import dataio
from chaosgen import dynamics as dy
from chaosgen.errors import FormatError, InvalidArgument, UnsupportedArchitecture

from conftest import random_restricted


@pytest.fixture
def idx_fixture(tmp_path):
    imgs = np.zeros((3, 4, 4), dtype=np.uint8)
    imgs[1] = 255
    imgs[2, 1, 2] = 51
    labels = np.array([7, 2, 1], dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    ip.write_bytes(struct.pack(">I", 0x803) + struct.pack(">III", 3, 4, 4) + imgs.tobytes())
    lp.write_bytes(struct.pack(">I", 0x801) + struct.pack(">I", 3) + labels.tobytes())
    return ip, lp, imgs, labels


class TestTransform:
    def test_endpoints_and_midpoint(self):
        assert dataio.forward_transform([0, 255]).tolist() == [-1.0, 1.0]
        assert dataio.forward_transform(127.5) == 0.0

    def test_all_levels_round_trip(self):
        levels = np.arange(256)
        back = dataio.inverse_transform(dataio.forward_transform(levels))
        assert back.dtype == np.uint8 and np.array_equal(back, levels)

    def test_inverse_clips(self):
        assert dataio.inverse_transform([-1.5, 1.5]).tolist() == [0, 255]
        assert dataio.inverse_transform([0.0], as_image=False)[0] == 127.5

    def test_out_of_range(self):
        with pytest.raises(InvalidArgument):
            dataio.forward_transform([256])

    @settings(max_examples=50)
    @given(st.floats(-1, 1))
    def test_inverse_is_monotone_affine(self, y):
        x = dataio.inverse_transform(y, as_image=False)
        assert dataio.forward_transform(x) == pytest.approx(y, abs=1e-15)


class TestIDX:
    def test_parse(self, idx_fixture):
        ip, lp, imgs, labels = idx_fixture
        ds = dataio.load_idx(ip, lp)
        assert ds.samples.shape == (3, 16) and ds.image_shape == (4, 4)
        assert np.all(ds.samples[0] == -1) and np.all(ds.samples[1] == 1)
        assert ds.samples[2, 6] == pytest.approx(2 * 51 / 255 - 1)
        assert ds.labels.tolist() == [7, 2, 1]

    def test_row_major(self, idx_fixture):
        ip, _, imgs, _ = idx_fixture
        magic, arr = dataio.read_idx(ip)
        assert magic == 0x803 and np.array_equal(arr, imgs)

    def test_limit(self, idx_fixture):
        assert dataio.load_idx(idx_fixture[0], limit=2).n_samples == 2

    def test_write_read_round_trip(self, tmp_path):
        a = np.random.default_rng(0).integers(0, 256, (5, 3, 2), dtype=np.uint8)
        dataio.write_idx(tmp_path / "a.idx", a)
        magic, b = dataio.read_idx(tmp_path / "a.idx")
        assert magic == 0x803 and np.array_equal(a, b)

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.idx"
        p.write_bytes(b"\x01\x00\x08\x01" + struct.pack(">I", 1) + b"\x00")
        with pytest.raises(FormatError) as info:
            dataio.read_idx(p)
        assert info.value.offset == 0

    def test_labels_are_not_images(self, idx_fixture):
        with pytest.raises(FormatError):
            dataio.load_idx(idx_fixture[1])

    def test_truncated_payload(self, tmp_path, idx_fixture):
        data = idx_fixture[0].read_bytes()
        p = tmp_path / "short.idx"
        p.write_bytes(data[:-5])
        with pytest.raises(FormatError) as info:
            dataio.read_idx(p)
        assert info.value.offset == len(data) - 5

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "h.idx"
        p.write_bytes(b"\x00\x00\x08\x03\x00\x00")
        with pytest.raises(FormatError):
            dataio.read_idx(p)


class TestMinibatch:
    @pytest.fixture
    def ds(self):
        return dataio.Dataset(np.linspace(-1, 1, 50).reshape(50, 1))

    def test_distinct_rows(self, ds):
        b = dataio.minibatch(ds, 20, seed=0, epoch_index=3)
        assert b.shape == (20, 1) and len(np.unique(b)) == 20

    def test_reproducible_and_epoch_dependent(self, ds):
        a = dataio.minibatch(ds, 10, 1, 0)
        assert np.array_equal(a, dataio.minibatch(ds, 10, 1, 0))
        assert not np.array_equal(a, dataio.minibatch(ds, 10, 1, 1))

    def test_full_batch_is_permutation(self, ds):
        assert np.array_equal(np.sort(dataio.minibatch(ds, 50, 0, 0), axis=0), ds.samples)

    @pytest.mark.parametrize("m", [0, 51])
    def test_bounds(self, ds, m):
        with pytest.raises(InvalidArgument):
            dataio.minibatch(ds, m, 0, 0)

    def test_uniform_marginals(self, ds):
        hits = np.zeros(50)
        for e in range(400):
            b = dataio.minibatch(ds, 5, 0, e)
            hits[np.rint((b[:, 0] + 1) * 49 / 2).astype(int)] += 1
        # each row expected 40 times
        assert hits.min() > 15 and hits.max() < 70


class TestSynthetic:
    def test_two_clusters(self):
        ds = dataio.synthetic_dataset("two-clusters", 100, 8, seed=0)
        assert ds.samples.shape == (100, 8)
        signs = np.sign(ds.samples.mean(axis=1))
        assert abs(np.sum(signs)) <= 2
        assert np.all(np.abs(ds.samples) <= 1)

    def test_bars_and_stripes(self):
        ds = dataio.synthetic_dataset("bars-and-stripes", 30, 16, seed=1)
        for row in ds.samples:
            img = row.reshape(4, 4)
            assert set(np.unique(img)) <= {-1.0, 1.0}
            assert np.all(img == img[:1]) or np.all(img == img[:, :1])

    def test_digits_shape_and_range(self):
        ds = dataio.synthetic_dataset("downscaled-digits", 20, 64, seed=0)
        assert ds.samples.shape == (20, 64) and ds.image_shape == (8, 8)
        assert ds.samples.min() >= -1 and ds.samples.max() <= 1
        assert ds.samples.std() > 0.1

    def test_non_square_rejected(self):
        with pytest.raises(InvalidArgument):
            dataio.synthetic_dataset("downscaled-digits", 5, 60, seed=0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            dataio.synthetic_dataset("noise", 5, 4, seed=0)

    def test_reproducible(self):
        a = dataio.synthetic_dataset("downscaled-digits", 5, 49, seed=3).samples
        assert np.array_equal(a, dataio.synthetic_dataset("downscaled-digits", 5, 49, seed=3).samples)

    @pytest.mark.parametrize("out_side", [4, 7, 8, 14, 28])
    def test_downscale_against_naive_oracle(self, out_side):
        img = np.random.default_rng(out_side).uniform(0, 255, (2, 28, 28))
        # upsample by out_side, then average 28x28 blocks: exact area weighting
        big = np.repeat(np.repeat(img, out_side, axis=1), out_side, axis=2)
        want = big.reshape(2, out_side, 28, out_side, 28).mean(axis=(2, 4))
        assert np.allclose(dataio.area_downscale(img, out_side), want, atol=1e-9)

    def test_downscale_from_idx(self, tmp_path):
        imgs = np.full((3, 28, 28), 255, dtype=np.uint8)
        dataio.write_idx(tmp_path / "d.idx", imgs)
        ds = dataio.downscaled_digits(2, 16, 0, images_path=tmp_path / "d.idx")
        assert np.allclose(ds.samples, 1.0)


class TestImages:
    def test_pgm_round_trip_with_pillow(self, tmp_path):
        pix = np.random.default_rng(0).integers(0, 256, (5, 7), dtype=np.uint8)
        dataio.write_pgm(tmp_path / "a.pgm", pix)
        assert np.array_equal(np.asarray(Image.open(tmp_path / "a.pgm")), pix)
        assert np.array_equal(dataio.read_pgm(tmp_path / "a.pgm"), pix)

    def test_grid_layout(self, tmp_path):
        samples = np.stack([np.full(4, v) for v in (-1.0, 1.0, 0.0)])
        grid = dataio.export_image_grid(samples, (2, 2), 2, tmp_path / "g.pgm")
        assert grid.shape == (4, 4)
        assert np.all(grid[:2, :2] == 0) and np.all(grid[:2, 2:] == 255)
        assert np.all(grid[2:, :2] == 128) and np.all(grid[2:, 2:] == 0)

    def test_black_for_minus_one(self, tmp_path):
        grid = dataio.export_image_grid(-np.ones((1, 9)), (3, 3), 1, tmp_path / "b.pgm")
        assert np.all(np.asarray(Image.open(tmp_path / "b.pgm")) == 0) and grid.max() == 0

    def test_receptive_fields(self, tmp_path):
        p = random_restricted(784, 20, 0)
        out = tmp_path / "rf.pgm"
        grid = dataio.export_receptive_fields(p, range(9), out)
        assert grid.shape == (84, 84)
        assert np.asarray(Image.open(out)).shape == (84, 84)
        assert grid.min() == 0 and grid.max() == 255
        scale = (tmp_path / "rf.pgm.scale.txt").read_text()
        lo = float(scale.split("min=")[1].split()[0])
        fields = (p.W[:, :9] + p.A[:, :9]) / p.g
        assert lo == fields.min()

    def test_receptive_fields_zero_gain(self, tmp_path):
        p = dy.init_restricted(4, 2, 0.0, 0)
        grid = dataio.export_receptive_fields(p, [0, 1], tmp_path / "z.pgm")
        assert np.all(grid == 0)

    def test_receptive_fields_rejects(self, tmp_path):
        with pytest.raises(InvalidArgument):
            dataio.export_receptive_fields(random_restricted(4, 2, 0), [2], tmp_path / "x.pgm")
        with pytest.raises(UnsupportedArchitecture):
            dataio.export_receptive_fields(dy.init_unrestricted(4, 1.0, 0), [0], tmp_path / "x.pgm")


class TestMatrix:
    def test_round_trip(self, tmp_path):
        m = np.random.default_rng(0).normal(size=(3, 5))
        dataio.write_matrix(tmp_path / "m.mat", m)
        raw = (tmp_path / "m.mat").read_bytes()
        assert raw[:8] == b"CGENMAT\x00" and struct.unpack("<II", raw[8:16]) == (3, 5)
        assert len(raw) == 16 + 15 * 8
        assert np.array_equal(dataio.read_matrix(tmp_path / "m.mat"), m)

    def test_truncated(self, tmp_path):
        dataio.write_matrix(tmp_path / "m.mat", np.ones((2, 2)))
        p = tmp_path / "m.mat"
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError):
            dataio.read_matrix(p)
