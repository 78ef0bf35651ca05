"""Tests for the binary checkpoint archive."""

import numpy as np
import pytest

from litegan.checkpoint import (Checkpoint, CheckpointError, save_checkpoint,
                                load_checkpoint, MAGIC)


def sample_arrays():
    rng = np.random.default_rng(0)
    return {
        "g/downs.0.weight": rng.standard_normal((8, 1, 3, 3)).astype(np.float32),
        "g/downs.0.bias": rng.standard_normal(8).astype(np.float32),
        "optim/g/m/downs.0.weight": np.zeros((8, 1, 3, 3), dtype=np.float32),
    }


def sample_manifest():
    return {"trainer": "pix2pix", "epoch": "5", "seed": "3",
            "gen.policy": "fixed:8"}


class TestRoundTrip:
    def test_arrays_bitwise_equal(self, tmp_path):
        path = tmp_path / "a.ckpt"
        arrays = sample_arrays()
        save_checkpoint(path, sample_manifest(), arrays)
        ck = load_checkpoint(path)
        assert set(ck.arrays) == set(arrays)
        for name in arrays:
            assert ck.arrays[name].dtype == np.float32
            assert np.array_equal(ck.arrays[name], arrays[name])

    def test_save_load_save_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, sample_manifest(), sample_arrays())
        ck = load_checkpoint(a)
        save_checkpoint(b, ck.manifest, ck.arrays)
        assert a.read_bytes() == b.read_bytes()

    def test_manifest_fields_surface(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, sample_manifest(), sample_arrays())
        ck = load_checkpoint(path)
        assert ck.epoch == 5
        assert ck.trainer == "pix2pix"
        assert ck.manifest["gen.policy"] == "fixed:8"

    def test_entry_order_independent(self, tmp_path):
        arrays = sample_arrays()
        reordered = dict(reversed(list(arrays.items())))
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, sample_manifest(), arrays)
        save_checkpoint(b, sample_manifest(), reordered)
        assert a.read_bytes() == b.read_bytes()


class TestCorruption:
    def test_truncated_file_named_error(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, sample_manifest(), sample_arrays())
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "a.ckpt"
        path.write_bytes(b"GARBAGE!" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, sample_manifest(), sample_arrays())
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC) - 1] = 9  # bump the format-version byte
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, sample_manifest(), sample_arrays())
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_no_partial_state_on_failure(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, sample_manifest(), sample_arrays())
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestManifestFormat:
    def test_reserved_characters_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_checkpoint(tmp_path / "a.ckpt", {"bad\nkey": "1"}, {})

    def test_scalar_array_supported(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, sample_manifest(), {"s": np.float32(2.5)})
        ck = load_checkpoint(path)
        assert ck.arrays["s"].shape == ()
        assert float(ck.arrays["s"]) == 2.5
