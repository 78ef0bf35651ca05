"""Tests for dataset I/O, pairing checks, and fold assignment."""

import json

import numpy as np
import pytest

from litegan.data import (SynthConfig, synth_generate, write_dataset, load_dataset,
                          make_folds, save_image)


@pytest.fixture()
def small_dataset(tmp_path):
    cfg = SynthConfig(n_samples=4, seed=0)
    write_dataset(synth_generate(cfg), tmp_path / "d", cfg)
    return tmp_path / "d"


class TestWriteLoad:
    def test_round_trip_images(self, small_dataset):
        ds = load_dataset(small_dataset, mode="paired")
        assert ds.ids == ["s0000", "s0001", "s0002", "s0003"]
        assert set(ds.domains) == {"confocal", "sted", "dsted", "truth"}
        for img in ds.images("sted").values():
            assert img.dtype == np.uint16 and img.shape == (128, 128)

    def test_manifest_quality_and_config(self, small_dataset):
        ds = load_dataset(small_dataset)
        assert all(q == "high" for q in ds.quality.values())
        manifest = json.loads((small_dataset / "manifest.json").read_text())
        assert manifest["generator"]["seed"] == 0

    def test_rerun_identical_bytes(self, tmp_path):
        cfg = SynthConfig(n_samples=2, seed=9)
        write_dataset(synth_generate(cfg), tmp_path / "a", cfg)
        write_dataset(synth_generate(cfg), tmp_path / "b", cfg)
        for rel in ("confocal/s0000.png", "sted/s0001.png", "manifest.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_paired_mode_rejects_orphan(self, small_dataset):
        (small_dataset / "sted" / "s0003.png").unlink()
        with pytest.raises(ValueError, match="sted is missing s0003"):
            load_dataset(small_dataset, mode="paired")

    def test_unpaired_mode_tolerates_orphan(self, small_dataset):
        (small_dataset / "sted" / "s0003.png").unlink()
        ds = load_dataset(small_dataset, mode="unpaired")
        assert len(ds.images("sted")) == 3
        assert len(ds.images("confocal")) == 4

    def test_missing_root(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")

    def test_no_domain_dirs(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(FileNotFoundError, match="domain"):
            load_dataset(tmp_path / "empty")

    def test_unknown_mode(self, small_dataset):
        with pytest.raises(ValueError):
            load_dataset(small_dataset, mode="semi")


class TestFolds:
    def test_partition_properties(self):
        ids = [f"s{i}" for i in range(10)]
        fa = make_folds(ids, k=5, seed=0)
        all_val = [i for f in range(5) for i in fa.ids_in_fold(f)]
        assert sorted(all_val) == sorted(ids)
        assert all(len(fa.ids_in_fold(f)) == 2 for f in range(5))

    def test_train_val_disjoint_and_complete(self):
        ids = [f"s{i}" for i in range(7)]
        fa = make_folds(ids, k=3, seed=1)
        for f in range(3):
            val = set(fa.ids_in_fold(f))
            train = set(fa.ids_not_in_fold(f))
            assert val.isdisjoint(train)
            assert val | train == set(ids)

    def test_deterministic_given_seed(self):
        ids = [f"s{i}" for i in range(12)]
        assert make_folds(ids, 4, seed=3).fold_of == make_folds(ids, 4, seed=3).fold_of
        assert make_folds(ids, 4, seed=3).fold_of != make_folds(ids, 4, seed=4).fold_of

    def test_too_few_ids(self):
        with pytest.raises(ValueError):
            make_folds(["a", "b"], k=5)

    def test_k_minimum(self):
        with pytest.raises(ValueError):
            make_folds(list("abcdef"), k=1)


class TestImageIO:
    def test_uint8_round_trip(self, tmp_path):
        from litegan.data import load_image
        img = (np.random.default_rng(0).random((32, 32)) * 255).astype(np.uint8)
        save_image(tmp_path / "x.png", img)
        assert np.array_equal(load_image(tmp_path / "x.png"), img)

    def test_uint16_round_trip(self, tmp_path):
        from litegan.data import load_image
        img = (np.random.default_rng(1).random((32, 32)) * 65535).astype(np.uint16)
        save_image(tmp_path / "x.png", img)
        back = load_image(tmp_path / "x.png")
        assert back.dtype == np.uint16
        assert np.array_equal(back, img)

    def test_float_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(tmp_path / "x.png", np.zeros((4, 4), dtype=np.float32))

    def test_unreadable_file(self, tmp_path):
        from litegan.data import load_image
        (tmp_path / "junk.png").write_bytes(b"not a png")
        with pytest.raises(IOError):
            load_image(tmp_path / "junk.png")
