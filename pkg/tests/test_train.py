"""Tests for the training harness: estimators, CV, inference, diagnostics."""

import numpy as np
import pytest
import torch

from litegan import (CycleGANTranslator, Pix2PixTranslator, TrainConfig,
                     cross_validate, diagnose_quality, infer, reinitialize,
                     time_inference, train_pix2pix, generator_from_checkpoint,
                     load_checkpoint)
from litegan.models import Fixed, GeneratorSpec
from litegan.data import SynthConfig, synth_generate, normalize_to_net
from litegan.data.datasets import Dataset


# small custom architecture so unit tests stay fast (32x32, 5 levels)
TINY = GeneratorSpec(policy=Fixed(4), levels=5, image_size=32)


def tiny_pairs(n=2, seed=0, size=32):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, size, size)).astype(np.float32)
    y = rng.uniform(-1, 1, (n, size, size)).astype(np.float32)
    return x, y


class TestPix2PixFit:
    def test_step_count_one_epoch(self):
        x, y = tiny_pairs(2)
        est = Pix2PixTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1,
                                seed=0).fit(x, y)
        assert est.history_.steps == 2
        assert len(est.history_.epoch_losses) == 1

    def test_checkpoints_at_interval(self, tmp_path):
        x, y = tiny_pairs(2)
        est = Pix2PixTranslator(model_preset=TINY, epochs=10, checkpoint_interval=5,
                                seed=0, run_dir=str(tmp_path)).fit(x, y)
        names = sorted(p.name for p in tmp_path.glob("*.ckpt"))
        assert names == ["epoch_0005.ckpt", "epoch_0010.ckpt"]
        assert load_checkpoint(tmp_path / "epoch_0010.ckpt").epoch == 10

    def test_interval_must_divide_epochs(self):
        x, y = tiny_pairs(2)
        with pytest.raises(ValueError, match="divide"):
            Pix2PixTranslator(model_preset=TINY, epochs=7, checkpoint_interval=5).fit(x, y)

    def test_paired_shape_mismatch(self):
        x, _ = tiny_pairs(2)
        _, y = tiny_pairs(3)
        with pytest.raises(ValueError, match="mismatch"):
            Pix2PixTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1).fit(x, y)

    def test_deterministic_losses_and_parameters(self):
        x, y = tiny_pairs(4)
        a = Pix2PixTranslator(model_preset=TINY, epochs=2, checkpoint_interval=2,
                              seed=5).fit(x, y)
        b = Pix2PixTranslator(model_preset=TINY, epochs=2, checkpoint_interval=2,
                              seed=5).fit(x, y)
        assert a.history_.epoch_losses == b.history_.epoch_losses
        for name in a._opt_g.params:
            assert torch.equal(a._opt_g.params[name], b._opt_g.params[name])

    def test_nan_input_aborts_loudly(self):
        x, y = tiny_pairs(2)
        x[0, 0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            Pix2PixTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1).fit(x, y)

    def test_predict_requires_fit(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            Pix2PixTranslator().predict(np.zeros((1, 32, 32), dtype=np.float32))

    def test_run_log_written(self, tmp_path):
        x, y = tiny_pairs(2)
        Pix2PixTranslator(model_preset=TINY, epochs=2, checkpoint_interval=1,
                          seed=0, run_dir=str(tmp_path)).fit(x, y)
        lines = (tmp_path / "log.jsonl").read_text().strip().splitlines()
        # 2 step records + 1 epoch record per epoch
        assert len(lines) == 2 * (2 + 1)

    def test_get_params_sklearn_contract(self):
        est = Pix2PixTranslator(lambda_l1=42.0)
        params = est.get_params()
        assert params["lambda_l1"] == 42.0
        est.set_params(epochs=3)
        assert est.epochs == 3


class TestCycleGanFit:
    def test_runs_and_records_cycle_loss(self):
        x, y = tiny_pairs(3)
        est = CycleGANTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1,
                                 seed=0).fit(x, y)
        assert est.history_.epoch_losses[0]["cycle"] > 0

    def test_unpaired_domains_may_differ_in_size(self):
        x, _ = tiny_pairs(3)
        _, y = tiny_pairs(5)
        est = CycleGANTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1,
                                 seed=0).fit(x, y)
        assert est.history_.steps == 5  # max of the two domain sizes

    def test_identity_loss_decreases_on_identical_domains(self):
        x, _ = tiny_pairs(4, seed=2)
        est = CycleGANTranslator(model_preset=TINY, epochs=10, checkpoint_interval=10,
                                 seed=0, augment=False).fit(x, x.copy())
        first = est.history_.epoch_losses[0]["identity"]
        last = est.history_.epoch_losses[-1]["identity"]
        assert last < first

    def test_predict_both_directions(self):
        x, y = tiny_pairs(2)
        est = CycleGANTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1,
                                 seed=0).fit(x, y)
        assert est.predict(x).shape == x.shape
        assert est.predict_inverse(y).shape == y.shape

    def test_pool_disabled_still_trains(self):
        x, y = tiny_pairs(2)
        est = CycleGANTranslator(model_preset=TINY, epochs=1, checkpoint_interval=1,
                                 pool_size=0, seed=0).fit(x, y)
        assert est.history_.steps == 2


class TestTrainConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            TrainConfig(trainer="vae")
        with pytest.raises(ValueError):
            TrainConfig(epochs=10, checkpoint_interval=3)
        with pytest.raises(ValueError):
            TrainConfig(folds=1)

    def test_make_estimator_kinds(self):
        assert isinstance(TrainConfig(trainer="pix2pix").make_estimator(),
                          Pix2PixTranslator)
        assert isinstance(TrainConfig(trainer="cyclegan").make_estimator(),
                          CycleGANTranslator)

    def test_functional_wrapper_checks_trainer(self):
        with pytest.raises(ValueError):
            train_pix2pix(tiny_pairs(2), TrainConfig(trainer="cyclegan", epochs=1,
                                                     checkpoint_interval=1))


class TestReinitialize:
    def test_removes_stale_checkpoints(self, tmp_path):
        stale = tmp_path / "epoch_0001.ckpt"
        stale.write_bytes(b"old")
        reinitialize(tmp_path, 0)
        assert not stale.exists()

    def test_same_seed_same_build(self, tmp_path):
        from litegan.models import build_generator
        reinitialize(tmp_path, 3)
        _, a = build_generator(TINY, 3)
        reinitialize(tmp_path, 3)
        _, b = build_generator(TINY, 3)
        assert all(torch.equal(a[n], b[n]) for n in a)


@pytest.fixture(scope="module")
def synth_dataset():
    samples = synth_generate(SynthConfig(n_samples=5, seed=1))
    return Dataset(domains={
        "confocal": {s.id: s.confocal for s in samples},
        "sted": {s.id: s.sted for s in samples},
    })


class TestCrossValidate:
    def test_pooled_report_covers_each_id_once(self, synth_dataset, tmp_path):
        records, report, fa = cross_validate(
            synth_dataset, trainer="pix2pix", folds=5, seed=0,
            run_dir=str(tmp_path), model_preset=9, epochs=1, checkpoint_interval=1)
        assert len(records) == 5
        assert sorted(s.id for s in report.samples) == synth_dataset.ids

    def test_repeatable_fold_assignment_and_losses(self, synth_dataset):
        kwargs = dict(trainer="pix2pix", folds=5, seed=4, model_preset=9,
                      epochs=1, checkpoint_interval=1)
        rec_a, _, fa_a = cross_validate(synth_dataset, **kwargs)
        rec_b, _, fa_b = cross_validate(synth_dataset, **kwargs)
        assert fa_a.fold_of == fa_b.fold_of
        assert [r.epoch_losses for r in rec_a] == [r.epoch_losses for r in rec_b]

    def test_too_few_samples(self, synth_dataset):
        with pytest.raises(ValueError, match="folds"):
            cross_validate(synth_dataset, folds=9)


@pytest.fixture(scope="module")
def trained_checkpoint(tmp_path_factory):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (2, 128, 128)).astype(np.float32)
    y = rng.uniform(-1, 1, (2, 128, 128)).astype(np.float32)
    est = Pix2PixTranslator(model_preset=9, epochs=1, checkpoint_interval=1, seed=0)
    est.fit(x, y)
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    est.save_checkpoint(path)
    return path, est


class TestInfer:
    def test_rebuilt_generator_matches_estimator(self, trained_checkpoint):
        path, est = trained_checkpoint
        net = generator_from_checkpoint(path)
        x = np.random.default_rng(1).uniform(-1, 1, (1, 128, 128)).astype(np.float32)
        direct = est.predict(x)
        with torch.no_grad():
            rebuilt = net(torch.from_numpy(x[:, None]))[:, 0].numpy()
        assert np.array_equal(direct, rebuilt)

    def test_batch_partitioning_invariance(self, trained_checkpoint):
        path, _ = trained_checkpoint
        rng = np.random.default_rng(2)
        images = [rng.integers(0, 65535, (128, 128)).astype(np.uint16)
                  for _ in range(6)]
        one = infer(path, images, batch_size=1)
        many = infer(path, images, batch_size=6)
        for a, b in zip(one, many):
            assert np.array_equal(a, b)

    def test_output_matches_input_format(self, trained_checkpoint):
        path, _ = trained_checkpoint
        img = np.random.default_rng(3).integers(0, 255, (128, 128)).astype(np.uint8)
        (out,) = infer(path, [img])
        assert out.shape == (128, 128) and out.dtype == np.uint8

    def test_wrong_size_rejected(self, trained_checkpoint):
        path, _ = trained_checkpoint
        with pytest.raises(ValueError, match="preprocessing"):
            infer(path, [np.zeros((64, 64), dtype=np.uint8)])

    def test_inverse_direction_needs_cyclegan(self, trained_checkpoint):
        path, _ = trained_checkpoint
        with pytest.raises(ValueError, match="cyclegan"):
            generator_from_checkpoint(path, direction="inverse")


class TestTiming:
    def test_table_shape_and_trend_fields(self, trained_checkpoint):
        path, _ = trained_checkpoint
        table = time_inference(path, [1, 2], repetitions=2)
        assert [row["count"] for row in table] == [1, 2]
        assert all("std" in row and row["seconds_per_image"] > 0 for row in table)

    def test_counts_must_increase(self, trained_checkpoint):
        path, _ = trained_checkpoint
        with pytest.raises(ValueError, match="increasing"):
            time_inference(path, [4, 2])


class TestDiagnose:
    def test_self_prediction_never_flagged(self, trained_checkpoint):
        path, _ = trained_checkpoint
        from litegan.train import generate_net, _generated_intensity
        net = generator_from_checkpoint(path)
        rng = np.random.default_rng(4)
        confocal = {"a": rng.integers(0, 65535, (128, 128)).astype(np.uint16)}
        experimental = {"a": _generated_intensity(net, confocal["a"])}
        report = diagnose_quality(path, confocal, experimental, tau=0.5)
        assert report.samples[0].ssim == 1.0
        assert not report.samples[0].flagged
        assert not report.difference_maps["a"].any()

    def test_missing_tau_and_calibration(self, trained_checkpoint):
        path, _ = trained_checkpoint
        img = {"a": np.zeros((128, 128), dtype=np.uint16)}
        with pytest.raises(ValueError, match="tau or a calibration"):
            diagnose_quality(path, img, img)

    def test_id_mismatch(self, trained_checkpoint):
        path, _ = trained_checkpoint
        a = {"a": np.zeros((128, 128), dtype=np.uint16)}
        b = {"b": np.zeros((128, 128), dtype=np.uint16)}
        with pytest.raises(ValueError, match="ids differ"):
            diagnose_quality(path, a, b, tau=0.5)
