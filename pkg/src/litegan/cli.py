"""Command-line interface.

Subcommands: synth, preprocess, train, eval, sweep, params, diagnose, time.
Options may come from a plain-text ``key = value`` config file (``--config``)
with explicit flags taking precedence; ``--dump-config`` prints the fully
resolved configuration instead of running. Exit codes: 0 success, 1
usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np

from . import metrics, models, train as training
from .config import ConfigError, format_kv, resolve
from .data import (load_dataset, load_image, save_image, max_value_for, write_dataset,
                   contrast_stretch, pad_to_square, register_translation,
                   normalize_to_net, net_to_intensity,
                   SynthConfig, synth_generate)
from .data.datasets import DOMAINS, Dataset
from .data.preprocess import shift_image
from .losses import LossWeights


def _fail_config(message: str) -> None:
    raise ConfigError(message)


def _parse_model(text: str):
    """Accept 'model9', '9', or an explicit policy like 'fixed:8'."""
    text = str(text)
    if text.startswith("model"):
        text = text[len("model"):]
    try:
        preset = int(text)
    except ValueError:
        try:
            return models.GeneratorSpec.from_policy(models.parse_policy(text))
        except ValueError as exc:
            _fail_config(f"bad model {text!r}: {exc}")
    if preset not in models.MODEL_PRESETS:
        _fail_config(f"model preset must be 1..9, got {preset}")
    return preset


def _format_table(headers: List[str], rows: List[List]) -> str:
    table = [headers] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in table]
    return "\n".join(lines)


def _write_csv(path: Path, headers: List[str], rows: List[List]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(headers)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _normalized_stack(images: Dict[str, np.ndarray], ids: List[str]) -> np.ndarray:
    return np.stack([normalize_to_net(images[i])[0] for i in ids])


@click.group()
def cli() -> None:
    """Lightweight GAN-based confocal-to-STED image translation."""


@cli.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n", "n_samples", default=8, show_default=True, type=int)
@click.option("--size", default=128, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--noise", default=0.01, show_default=True, type=float)
@click.option("--psf-confocal", default=3.0, show_default=True, type=float)
@click.option("--psf-sted", default=1.0, show_default=True, type=float)
@click.option("--rl-iterations", default=20, show_default=True, type=int)
@click.option("--degrade", default=None, help="photobleach:FACTOR or artifact:STRENGTH")
def cmd_synth(out_dir, n_samples, size, seed, noise, psf_confocal, psf_sted,
              rl_iterations, degrade):
    """Generate a synthetic paired confocal/STED/deconvolved-STED dataset."""
    try:
        cfg = SynthConfig(n_samples=n_samples, image_size=size, seed=seed,
                          noise_level=noise, psf_sigma_confocal=psf_confocal,
                          psf_sigma_sted=psf_sted, rl_iterations=rl_iterations,
                          degrade=degrade)
    except ValueError as exc:
        _fail_config(str(exc))
    samples = synth_generate(cfg)
    write_dataset(samples, out_dir, cfg)
    click.echo(f"wrote {len(samples)} samples to {out_dir}")
    return 0


@cli.command("preprocess")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--size", default=128, show_default=True, type=int)
@click.option("--low-pct", default=1.0, show_default=True, type=float)
@click.option("--high-pct", default=99.0, show_default=True, type=float)
@click.option("--register/--no-register", default=True, show_default=True,
              help="Align confocal to the reference domain by integer translation.")
@click.option("--reference", default="sted", show_default=True)
def cmd_preprocess(data_dir, out_dir, size, low_pct, high_pct, register, reference):
    """Contrast-stretch, optionally register, and pad a dataset to net size."""
    ds = load_dataset(data_dir, mode="paired")
    out = Path(out_dir)
    for domain, images in ds.domains.items():
        (out / domain).mkdir(parents=True, exist_ok=True)
        for sid, img in images.items():
            img = contrast_stretch(img, low_pct, high_pct)
            if register and domain == "confocal" and reference in ds.domains:
                ref = contrast_stretch(ds.domains[reference][sid], low_pct, high_pct)
                dx, dy = register_translation(ref, img)
                img = shift_image(img, -dx, -dy)
            save_image(out / domain / f"{sid}.png", pad_to_square(img, size))
    manifest = Path(data_dir) / "manifest.json"
    if manifest.exists():
        (out / "manifest.json").write_text(manifest.read_text())
    click.echo(f"preprocessed {len(ds.ids)} samples into {out_dir}")
    return 0


TRAIN_DEFAULTS = {
    "trainer": "pix2pix",
    "model": "model9",
    "epochs": 200,
    "interval": 5,
    "batch_size": 1,
    "lr": 2e-4,
    "beta1": 0.5,
    "beta2": 0.999,
    "lambda_l1": 100.0,
    "lambda_cycle": 10.0,
    "lambda_identity": 5.0,
    "pool_size": 50,
    "seed": 0,
    "source": "confocal",
    "target": "sted",
    "cv": 0,
    "literal_eq3": False,
    "lsgan": False,
    "augment": True,
    "lr_decay": False,
}


def _train_config(cfg: Dict, run_dir) -> training.TrainConfig:
    try:
        return training.TrainConfig(
            trainer=cfg["trainer"], model_preset=_parse_model(cfg["model"]),
            epochs=cfg["epochs"], checkpoint_interval=cfg["interval"],
            batch_size=cfg["batch_size"], lr=cfg["lr"], beta1=cfg["beta1"],
            beta2=cfg["beta2"],
            weights=LossWeights(l1=cfg["lambda_l1"], cycle=cfg["lambda_cycle"],
                                identity=cfg["lambda_identity"]),
            seed=cfg["seed"], folds=max(cfg["cv"], 2), pool_size=cfg["pool_size"],
            literal_eq3=cfg["literal_eq3"], lsgan=cfg["lsgan"],
            augment=cfg["augment"], lr_decay=cfg["lr_decay"],
            run_dir=None if run_dir is None else str(run_dir))
    except ValueError as exc:
        _fail_config(str(exc))


def _train_options(fn):
    options = [
        click.option("--config", "config_path", default=None, type=click.Path()),
        click.option("--dump-config", is_flag=True, default=False),
        click.option("--trainer", default=None, type=click.Choice(["pix2pix", "cyclegan"])),
        click.option("--model", default=None, help="model1..model9 or a policy like fixed:8"),
        click.option("--epochs", default=None, type=int),
        click.option("--interval", default=None, type=int),
        click.option("--batch-size", default=None, type=int),
        click.option("--lr", default=None, type=float),
        click.option("--beta1", default=None, type=float),
        click.option("--beta2", default=None, type=float),
        click.option("--lambda-l1", default=None, type=float),
        click.option("--lambda-cycle", default=None, type=float),
        click.option("--lambda-identity", default=None, type=float),
        click.option("--pool-size", default=None, type=int),
        click.option("--seed", default=None, type=int),
        click.option("--source", default=None),
        click.option("--target", default=None),
        click.option("--literal-eq3", is_flag=True, default=None),
        click.option("--lsgan", is_flag=True, default=None),
        click.option("--no-augment", "augment", flag_value=False, default=None),
        click.option("--lr-decay", is_flag=True, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--cv", default=None, type=int, help="Number of CV folds (0 = single run).")
@_train_options
def cmd_train(data_dir, run_dir, config_path, dump_config, **flags):
    """Train a translator; writes checkpoints and a run log to --run-dir."""
    cfg = resolve(TRAIN_DEFAULTS, config_path, flags)
    if dump_config:
        click.echo(format_kv(cfg), nl=False)
        return 0
    mode = "paired" if cfg["trainer"] == "pix2pix" else "unpaired"
    try:
        ds = load_dataset(data_dir, mode=mode)
    except ValueError as exc:
        raise RuntimeError(
            f"{exc} (the pix2pix trainer requires a fully paired dataset)") from exc
    if cfg["cv"] > 0:
        records, report, _ = training.cross_validate(
            ds, trainer=cfg["trainer"], target=cfg["target"], folds=cfg["cv"],
            seed=cfg["seed"], run_dir=run_dir,
            **_estimator_kwargs(cfg))
        Path(run_dir, "report.json").write_text(report.to_json())
        Path(run_dir, "report.csv").write_text(report.to_csv())
        click.echo(f"cross-validated {cfg['cv']} folds; pooled mean ssim "
                   f"{report.aggregate['mean_ssim']:.4f}")
        return 0
    tc = _train_config(cfg, run_dir)
    source = ds.images(cfg["source"])
    target = ds.images(cfg["target"])
    ids = sorted(set(source) & set(target)) if tc.trainer == "pix2pix" else None
    if tc.trainer == "pix2pix":
        record = training.train_pix2pix(
            (_normalized_stack(source, ids), _normalized_stack(target, ids)), tc)
    else:
        record = training.train_cyclegan(
            _normalized_stack(source, sorted(source)),
            _normalized_stack(target, sorted(target)), tc)
    Path(run_dir, "run.json").write_text(json.dumps({
        "config": {k: str(v) for k, v in record.config.items()},
        "epoch_losses": record.epoch_losses,
        "checkpoints": record.checkpoints,
        "steps": record.steps,
        "wall_seconds": record.wall_seconds,
    }, indent=2))
    click.echo(f"trained {tc.epochs} epochs ({record.steps} steps), "
               f"{len(record.checkpoints)} checkpoints in {run_dir}")
    return 0


def _estimator_kwargs(cfg: Dict) -> Dict:
    common = dict(model_preset=_parse_model(cfg["model"]), epochs=cfg["epochs"],
                  checkpoint_interval=cfg["interval"], batch_size=cfg["batch_size"],
                  lr=cfg["lr"], beta1=cfg["beta1"], beta2=cfg["beta2"],
                  literal_eq3=cfg["literal_eq3"], lsgan=cfg["lsgan"],
                  augment=cfg["augment"], lr_decay=cfg["lr_decay"])
    if cfg["trainer"] == "pix2pix":
        common["lambda_l1"] = cfg["lambda_l1"]
    else:
        common.update(lambda_cycle=cfg["lambda_cycle"],
                      lambda_identity=cfg["lambda_identity"],
                      pool_size=cfg["pool_size"])
    return common


@cli.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--checkpoint", "ckpt_path", default=None, type=click.Path())
@click.option("--generated-domain", default=None,
              help="Evaluate an existing domain instead of a checkpoint.")
@click.option("--source", default="confocal", show_default=True)
@click.option("--target", default="sted", show_default=True)
@click.option("--baseline", default=None, help="Domain to report as baseline (e.g. confocal).")
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_eval(data_dir, ckpt_path, generated_domain, source, target, baseline, out_dir):
    """Evaluate generated images against the target domain."""
    if (ckpt_path is None) == (generated_domain is None):
        _fail_config("eval needs exactly one of --checkpoint or --generated-domain")
    ds = load_dataset(data_dir, mode="paired")
    targets = ds.images(target)
    ids = sorted(targets)
    dtype = targets[ids[0]].dtype
    params = metrics.SsimParams(dynamic_range=max_value_for(dtype))

    def to_frame(images: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        return {i: net_to_intensity(normalize_to_net(images[i])[0], dtype) for i in ids}

    tgt_map = to_frame(targets)
    if ckpt_path is not None:
        net = training.generator_from_checkpoint(ckpt_path)
        sources = ds.images(source)
        gen_map = {i: net_to_intensity(training.generate_net(net, sources[i]), dtype)
                   for i in ids}
    else:
        gen_map = to_frame(ds.images(generated_domain))
    base_map = to_frame(ds.images(baseline)) if baseline is not None else None
    report = metrics.evaluate_pairset(gen_map, tgt_map, base_map, params)
    headers = ["id", "psnr_db", "npsnr", "ssim"]
    rows = [[s.id, f"{s.psnr_db:.3f}", f"{s.npsnr:.4f}", f"{s.ssim:.4f}"]
            for s in report.samples]
    if baseline is not None:
        headers += ["baseline_psnr_db", "baseline_ssim"]
        for row, s in zip(rows, report.samples):
            row += [f"{s.baseline_psnr_db:.3f}", f"{s.baseline_ssim:.4f}"]
    click.echo(_format_table(headers, rows))
    click.echo(f"mean ssim {report.aggregate['mean_ssim']:.4f}  "
               f"mean psnr {report.aggregate['mean_psnr_db']:.3f} dB")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        (out / "report.csv").write_text(report.to_csv())
    return 0


@cli.command("sweep")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--presets", default="1,2,3,4,5,6,7,8,9", show_default=True)
@_train_options
def cmd_sweep(data_dir, run_dir, presets, config_path, dump_config, **flags):
    """Train and evaluate a sequence of model presets; emit a comparison table."""
    cfg = resolve(TRAIN_DEFAULTS, config_path, flags)
    if dump_config:
        click.echo(format_kv(cfg), nl=False)
        return 0
    try:
        preset_list = sorted({int(p) for p in presets.split(",") if p.strip()})
    except ValueError:
        _fail_config(f"bad --presets {presets!r}; expected comma-separated integers")
    for p in preset_list:
        if p not in models.MODEL_PRESETS:
            _fail_config(f"unknown preset {p} in --presets")
    mode = "paired" if cfg["trainer"] == "pix2pix" else "unpaired"
    ds = load_dataset(data_dir, mode=mode)
    source = ds.images(cfg["source"])
    targets = ds.images(cfg["target"])
    ids = sorted(set(source) & set(targets))
    headers = ["model", "policy", "gen_params", "storage_bytes", "mean_ssim", "mean_psnr_db"]
    rows = []
    for preset in preset_list:
        sub_cfg = dict(cfg, model=str(preset))
        sub_dir = Path(run_dir) / f"model{preset}"
        training.reinitialize(sub_dir, cfg["seed"])
        tc = _train_config(sub_cfg, sub_dir)
        est = tc.make_estimator()
        est.fit(_normalized_stack(source, ids), _normalized_stack(targets, ids))
        generated = est.predict(_normalized_stack(source, ids))
        gen_map = {sid: net_to_intensity(generated[j]) for j, sid in enumerate(ids)}
        tgt_map = {sid: net_to_intensity(normalize_to_net(targets[sid])[0]) for sid in ids}
        report = metrics.evaluate_pairset(gen_map, tgt_map)
        gen_spec = est._gen_spec()
        storage = models.estimate_storage(gen_spec, est._disc_spec(), tc.trainer,
                                          tc.epochs, tc.checkpoint_interval)
        rows.append([f"model{preset}", str(gen_spec.policy),
                     models.count_generator_parameters(gen_spec), storage,
                     f"{report.aggregate['mean_ssim']:.4f}",
                     f"{report.aggregate['mean_psnr_db']:.3f}"])
    click.echo(_format_table(headers, rows))
    _write_csv(Path(run_dir) / "sweep.csv", headers, rows)
    return 0


@cli.command("params")
@click.option("--epochs", default=200, show_default=True, type=int)
@click.option("--interval", default=5, show_default=True, type=int)
@click.option("--trainer", default="pix2pix", show_default=True,
              type=click.Choice(["pix2pix", "cyclegan"]))
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_params(epochs, interval, trainer, out_dir):
    """Report parameter counts and projected checkpoint storage per preset."""
    headers = ["model", "policy", "gen_params", "disc_params", "storage_bytes"]
    rows = []
    for preset in sorted(models.MODEL_PRESETS):
        gen_spec = models.GeneratorSpec.from_preset(preset)
        disc_spec = models.DiscriminatorSpec.from_preset(
            preset, in_channels=2 if trainer == "pix2pix" else 1)
        try:
            storage = models.estimate_storage(gen_spec, disc_spec, trainer,
                                              epochs, interval)
        except ValueError as exc:
            _fail_config(str(exc))
        rows.append([f"model{preset}", str(gen_spec.policy),
                     models.count_generator_parameters(gen_spec),
                     models.count_discriminator_parameters(disc_spec), storage])
    click.echo(_format_table(headers, rows))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _write_csv(Path(out_dir) / "params.csv", headers, rows)
    return 0


@cli.command("diagnose")
@click.option("--data", "data_dir", required=True, type=click.Path(),
              help="Dataset with 'confocal' and the experimental domain.")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--experimental", default="sted", show_default=True)
@click.option("--tau", default=None, type=float)
@click.option("--calibration-data", default=None, type=click.Path(),
              help="High-quality paired dataset used to calibrate tau.")
@click.option("--calibration-target", default="sted", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_diagnose(data_dir, ckpt_path, experimental, tau, calibration_data,
                 calibration_target, out_dir):
    """Flag experimental images that deviate from the generator's prediction."""
    ds = load_dataset(data_dir, mode="paired")
    calibration = None
    if calibration_data is not None:
        cal = load_dataset(calibration_data, mode="paired")
        calibration = (cal.images("confocal"), cal.images(calibration_target))
    if tau is None and calibration is None:
        _fail_config("diagnose needs --tau or --calibration-data")
    report = training.diagnose_quality(ckpt_path, ds.images("confocal"),
                                       ds.images(experimental), tau=tau,
                                       calibration=calibration)
    out = Path(out_dir)
    (out / "diff").mkdir(parents=True, exist_ok=True)
    for sid, diff in report.difference_maps.items():
        save_image(out / "diff" / f"{sid}.png", diff)
    headers = ["id", "ssim", "psnr_db", "flagged"]
    rows = [[s.id, f"{s.ssim:.4f}", f"{s.psnr_db:.3f}", str(s.flagged).lower()]
            for s in report.samples]
    click.echo(_format_table(headers, rows))
    click.echo(f"tau {report.tau:.4f}; flagged {len(report.flagged_ids)} of "
               f"{len(report.samples)}: {', '.join(report.flagged_ids) or '(none)'}")
    _write_csv(out / "diagnostic.csv", headers, rows)
    (out / "diagnostic.json").write_text(json.dumps({
        "tau": report.tau,
        "samples": [vars(s) for s in report.samples],
        "flagged": report.flagged_ids,
    }, indent=2))
    return 0


@cli.command("time")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--counts", default="1,8,64", show_default=True)
@click.option("--repetitions", default=3, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--self-test", is_flag=True, default=False,
              help="Fail unless per-image time at the largest count <= count 1.")
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_time(ckpt_path, counts, repetitions, seed, self_test, out_dir):
    """Measure wall-clock per-image inference time at increasing counts."""
    try:
        count_list = [int(c) for c in counts.split(",") if c.strip()]
    except ValueError:
        _fail_config(f"bad --counts {counts!r}; expected comma-separated integers")
    try:
        table = training.time_inference(ckpt_path, count_list, repetitions, seed)
    except ValueError as exc:
        _fail_config(str(exc))
    headers = ["count", "seconds_per_image", "std"]
    rows = [[r["count"], f"{r['seconds_per_image']:.6f}", f"{r['std']:.6f}"]
            for r in table]
    click.echo(_format_table(headers, rows))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _write_csv(Path(out_dir) / "timing.csv", headers, rows)
    if self_test and table[-1]["seconds_per_image"] > table[0]["seconds_per_image"]:
        raise RuntimeError(
            f"per-image time did not amortize: count {table[-1]['count']} took "
            f"{table[-1]['seconds_per_image']:.6f} s/image vs "
            f"{table[0]['seconds_per_image']:.6f} at count {table[0]['count']}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point with the documented exit-code contract."""
    try:
        result = cli.main(args=argv, prog_name="litegan", standalone_mode=False)
        return int(result) if isinstance(result, int) else 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except Exception as exc:  # runtime failure
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
