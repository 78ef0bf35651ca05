"""Training harness: paired (Pix2Pix-style) and unpaired (CycleGAN-style)
translators with a scikit-learn estimator surface, plus cross-validation,
checkpointed inference, timing, and the experimental-quality diagnostic.

Estimators consume float32 arrays of shape (n, H, W) in the network domain
[-1, 1] (see ``litegan.data.normalize_to_net``) and are deterministic given
their seed and the host's thread count.
"""

from __future__ import annotations

import gc
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin

from . import losses, metrics, models, ops
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data.datasets import Dataset, FoldAssignment, make_folds
from .data.images import max_value_for
from .data.preprocess import net_to_intensity, normalize_to_net, denormalize_from_net


@dataclass
class TrainConfig:
    """Declarative training configuration; see the estimator classes for
    the meaning of each knob."""

    trainer: str = "pix2pix"
    model_preset: Union[int, models.GeneratorSpec] = 9
    epochs: int = 200
    checkpoint_interval: int = 5
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    seed: int = 0
    folds: int = 5
    norm: str = "instance"
    literal_eq3: bool = False
    lsgan: bool = False
    pool_size: int = 50
    augment: bool = True
    lr_decay: bool = False
    run_dir: Optional[str] = None

    def __post_init__(self):
        if self.trainer not in ("pix2pix", "cyclegan"):
            raise ValueError(f"unknown trainer {self.trainer!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.checkpoint_interval < 1 or self.epochs % self.checkpoint_interval:
            raise ValueError("checkpoint_interval must divide epochs")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")

    def make_estimator(self) -> "_GanTranslator":
        common = dict(model_preset=self.model_preset, epochs=self.epochs,
                      checkpoint_interval=self.checkpoint_interval,
                      batch_size=self.batch_size, lr=self.lr, beta1=self.beta1,
                      beta2=self.beta2, eps=self.eps, seed=self.seed, norm=self.norm,
                      literal_eq3=self.literal_eq3, lsgan=self.lsgan,
                      augment=self.augment, lr_decay=self.lr_decay, run_dir=self.run_dir)
        if self.trainer == "pix2pix":
            return Pix2PixTranslator(lambda_l1=self.weights.l1, **common)
        return CycleGANTranslator(lambda_cycle=self.weights.cycle,
                                  lambda_identity=self.weights.identity,
                                  pool_size=self.pool_size, **common)


@dataclass
class RunRecord:
    """Per-run log: config snapshot, per-epoch loss series, checkpoints."""

    config: Dict = field(default_factory=dict)
    epoch_losses: List[Dict[str, float]] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    steps: int = 0
    wall_seconds: float = 0.0


def reinitialize(run_dir, seed: int) -> Path:
    """Fresh-run protocol: remove stale checkpoints, reseed all random
    streams, and collect garbage so no state leaks between runs."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for stale in run_dir.glob("*.ckpt"):
        stale.unlink()
    log = run_dir / "log.jsonl"
    if log.exists():
        log.unlink()
    torch.manual_seed(seed)
    np.random.seed(seed % 2 ** 32)
    gc.collect()
    return run_dir


def _dihedral_tensor(x: torch.Tensor, k: int) -> torch.Tensor:
    out = torch.rot90(x, k % 4, dims=(2, 3))
    if k >= 4:
        out = torch.flip(out, dims=(3,))
    return out


class _ImagePool:
    """Replay buffer of past fakes for discriminator updates (size 50)."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.size = size
        self.rng = rng
        self.images: List[torch.Tensor] = []

    def query(self, batch: torch.Tensor) -> torch.Tensor:
        if self.size <= 0:
            return batch
        out = []
        for i in range(batch.shape[0]):
            img = batch[i:i + 1]
            if len(self.images) < self.size:
                self.images.append(img.clone())
                out.append(img)
            elif self.rng.random() < 0.5:
                j = int(self.rng.integers(len(self.images)))
                out.append(self.images[j].clone())
                self.images[j] = img.clone()
            else:
                out.append(img)
        return torch.cat(out, dim=0)


class _Optimizer:
    """Adam over a named parameter dict, via ops.adam_step."""

    def __init__(self, params: ops.ParamDict, lr: float, beta1: float,
                 beta2: float, eps: float):
        self.params = params
        self.state = ops.AdamState.for_params(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, loss: torch.Tensor, lr_factor: float = 1.0) -> None:
        for p in self.params.values():
            p.grad = None
        loss.backward()
        grads = {n: (p.grad if p.grad is not None else torch.zeros_like(p))
                 for n, p in self.params.items()}
        ops.adam_step(self.params, grads, self.state, lr=self.lr * lr_factor,
                      beta1=self.beta1, beta2=self.beta2, eps=self.eps)


def _as_nchw(X) -> torch.Tensor:
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[:, None, :, :]
    if arr.ndim != 4:
        raise ValueError(f"expected images of shape (n, H, W), got {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr))


def _prefixed(params_or_state: Dict[str, torch.Tensor], prefix: str) -> Dict[str, torch.Tensor]:
    return {f"{prefix}/{name}": value for name, value in params_or_state.items()}


class _GanTranslator(BaseEstimator, TransformerMixin):
    """Shared machinery for the paired and unpaired translators."""

    trainer_name = ""

    def __init__(self, model_preset=9, epochs=30, checkpoint_interval=5,
                 batch_size=1, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8,
                 seed=0, norm="instance", literal_eq3=False, lsgan=False,
                 augment=True, lr_decay=False, run_dir=None):
        self.model_preset = model_preset
        self.epochs = epochs
        self.checkpoint_interval = checkpoint_interval
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed
        self.norm = norm
        self.literal_eq3 = literal_eq3
        self.lsgan = lsgan
        self.augment = augment
        self.lr_decay = lr_decay
        self.run_dir = run_dir

    # -- shared helpers ---------------------------------------------------

    def _validate(self, n_samples: int) -> None:
        if n_samples < 1:
            raise ValueError("training set is empty")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.checkpoint_interval < 1 or self.epochs % self.checkpoint_interval:
            raise ValueError(
                f"checkpoint_interval {self.checkpoint_interval} must divide "
                f"epochs {self.epochs}")

    def _gen_spec(self) -> models.GeneratorSpec:
        if isinstance(self.model_preset, models.GeneratorSpec):
            return self.model_preset
        return models.GeneratorSpec.from_preset(int(self.model_preset), norm=self.norm)

    def _disc_spec(self) -> models.DiscriminatorSpec:
        spec = self._gen_spec()
        in_channels = spec.in_channels * 2 if self.trainer_name == "pix2pix" else spec.in_channels
        return models.DiscriminatorSpec(policy=spec.policy, in_channels=in_channels)

    def _lr_factor(self, epoch: int) -> float:
        if not self.lr_decay:
            return 1.0
        return min(1.0, max(2.0 * (1.0 - epoch / self.epochs), 1.0 / self.epochs))

    def _log_step(self, log_file, record: Dict) -> None:
        if log_file is not None:
            log_file.write(json.dumps(record) + "\n")

    def _maybe_checkpoint(self, epoch: int, breakdown: losses.LossBreakdown) -> None:
        if self.run_dir is None or epoch % self.checkpoint_interval:
            return
        path = Path(self.run_dir) / f"epoch_{epoch:04d}.ckpt"
        save_checkpoint(path, self._manifest(epoch, breakdown), self._arrays())
        self.history_.checkpoints.append(str(path))

    def _base_manifest(self, epoch: int, breakdown: losses.LossBreakdown) -> Dict[str, str]:
        manifest = {"trainer": self.trainer_name, "epoch": str(epoch),
                    "seed": str(self.seed)}
        for key, value in self._gen_spec().to_kv().items():
            manifest[f"gen.{key}"] = value
        for key, value in self._disc_spec().to_kv().items():
            manifest[f"disc.{key}"] = value
        for key, value in breakdown.as_dict().items():
            manifest[f"loss.{key}"] = repr(value)
        return manifest

    def transform(self, X):
        return self.predict(X)

    def save_checkpoint(self, path) -> Path:
        """Write the current (trained) state as a checkpoint file."""
        if not hasattr(self, "history_"):
            raise RuntimeError("estimator is not fitted")
        breakdown = losses.LossBreakdown(**self.history_.epoch_losses[-1]) \
            if self.history_.epoch_losses else losses.LossBreakdown()
        return save_checkpoint(path, self._manifest(self.epochs, breakdown), self._arrays())


class Pix2PixTranslator(_GanTranslator):
    """Paired conditional-GAN translator (adversarial + weighted L1)."""

    trainer_name = "pix2pix"

    def __init__(self, model_preset=9, epochs=30, checkpoint_interval=5,
                 batch_size=1, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8,
                 lambda_l1=100.0, seed=0, norm="instance", literal_eq3=False,
                 lsgan=False, augment=True, lr_decay=False, run_dir=None):
        super().__init__(model_preset=model_preset, epochs=epochs,
                         checkpoint_interval=checkpoint_interval, batch_size=batch_size,
                         lr=lr, beta1=beta1, beta2=beta2, eps=eps, seed=seed, norm=norm,
                         literal_eq3=literal_eq3, lsgan=lsgan, augment=augment,
                         lr_decay=lr_decay, run_dir=run_dir)
        self.lambda_l1 = lambda_l1

    def fit(self, X, y):
        start = time.perf_counter()
        x_all = _as_nchw(X)
        y_all = _as_nchw(y)
        if x_all.shape != y_all.shape:
            raise ValueError(f"paired data shape mismatch: {tuple(x_all.shape)} "
                             f"vs {tuple(y_all.shape)}")
        n = x_all.shape[0]
        self._validate(n)
        weights = losses.LossWeights(l1=self.lambda_l1)
        self.generator_, g_params = models.build_generator(self._gen_spec(), self.seed)
        self.discriminator_, d_params = models.build_discriminator(
            self._disc_spec(), self.seed + 1)
        self._opt_g = _Optimizer(g_params, self.lr, self.beta1, self.beta2, self.eps)
        self._opt_d = _Optimizer(d_params, self.lr, self.beta1, self.beta2, self.eps)
        rng = np.random.default_rng([self.seed, 101])
        self.history_ = RunRecord(config=self.get_params())
        log_file = None
        if self.run_dir is not None:
            Path(self.run_dir).mkdir(parents=True, exist_ok=True)
            log_file = open(Path(self.run_dir) / "log.jsonl", "a")
        try:
            for epoch in range(1, self.epochs + 1):
                order = rng.permutation(n)
                factor = self._lr_factor(epoch)
                sums = {}
                steps = 0
                for lo in range(0, n, self.batch_size):
                    idx = order[lo:lo + self.batch_size]
                    x = x_all[idx]
                    yb = y_all[idx]
                    if self.augment:
                        k = int(rng.integers(8))
                        x = _dihedral_tensor(x, k)
                        yb = _dihedral_tensor(yb, k)
                    breakdown = self._train_step(x, yb, weights, factor)
                    if not np.isfinite(breakdown.total):
                        raise FloatingPointError(
                            f"non-finite loss at epoch {epoch}, step {steps}")
                    steps += 1
                    self.history_.steps += 1
                    for key, value in breakdown.as_dict().items():
                        sums[key] = sums.get(key, 0.0) + value
                    self._log_step(log_file, {"kind": "step", "epoch": epoch,
                                              "step": steps, **breakdown.as_dict()})
                epoch_mean = {key: value / steps for key, value in sums.items()}
                self.history_.epoch_losses.append(epoch_mean)
                self._log_step(log_file, {"kind": "epoch", "epoch": epoch, **epoch_mean})
                self._maybe_checkpoint(epoch, losses.LossBreakdown(**epoch_mean))
        finally:
            if log_file is not None:
                log_file.close()
        self.history_.wall_seconds = time.perf_counter() - start
        return self

    def _train_step(self, x, y, weights, lr_factor) -> losses.LossBreakdown:
        fake = self.generator_(x)
        d_real = self.discriminator_(ops.concat_channels(x, y))
        d_fake = self.discriminator_(ops.concat_channels(x, fake.detach()))
        d_loss = losses.adversarial_loss(d_real, d_fake, "discriminator", lsgan=self.lsgan)
        self._opt_d.step(d_loss, lr_factor)

        d_fake_for_g = self.discriminator_(ops.concat_channels(x, fake))
        adv_g = losses.adversarial_loss(None, d_fake_for_g, "generator",
                                        literal=self.literal_eq3, lsgan=self.lsgan)
        l1 = losses.l1_loss(fake, y)
        total, breakdown = losses.pix2pix_objective(adv_g, d_loss.detach(), l1, weights)
        self._opt_g.step(total, lr_factor)
        return breakdown

    def predict(self, X):
        if not hasattr(self, "generator_"):
            raise RuntimeError("estimator is not fitted")
        x = _as_nchw(X)
        outs = []
        with torch.no_grad():
            for i in range(x.shape[0]):
                outs.append(self.generator_(x[i:i + 1]))
        return torch.cat(outs).squeeze(1).numpy()

    def _arrays(self) -> Dict[str, np.ndarray]:
        arrays = {}
        for prefix, opt in (("g", self._opt_g), ("d", self._opt_d)):
            for name, p in opt.params.items():
                arrays[f"{prefix}/{name}"] = p.detach().numpy()
                arrays[f"optim/{prefix}/m/{name}"] = opt.state.m[name].numpy()
                arrays[f"optim/{prefix}/v/{name}"] = opt.state.v[name].numpy()
        return arrays

    def _manifest(self, epoch, breakdown) -> Dict[str, str]:
        manifest = self._base_manifest(epoch, breakdown)
        manifest["optim.g.step"] = str(self._opt_g.state.step)
        manifest["optim.d.step"] = str(self._opt_d.state.step)
        return manifest


class CycleGANTranslator(_GanTranslator):
    """Unpaired translator: coupled generators G (A->B) and F (B->A) with
    two PatchGAN discriminators, cycle-consistency, and identity terms."""

    trainer_name = "cyclegan"

    def __init__(self, model_preset=9, epochs=30, checkpoint_interval=5,
                 batch_size=1, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8,
                 lambda_cycle=10.0, lambda_identity=5.0, pool_size=50, seed=0,
                 norm="instance", literal_eq3=False, lsgan=False, augment=True,
                 lr_decay=False, run_dir=None):
        super().__init__(model_preset=model_preset, epochs=epochs,
                         checkpoint_interval=checkpoint_interval, batch_size=batch_size,
                         lr=lr, beta1=beta1, beta2=beta2, eps=eps, seed=seed, norm=norm,
                         literal_eq3=literal_eq3, lsgan=lsgan, augment=augment,
                         lr_decay=lr_decay, run_dir=run_dir)
        self.lambda_cycle = lambda_cycle
        self.lambda_identity = lambda_identity
        self.pool_size = pool_size

    def fit(self, X, y):
        """Train on unpaired domains: X from the source domain, y from the
        target domain; no alignment between them is assumed."""
        start = time.perf_counter()
        a_all = _as_nchw(X)
        b_all = _as_nchw(y)
        self._validate(min(a_all.shape[0], b_all.shape[0]))
        weights = losses.LossWeights(cycle=self.lambda_cycle, identity=self.lambda_identity)
        spec = self._gen_spec()
        self.generator_, g_params = models.build_generator(spec, self.seed)
        self.generator_ba_, f_params = models.build_generator(spec, self.seed + 1)
        self.discriminator_a_, dx_params = models.build_discriminator(
            self._disc_spec(), self.seed + 2)
        self.discriminator_b_, dy_params = models.build_discriminator(
            self._disc_spec(), self.seed + 3)
        gf_params = {**_prefixed(g_params, "g"), **_prefixed(f_params, "f")}
        self._opt_gf = _Optimizer(gf_params, self.lr, self.beta1, self.beta2, self.eps)
        self._opt_dx = _Optimizer(dx_params, self.lr, self.beta1, self.beta2, self.eps)
        self._opt_dy = _Optimizer(dy_params, self.lr, self.beta1, self.beta2, self.eps)
        rng = np.random.default_rng([self.seed, 202])
        self._pool_a = _ImagePool(self.pool_size, np.random.default_rng([self.seed, 303]))
        self._pool_b = _ImagePool(self.pool_size, np.random.default_rng([self.seed, 404]))
        self.history_ = RunRecord(config=self.get_params())
        log_file = None
        if self.run_dir is not None:
            Path(self.run_dir).mkdir(parents=True, exist_ok=True)
            log_file = open(Path(self.run_dir) / "log.jsonl", "a")
        na, nb = a_all.shape[0], b_all.shape[0]
        try:
            for epoch in range(1, self.epochs + 1):
                order_a = rng.permutation(na)
                order_b = rng.permutation(nb)
                factor = self._lr_factor(epoch)
                sums = {}
                steps = 0
                n_steps = max(na, nb)
                for lo in range(0, n_steps, self.batch_size):
                    ia = [order_a[j % na] for j in range(lo, min(lo + self.batch_size, n_steps))]
                    ib = [order_b[j % nb] for j in range(lo, min(lo + self.batch_size, n_steps))]
                    a = a_all[ia]
                    b = b_all[ib]
                    if self.augment:
                        a = _dihedral_tensor(a, int(rng.integers(8)))
                        b = _dihedral_tensor(b, int(rng.integers(8)))
                    breakdown = self._train_step(a, b, weights, factor)
                    if not np.isfinite(breakdown.total):
                        raise FloatingPointError(
                            f"non-finite loss at epoch {epoch}, step {steps}")
                    steps += 1
                    self.history_.steps += 1
                    for key, value in breakdown.as_dict().items():
                        sums[key] = sums.get(key, 0.0) + value
                    self._log_step(log_file, {"kind": "step", "epoch": epoch,
                                              "step": steps, **breakdown.as_dict()})
                epoch_mean = {key: value / steps for key, value in sums.items()}
                self.history_.epoch_losses.append(epoch_mean)
                self._log_step(log_file, {"kind": "epoch", "epoch": epoch, **epoch_mean})
                self._maybe_checkpoint(epoch, losses.LossBreakdown(**epoch_mean))
        finally:
            if log_file is not None:
                log_file.close()
        self.history_.wall_seconds = time.perf_counter() - start
        return self

    def _train_step(self, a, b, weights, lr_factor) -> losses.LossBreakdown:
        fake_b = self.generator_(a)
        fake_a = self.generator_ba_(b)

        # discriminators first, on pooled fakes
        pooled_b = self._pool_b.query(fake_b.detach())
        dy_loss = losses.adversarial_loss(self.discriminator_b_(b),
                                          self.discriminator_b_(pooled_b),
                                          "discriminator", lsgan=self.lsgan)
        self._opt_dy.step(dy_loss, lr_factor)
        pooled_a = self._pool_a.query(fake_a.detach())
        dx_loss = losses.adversarial_loss(self.discriminator_a_(a),
                                          self.discriminator_a_(pooled_a),
                                          "discriminator", lsgan=self.lsgan)
        self._opt_dx.step(dx_loss, lr_factor)

        # joint generator update
        adv_g = losses.adversarial_loss(None, self.discriminator_b_(fake_b), "generator",
                                        literal=self.literal_eq3, lsgan=self.lsgan)
        adv_f = losses.adversarial_loss(None, self.discriminator_a_(fake_a), "generator",
                                        literal=self.literal_eq3, lsgan=self.lsgan)
        cyc = losses.cycle_loss(a, self.generator_ba_(fake_b), b, self.generator_(fake_a))
        if weights.identity > 0:
            idt = losses.identity_loss(self.generator_(b), b, self.generator_ba_(a), a)
        else:
            idt = torch.zeros(())
        total, breakdown = losses.cyclegan_objective(
            adv_g, adv_f, (dx_loss + dy_loss).detach(), cyc, idt, weights)
        self._opt_gf.step(total, lr_factor)
        return breakdown

    def predict(self, X):
        """Translate source-domain images to the target domain."""
        return self._run(self.generator_, X)

    def predict_inverse(self, Y):
        """Translate target-domain images back to the source domain."""
        return self._run(self.generator_ba_, Y)

    def _run(self, net, X):
        if not hasattr(self, "history_"):
            raise RuntimeError("estimator is not fitted")
        x = _as_nchw(X)
        outs = []
        with torch.no_grad():
            for i in range(x.shape[0]):
                outs.append(net(x[i:i + 1]))
        return torch.cat(outs).squeeze(1).numpy()

    def _arrays(self) -> Dict[str, np.ndarray]:
        arrays = {}
        for name, p in self._opt_gf.params.items():
            arrays[name] = p.detach().numpy()  # already g/... or f/...
            arrays[f"optim/gf/m/{name}"] = self._opt_gf.state.m[name].numpy()
            arrays[f"optim/gf/v/{name}"] = self._opt_gf.state.v[name].numpy()
        for prefix, opt in (("dx", self._opt_dx), ("dy", self._opt_dy)):
            for name, p in opt.params.items():
                arrays[f"{prefix}/{name}"] = p.detach().numpy()
                arrays[f"optim/{prefix}/m/{name}"] = opt.state.m[name].numpy()
                arrays[f"optim/{prefix}/v/{name}"] = opt.state.v[name].numpy()
        return arrays

    def _manifest(self, epoch, breakdown) -> Dict[str, str]:
        manifest = self._base_manifest(epoch, breakdown)
        manifest["optim.gf.step"] = str(self._opt_gf.state.step)
        manifest["optim.dx.step"] = str(self._opt_dx.state.step)
        manifest["optim.dy.step"] = str(self._opt_dy.state.step)
        return manifest


def train_pix2pix(paired_data: Tuple[np.ndarray, np.ndarray], cfg: TrainConfig) -> RunRecord:
    """Functional wrapper: fit a paired translator, return its run record."""
    if cfg.trainer != "pix2pix":
        raise ValueError(f"cfg.trainer is {cfg.trainer!r}, expected 'pix2pix'")
    est = cfg.make_estimator()
    est.fit(*paired_data)
    return est.history_


def train_cyclegan(domain_a_data: np.ndarray, domain_b_data: np.ndarray,
                   cfg: TrainConfig) -> RunRecord:
    """Functional wrapper: fit an unpaired translator, return its run record."""
    if cfg.trainer != "cyclegan":
        raise ValueError(f"cfg.trainer is {cfg.trainer!r}, expected 'cyclegan'")
    est = cfg.make_estimator()
    est.fit(domain_a_data, domain_b_data)
    return est.history_


# -- checkpoint-driven inference -----------------------------------------


def generator_from_checkpoint(ckpt: Union[Checkpoint, str, Path],
                              direction: str = "forward") -> models.UnetGenerator:
    """Rebuild the requested generator network from a checkpoint."""
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    spec = models.GeneratorSpec.from_kv(
        {key[4:]: value for key, value in ckpt.manifest.items() if key.startswith("gen.")})
    prefix = "g" if direction == "forward" else "f"
    if direction not in ("forward", "inverse"):
        raise ValueError(f"unknown direction {direction!r}")
    if direction == "inverse" and ckpt.manifest.get("trainer") != "cyclegan":
        raise ValueError("inverse generator only exists for cyclegan checkpoints")
    net, params = models.build_generator(spec, 0)
    with torch.no_grad():
        for name, p in params.items():
            key = f"{prefix}/{name}"
            if key not in ckpt.arrays:
                raise KeyError(f"checkpoint is missing parameter {key!r}")
            arr = ckpt.arrays[key]
            if tuple(arr.shape) != tuple(p.shape):
                raise ValueError(f"parameter {key!r} shape {arr.shape} != {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))
    net.eval()
    # Warm-up forward: validates that the restored weights produce finite
    # output and primes kernel dispatch before any timed work.
    with torch.no_grad():
        probe = net(torch.zeros(1, 1, spec.image_size, spec.image_size))
    if not torch.isfinite(probe).all():
        raise ValueError("checkpointed generator produced non-finite output")
    return net


def infer(ckpt: Union[Checkpoint, str, Path], inputs: Sequence[np.ndarray],
          batch_size: int = 1, direction: str = "forward") -> List[np.ndarray]:
    """Translate raw intensity images through a checkpointed generator.

    Inputs must already be 128x128 (or the checkpoint's configured size);
    outputs are denormalized back to each input's intensity range and
    dtype. Images are processed one at a time internally so results are
    bit-identical for any batch partitioning.
    """
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    net = generator_from_checkpoint(ckpt, direction)
    size = net.spec.image_size
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    outputs = []
    with torch.no_grad():
        for img in inputs:
            img = np.asarray(img)
            if img.shape != (size, size):
                raise ValueError(
                    f"input image shape {img.shape} != required ({size}, {size}); "
                    "run preprocessing first")
            normalized, lo, hi = normalize_to_net(img)
            out = net(torch.from_numpy(normalized[None, None]))
            outputs.append(denormalize_from_net(out[0, 0].numpy(), lo, hi, img.dtype))
    return outputs


def time_inference(ckpt_path, counts: Sequence[int], repetitions: int = 3,
                   seed: int = 0) -> List[Dict[str, float]]:
    """Wall-clock per-image inference time for increasing image counts.

    Each measurement includes the fixed setup cost (checkpoint load,
    network build, and warm-up forward), which dominates at count 1 and
    amortizes away at larger counts.
    """
    counts = list(counts)
    if any(b >= a for a, b in zip(counts[1:], counts)):
        raise ValueError("counts must be strictly increasing")
    probe = load_checkpoint(ckpt_path)
    size = int(probe.manifest["gen.image_size"])
    rng = np.random.default_rng(seed)
    images = [rng.integers(0, 65535, (size, size)).astype(np.uint16)
              for _ in range(max(counts))]
    table = []
    for count in counts:
        per_image = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            infer(ckpt_path, images[:count])
            per_image.append((time.perf_counter() - t0) / count)
        table.append({"count": count,
                      "seconds_per_image": float(np.mean(per_image)),
                      "std": float(np.std(per_image))})
    return table


# -- cross-validation -----------------------------------------------------


def cross_validate(dataset: Dataset, trainer: str = "pix2pix", target: str = "sted",
                   folds: int = 5, seed: int = 0, run_dir=None,
                   **estimator_params) -> Tuple[List[RunRecord], metrics.MetricReport,
                                                FoldAssignment]:
    """K-fold protocol: reinitialize + train per fold, evaluate on the
    held-out fold, pool every sample exactly once."""
    ids = dataset.ids
    if len(ids) < folds:
        raise ValueError(f"dataset has {len(ids)} samples, fewer than {folds} folds")
    assignment = make_folds(ids, folds, seed)
    confocal = dataset.images("confocal")
    targets = dataset.images(target)
    records = []
    report = metrics.MetricReport()
    for fold in range(folds):
        fold_seed = seed + fold
        fold_dir = None
        if run_dir is not None:
            fold_dir = Path(run_dir) / f"fold_{fold}"
            reinitialize(fold_dir, fold_seed)
        train_ids = assignment.ids_not_in_fold(fold)
        val_ids = assignment.ids_in_fold(fold)
        x_train = np.stack([normalize_to_net(confocal[i])[0] for i in train_ids])
        y_train = np.stack([normalize_to_net(targets[i])[0] for i in train_ids])
        cls = {"pix2pix": Pix2PixTranslator, "cyclegan": CycleGANTranslator}[trainer]
        est = cls(seed=fold_seed, run_dir=fold_dir, **estimator_params)
        try:
            est.fit(x_train, y_train)
        except Exception as exc:
            raise RuntimeError(f"training failed in fold {fold}: {exc}") from exc
        x_val = np.stack([normalize_to_net(confocal[i])[0] for i in val_ids])
        generated = est.predict(x_val)
        gen_map = {sid: net_to_intensity(generated[j]) for j, sid in enumerate(val_ids)}
        tgt_map = {sid: net_to_intensity(normalize_to_net(targets[sid])[0]) for sid in val_ids}
        base_map = {sid: net_to_intensity(normalize_to_net(confocal[sid])[0]) for sid in val_ids}
        fold_report = metrics.evaluate_pairset(gen_map, tgt_map, base_map)
        report.samples.extend(fold_report.samples)
        records.append(est.history_)
    report.samples.sort(key=lambda s: s.id)
    report.compute_aggregate()
    return records, report, assignment


# -- quality diagnostic ----------------------------------------------------


@dataclass
class DiagnosticSample:
    id: str
    ssim: float
    psnr_db: float
    flagged: bool


@dataclass
class DiagnosticReport:
    """Per-sample comparison of generated vs. experimental images."""

    tau: float
    samples: List[DiagnosticSample] = field(default_factory=list)
    difference_maps: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def flagged_ids(self) -> List[str]:
        return [s.id for s in self.samples if s.flagged]


def generate_net(net: models.UnetGenerator, img: np.ndarray) -> np.ndarray:
    """Network-domain ([-1, 1]) prediction for one raw intensity image."""
    normalized, _, _ = normalize_to_net(img)
    with torch.no_grad():
        return net(torch.from_numpy(normalized[None, None]))[0, 0].numpy()


def _generated_intensity(net: models.UnetGenerator, img: np.ndarray) -> np.ndarray:
    """Prediction in the input image's own intensity frame (as in infer)."""
    _, lo, hi = normalize_to_net(img)
    return denormalize_from_net(generate_net(net, img), lo, hi, img.dtype)


def diagnose_quality(ckpt: Union[Checkpoint, str, Path],
                     confocal: Dict[str, np.ndarray],
                     experimental: Dict[str, np.ndarray],
                     tau: Optional[float] = None,
                     calibration: Optional[Tuple[Dict[str, np.ndarray],
                                                 Dict[str, np.ndarray]]] = None
                     ) -> DiagnosticReport:
    """Flag experimental images that deviate from what a generator trained
    on high-quality data predicts for the same field of view.

    If ``tau`` is omitted it is calibrated as mean - 2*std of the SSIM
    between generated outputs and real high-quality targets over the
    supplied ``calibration`` (confocal, target) validation pairs.
    """
    if set(confocal) != set(experimental):
        raise ValueError("diagnose_quality: confocal/experimental ids differ")
    net = generator_from_checkpoint(ckpt)
    if tau is None:
        if calibration is None:
            raise ValueError("diagnose_quality: need tau or a calibration set")
        cal_confocal, cal_targets = calibration
        scores = []
        for sid in sorted(cal_confocal):
            gen = _generated_intensity(net, cal_confocal[sid])
            params = metrics.SsimParams(dynamic_range=max_value_for(gen.dtype))
            scores.append(metrics.ssim(gen, cal_targets[sid], params))
        tau = float(np.mean(scores) - 2.0 * np.std(scores))
    report = DiagnosticReport(tau=tau)
    for sid in sorted(confocal):
        gen = _generated_intensity(net, confocal[sid])
        exp = experimental[sid]
        params = metrics.SsimParams(dynamic_range=max_value_for(gen.dtype))
        score = metrics.ssim(gen, exp, params)
        p = metrics.psnr(exp, gen, max_value_for(gen.dtype))
        report.samples.append(DiagnosticSample(id=sid, ssim=score, psnr_db=p,
                                               flagged=score < tau))
        diff = np.abs(gen.astype(np.int64) - exp.astype(np.int64))
        report.difference_maps[sid] = diff.astype(gen.dtype)
    return report
