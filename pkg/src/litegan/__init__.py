"""litegan: lightweight GAN-based confocal-to-STED image translation.

A nine-model U-Net generator family (heavy doubling-channel variants down
to a ~10^4-parameter fixed-width variant), Pix2Pix and CycleGAN training
with scikit-learn style estimators, synthetic paired-data generation via
Richardson-Lucy deconvolution, image-quality metrics, and a GAN-based
diagnostic for experimental image quality.
"""

from .models import (Doubling, Fixed, GeneratorSpec, DiscriminatorSpec,
                     MODEL_PRESETS, UnetGenerator, PatchDiscriminator,
                     build_generator, build_discriminator, count_parameters,
                     count_generator_parameters, count_discriminator_parameters,
                     estimate_storage, parse_policy)
from .losses import (LossWeights, LossBreakdown, l1_loss, adversarial_loss,
                     cycle_loss, identity_loss, pix2pix_objective, cyclegan_objective)
from .metrics import (SsimParams, MetricReport, SampleMetrics, PSNR_CAP_DB,
                      mse, psnr, normalized_psnr, ssim, line_profile, pearson,
                      count_profile_peaks, evaluate_pairset)
from .checkpoint import Checkpoint, CheckpointError, save_checkpoint, load_checkpoint
from .train import (TrainConfig, RunRecord, Pix2PixTranslator, CycleGANTranslator,
                    train_pix2pix, train_cyclegan, cross_validate, reinitialize,
                    infer, time_inference, diagnose_quality, DiagnosticReport,
                    generator_from_checkpoint)
from . import data, ops

__version__ = "0.1.0"

__all__ = [
    "Doubling", "Fixed", "GeneratorSpec", "DiscriminatorSpec", "MODEL_PRESETS",
    "UnetGenerator", "PatchDiscriminator", "build_generator", "build_discriminator",
    "count_parameters", "count_generator_parameters", "count_discriminator_parameters",
    "estimate_storage", "parse_policy",
    "LossWeights", "LossBreakdown", "l1_loss", "adversarial_loss", "cycle_loss",
    "identity_loss", "pix2pix_objective", "cyclegan_objective",
    "SsimParams", "MetricReport", "SampleMetrics", "PSNR_CAP_DB", "mse", "psnr",
    "normalized_psnr", "ssim", "line_profile", "pearson", "count_profile_peaks",
    "evaluate_pairset",
    "Checkpoint", "CheckpointError", "save_checkpoint", "load_checkpoint",
    "TrainConfig", "RunRecord", "Pix2PixTranslator", "CycleGANTranslator",
    "train_pix2pix", "train_cyclegan", "cross_validate", "reinitialize", "infer",
    "time_inference", "diagnose_quality", "DiagnosticReport",
    "generator_from_checkpoint",
    "data", "ops",
]
