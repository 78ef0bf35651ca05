from .images import load_image, save_image, max_value_for
from .preprocess import (contrast_stretch, register_translation, pad_to_square,
                         normalize_to_net, denormalize_from_net, net_to_intensity,
                         augment, apply_dihedral, preprocess_image)
from .deconv import gaussian_psf, rl_deconvolve
from .synth import SynthConfig, SampleTriplet, synth_generate, two_filament_phantom
from .datasets import (Dataset, FoldAssignment, load_dataset, write_dataset, make_folds)

__all__ = [
    "load_image", "save_image", "max_value_for",
    "contrast_stretch", "register_translation", "pad_to_square",
    "normalize_to_net", "denormalize_from_net", "net_to_intensity",
    "augment", "apply_dihedral", "preprocess_image",
    "gaussian_psf", "rl_deconvolve",
    "SynthConfig", "SampleTriplet", "synth_generate", "two_filament_phantom",
    "Dataset", "FoldAssignment", "load_dataset", "write_dataset", "make_folds",
]
