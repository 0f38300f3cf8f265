"""deepbet: two-stage LinkNet brain extraction for T1w MRI volumes."""

from .augment import AugmentConfig
from .errors import DeepbetError
from .evaluate import DiceReport, benchmark, calibrate_threshold, dice, rotation_sweep
from .network import NetworkConfig, NetworkWeights, build_linknet, forward, gradients
from .nifti import read_nifti, write_nifti
from .orientation import canonicalize_orientation
from .phantom import PhantomSpec, generate, generate_set
from .pipeline import (ExtractResult, PipelineConfig, Predictor, expand_bbox,
                       extract, minimal_bbox, multi_slice_aggregate,
                       multi_view_aggregate, predict_stage1, predict_stage2_3d)
from .postprocess import fill_holes, largest_component
from .preprocess import PreprocessConfig, clip_intensities, correct_bias, normalize, preprocess
from .resample import resample
from .training import TrainConfig, train
from .volume import BoundingBox, Volume, crop, embed
from .weights_io import load_bundle, load_weights, save_bundle, save_weights

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "BoundingBox", "DeepbetError", "DiceReport",
    "ExtractResult", "NetworkConfig", "NetworkWeights", "PhantomSpec",
    "PipelineConfig", "Predictor", "PreprocessConfig", "TrainConfig", "Volume",
    "benchmark", "build_linknet", "calibrate_threshold", "canonicalize_orientation",
    "clip_intensities", "correct_bias", "crop", "dice", "embed", "expand_bbox",
    "extract", "fill_holes", "forward", "generate", "generate_set", "gradients",
    "largest_component", "load_bundle", "load_weights", "minimal_bbox",
    "multi_slice_aggregate", "multi_view_aggregate", "normalize",
    "predict_stage1", "predict_stage2_3d", "preprocess", "read_nifti",
    "resample", "rotation_sweep", "save_bundle", "save_weights", "train",
    "write_nifti",
]
