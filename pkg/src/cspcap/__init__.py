"""Modulation classification from cyclostationarity-inspired features with a multi-branch CNN."""

from .config import RunConfig, load_config
from .features import CSPFeatureExtractor, FeatureKind, extract_features
from .frames import FrameDataset, generate_dataset
from .model import CAPClassifier, build_cap, layer_table, parameter_count
from .preprocessing import BOIFilter, UnitPowerNormalizer, preprocess_dataset
from .synthesis import CONFIG_2018, CONFIG_2022, FrameSpec, GenerationConfig, ModulationScheme, synthesize_frame
from .training import EvalReport, SplitSpec, cross_evaluate, evaluate, split_dataset, train

__version__ = "0.1.0"

__all__ = [
    "BOIFilter", "CAPClassifier", "CONFIG_2018", "CONFIG_2022", "CSPFeatureExtractor", "EvalReport",
    "FeatureKind", "FrameDataset", "FrameSpec", "GenerationConfig", "ModulationScheme", "RunConfig",
    "SplitSpec", "UnitPowerNormalizer", "build_cap", "cross_evaluate", "evaluate", "extract_features",
    "generate_dataset", "layer_table", "load_config", "parameter_count", "preprocess_dataset",
    "split_dataset", "synthesize_frame", "train",
]
