"""Steganalysis of LSB matching with patterns of pixel differences (PPD)."""

from .analysis import (d_class_histogram, exact_shift_distribution,
                       sequential_embedding_trajectory, shift_experiment,
                       theoretical_histogram, variation_summary)
from .embed import EmbedParams, embed_full, embed_rate
from .experiment import EvalReport, ExperimentConfig, roc_curve, run_evaluation, sweep_s, time_features
from .image_io import GrayImage, ImageFormatError, load_image, save_image
from .patterns import (FeatureVector, PatternCounts, PpdParams, count_patterns,
                       extract_features, extract_patterns, pattern_index)
from .svm import SvmModel, grid_search, load_model, predict, save_model, train_smo

__version__ = "0.1.0"
