"""Reduce eye-tracker calibration distortion by warping saccade trajectories straight."""
from .attributes import ATTRIBUTE_NAMES, SaccadeAttributes, compute_attributes, curvature_angle, curvature_area
from .config import ConfigError, PipelineConfig
from .evaluation import AccuracyReport, ImprovementReport, SubsetAccuracy, accuracy, improvement
from .geometry import DEFAULT_GEOMETRY, ScreenGeometry, deg_to_px, px_to_deg
from .harness import loso_harness, projection_comparison
from .pipeline import ProcessedSession, process_session
from .preprocess import GazePreprocessor, preprocess
from .segmentation import Fixation, IVTSegmenter, IvtThresholds, Saccade, segment
from .selection import ForestConfig, LabeledSaccade, SaccadeForestClassifier, downsample_majority, label_by_loso, train
from .simulator import DistortionField, SimConfig, generate_session, generate_suite
from .stream import GazeStream, SessionRecord, StimulusLog
from .warpfield import ProjectionMode, SaccadeWarpCalibrator, WarpGrid, apply, calibrate

__version__ = "0.1.0"

__all__ = [
    "ATTRIBUTE_NAMES",
    "SaccadeAttributes",
    "compute_attributes",
    "curvature_angle",
    "curvature_area",
    "ConfigError",
    "PipelineConfig",
    "AccuracyReport",
    "ImprovementReport",
    "SubsetAccuracy",
    "accuracy",
    "improvement",
    "DEFAULT_GEOMETRY",
    "ScreenGeometry",
    "deg_to_px",
    "px_to_deg",
    "loso_harness",
    "projection_comparison",
    "ProcessedSession",
    "process_session",
    "GazePreprocessor",
    "preprocess",
    "Fixation",
    "IVTSegmenter",
    "IvtThresholds",
    "Saccade",
    "segment",
    "ForestConfig",
    "LabeledSaccade",
    "SaccadeForestClassifier",
    "downsample_majority",
    "label_by_loso",
    "train",
    "DistortionField",
    "SimConfig",
    "generate_session",
    "generate_suite",
    "GazeStream",
    "SessionRecord",
    "StimulusLog",
    "ProjectionMode",
    "SaccadeWarpCalibrator",
    "WarpGrid",
    "apply",
    "calibrate",
]
