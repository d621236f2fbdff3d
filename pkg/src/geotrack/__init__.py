"""Geo-tracking by registering ground-vehicle sensor features against aerial feature maps.

Modules
-------
geodesy       geo-poses, SE(2) algebra, local metric frame
projection    camera projection, point feature sampling, grid-map rasterization
registration  masked FFT correlation over pose hypotheses
loss          soft triplet loss with soft OHEM and analytic gradients
calibration   score volume -> Gaussian pose observation, reliability gate
tracking      CTRA extended Kalman filter
world, providers, scenario
              synthetic worlds, feature providers and end-to-end runs
"""
from .calibration import GaussianPrior, PoseObservation, calibrate
from .config import PipelineConfig, load_config
from .geodesy import GeoPose, LocalFrame, Pose2
from .registration import ConfidenceVolume, HypothesisGrid, correlate
from .tracking import EkfState, ImuSample, Tracker

__version__ = "0.1.0"

__all__ = [
    "ConfidenceVolume", "EkfState", "GaussianPrior", "GeoPose", "HypothesisGrid", "ImuSample",
    "LocalFrame", "PipelineConfig", "Pose2", "PoseObservation", "Tracker", "calibrate", "correlate",
    "load_config",
]
