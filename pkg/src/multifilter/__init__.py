"""Multiple filter detection of rate and variance change points in point processes."""

from .detector import (
    ChangePoint,
    PipelineResult,
    StepProfile,
    TestResult,
    correctly_detected,
    estimate_profile,
    mfa,
    mft_test,
    sequential_pipeline,
)
from .filtered_derivative import (
    SegmentMeans,
    moment_processes,
    nu_hat,
    rate_processes,
    variance_processes,
    window_index_sets,
)
from .limit_law import Grid, LTildeParams, Threshold, calibrate, estimate_Q, l_process, l_tilde_process
from .renewal_sim import ChangePointModel, LifetimeLaw, RandomDesign, sample_composite, sample_renewal
from .series import EventSeries, read_events, write_events

__version__ = "0.1.0"

__all__ = [
    "ChangePoint", "ChangePointModel", "EventSeries", "Grid", "LTildeParams", "LifetimeLaw",
    "PipelineResult", "RandomDesign", "SegmentMeans", "StepProfile", "TestResult", "Threshold",
    "calibrate", "correctly_detected", "estimate_Q", "estimate_profile", "l_process",
    "l_tilde_process", "mfa", "mft_test", "moment_processes", "nu_hat", "rate_processes",
    "read_events", "sample_composite", "sample_renewal", "sequential_pipeline",
    "variance_processes", "window_index_sets", "write_events",
]
