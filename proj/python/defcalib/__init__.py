"""Planar-target camera calibration with board deformation models."""

from ._core import (
    CalibError,
    CalibrationResult,
    Dataset,
    Intrinsics,
    Scenario,
    TargetSpec,
    calibrate,
    calibrate_subsets,
    compare,
    mapping_error,
    run_cli,
    synthesize,
    test_error,
)

__all__ = [
    "CalibError",
    "CalibrationResult",
    "Dataset",
    "Intrinsics",
    "Scenario",
    "TargetSpec",
    "calibrate",
    "calibrate_subsets",
    "compare",
    "mapping_error",
    "run_cli",
    "synthesize",
    "test_error",
]
