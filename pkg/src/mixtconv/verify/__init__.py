"""Independent oracles, gradient checking and the motion-direction experiment."""

from .direction import DirectionDataset, make_direction_dataset, run_direction_experiment
from .gradcheck import GradCheckReport, finite_diff_check
from .properties import PropResult

__all__ = [
    "DirectionDataset",
    "GradCheckReport",
    "PropResult",
    "finite_diff_check",
    "make_direction_dataset",
    "run_direction_experiment",
]
