"""Transfer-based sign-gradient attacks with scheduled step sizes and a dual example."""

from .attacks import AttackConfig, AttackState, run_attack
from .backend import BACKEND_NAME
from .dataset import DatasetSpec, generate
from .models import LabeledSample
from .schedules import ScheduleSpec, normalized_schedule
from .transforms import TransformSpec

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackState",
    "BACKEND_NAME",
    "DatasetSpec",
    "LabeledSample",
    "ScheduleSpec",
    "TransformSpec",
    "generate",
    "normalized_schedule",
    "run_attack",
    "__version__",
]
