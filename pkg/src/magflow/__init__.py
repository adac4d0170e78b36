"""Periodic orbits of magnetic flows on surfaces by minimax on free-period loop space."""

__version__ = "0.1.0"

from .dynamics import PhasePoint, TangentPoint, TonelliSystem, integrate  # noqa: E402,F401
from .geometry import ModelSurface  # noqa: E402,F401
from .loopspace import DiscreteLoop, LoopPath, LoopTangent  # noqa: E402,F401
