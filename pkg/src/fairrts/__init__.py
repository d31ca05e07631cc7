"""fairrts: a deterministic mini-RTS economy with fairness-constrained
action interfaces, replay metrics, and a small actor-critic harness."""

__version__ = "0.1.0"

from .fairness import PRESETS, ProblemSpec, SpecParseError, format_spec, parse_spec
from .sim import GameState, SimConfig, new_game, tick

__all__ = [
    "PRESETS",
    "ProblemSpec",
    "SpecParseError",
    "format_spec",
    "parse_spec",
    "GameState",
    "SimConfig",
    "new_game",
    "tick",
    "__version__",
]
