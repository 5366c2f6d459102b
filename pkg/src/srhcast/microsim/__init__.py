"""Dynamic demographic microsimulation engine."""

from .config import ScenarioConfig, TfrSchedule, net_migration_target
from .engine import RunResult, initialize, run, run_many
from .rates import RateTable, TransitionTable, load_tables
from .rng import substream
from .state import PopulationState

__all__ = [
    "PopulationState",
    "RateTable",
    "RunResult",
    "ScenarioConfig",
    "TfrSchedule",
    "TransitionTable",
    "initialize",
    "load_tables",
    "net_migration_target",
    "run",
    "run_many",
    "substream",
]
