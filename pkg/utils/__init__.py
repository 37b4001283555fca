# Import modules (not their contents)
# Note: Manager classes should be imported directly from utils.manager.* to avoid circular imports
from . import shared
from . import validators
from . import numerics
from . import model
from . import banks
from . import graph
from . import losses
from . import trainer
from . import data
from . import diagnostics
from . import experiment
from . import generate_report

__all__ = [
    # Subpackages
    "shared", "validators",
    # Top-level modules
    "numerics", "model", "banks", "graph", "losses", "trainer", "data", "diagnostics", "experiment",
    "generate_report",
]
