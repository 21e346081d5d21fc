"""
Module that loads all solver settings from the config file. The
bundled config.json is used unless the environment variable
COALITION_CORE_CONFIG points to another file. The comparison tolerance
can be overridden separately with COALITION_CORE_TOLERANCE.
"""

from dataclasses import dataclass
import os
from pathlib import Path

from dataclasses_json import dataclass_json

#: environment variable naming an alternative config file
CONFIG_PATH_VARIABLE = "COALITION_CORE_CONFIG"
#: environment variable overriding the comparison tolerance
TOLERANCE_VARIABLE = "COALITION_CORE_TOLERANCE"

DEFAULT_CONFIG_FILE = Path(__file__).parent / "config.json"


@dataclass_json
@dataclass
class SolverConfig:
    """
    Defines all numerical settings and size limits of the solvers
    """

    #: absolute tolerance of all comparisons
    tolerance: float = 1e-9
    #: maximum residual accepted for LP feasibility and complementary slackness
    lp_tolerance: float = 1e-6
    #: negative leftover slack down to this value is clamped to zero
    slack_clamp: float = 1e-6
    #: default markup / price increase factor of the best-response algorithms
    epsilon: float = 0.1
    #: largest agent count for exhaustive subset scans and LPs
    max_exhaustive_agents: int = 16
    #: largest number of assignments m^N enumerated by the brute force solver
    brute_force_limit: int = 100_000_000
    #: largest number of assignments enumerated by the lower bound search
    lower_bound_limit: int = 1_000_000
    #: iteration cap of local search loops without a proven bound
    max_iterations: int = 100_000


def load_config(path: Path | None = None) -> SolverConfig:
    """
    Loads the solver configuration and applies environment overrides.

    :param path: the config file to load; defaults to the file named by
                 COALITION_CORE_CONFIG or the bundled config.json
    :return: the configuration object
    """
    if path is None:
        path = Path(os.environ.get(CONFIG_PATH_VARIABLE, DEFAULT_CONFIG_FILE))
    with open(path, encoding="utf-8") as f:
        content = f.read()
    loaded: SolverConfig = SolverConfig.from_json(content)  # type: ignore[attr-defined]
    override = os.environ.get(TOLERANCE_VARIABLE)
    if override:
        loaded.tolerance = float(override)
    return loaded


config: SolverConfig = load_config()
