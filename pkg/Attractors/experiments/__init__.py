from .config import ConfigError, build_config, load_config
from .report import ExperimentReport

from .dissipative import run_dissipative
from .stability import run_pair_stability, run_smoothing
from .regularization import run_regularization
from .propagation import run_propagation
from .dimension import run_dimension

# Study name (as in the Studies enum and on the command line) to its runner.
STUDIES = {"dissipative": run_dissipative,
           "pair": run_pair_stability,
           "smoothing": run_smoothing,
           "regularization": run_regularization,
           "propagation": run_propagation,
           "dimension": run_dimension}
