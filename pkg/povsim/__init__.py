# logger (basicConfig must be called before importing anything)
import logging
import sys
logging.basicConfig(stream=sys.stdout, level=logging.INFO)

from povsim.dataset import Dataset, load_csv, make_synthetic, split
from povsim.simulation import SimulationConfig, aggregate, run_experiment, run_single_simulation

__version__ = "1.0.0"
