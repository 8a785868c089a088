"""Public-data benchmark for daily government-bond CIP deviations."""

from cipbench.errors import BenchError, ConfigError, DataError, NumericalError, RankDeficientError

__version__ = "0.1.0"

BASELINE = ("NFCI_lag", "Dollar_lag", "Slope_lag")

__all__ = [
    "BASELINE",
    "BenchError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "RankDeficientError",
]
