"""Mean-difference tests for partially matched pre/post data, with the Monte
Carlo machinery used to calibrate and compare them."""

__version__ = "0.1.0"

from .data import build_dataset, load_dataset, parse_csv
from .errors import PartialMatchError
from .grid import QUANTILE_GRID, QuantileGrid
from .ttests import (
    CorrelationEstimate,
    Method,
    PartiallyMatchedDataset,
    TestResult,
    correlated_t,
    paired_t,
    pearson_cor,
    pearson_t,
    quantile_cor,
    quantile_t,
    run_test,
    two_sample_t,
)

__all__ = [
    "CorrelationEstimate",
    "Method",
    "PartialMatchError",
    "PartiallyMatchedDataset",
    "QUANTILE_GRID",
    "QuantileGrid",
    "TestResult",
    "build_dataset",
    "correlated_t",
    "load_dataset",
    "paired_t",
    "parse_csv",
    "pearson_cor",
    "pearson_t",
    "quantile_cor",
    "quantile_t",
    "run_test",
    "two_sample_t",
]
