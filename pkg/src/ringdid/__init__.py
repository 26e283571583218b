"""Ring difference-in-differences and distance-binned treatment effect curves."""

from .data_model import (
    Dataset,
    DistanceSample,
    Observation,
    PanelDiffs,
    Point,
    compute_distances,
    empirical_quantile,
    first_differences,
    subsample_within,
)
from .errors import DataError, EstimationError, RingDidError, SpecError
from .ring import (
    RingEstimate,
    RingSpec,
    ring_estimate_panel,
    ring_estimate_rc,
)
from .curve import (
    AggregateEffect,
    BinStats,
    Partition,
    TailCheck,
    TauCurve,
    aggregate_ate,
    bin_statistics,
    build_partition,
    select_bins,
    tail_zero_check,
    tau_curve_panel,
    tau_curve_rc,
)
from .dgp import (
    BinMeans,
    Constant,
    DgpSpec,
    Linear,
    LinearDecay,
    McReport,
    McTarget,
    QuantileTable,
    RcRingOracle,
    RingOracle,
    TableFn,
    TargetDraw,
    Uniform,
    Zero,
    curve_estimator,
    generate,
    monte_carlo,
    oracle_bin_means,
    oracle_rc_expectation,
    oracle_ring_expectation,
    oracle_tau_bar,
    replication_seed,
    ring_estimator,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DistanceSample",
    "Observation",
    "PanelDiffs",
    "Point",
    "compute_distances",
    "empirical_quantile",
    "first_differences",
    "subsample_within",
    "DataError",
    "EstimationError",
    "RingDidError",
    "SpecError",
    "RingEstimate",
    "RingSpec",
    "ring_estimate_panel",
    "ring_estimate_rc",
    "AggregateEffect",
    "BinStats",
    "Partition",
    "TailCheck",
    "TauCurve",
    "aggregate_ate",
    "bin_statistics",
    "build_partition",
    "select_bins",
    "tail_zero_check",
    "tau_curve_panel",
    "tau_curve_rc",
    "BinMeans",
    "Constant",
    "DgpSpec",
    "Linear",
    "LinearDecay",
    "McReport",
    "McTarget",
    "QuantileTable",
    "RcRingOracle",
    "RingOracle",
    "TableFn",
    "TargetDraw",
    "Uniform",
    "Zero",
    "curve_estimator",
    "generate",
    "monte_carlo",
    "oracle_bin_means",
    "oracle_rc_expectation",
    "oracle_ring_expectation",
    "oracle_tau_bar",
    "replication_seed",
    "ring_estimator",
    "__version__",
]
