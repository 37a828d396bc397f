"""Prototype-based and nearest-neighbor rules in general metric spaces.

Plug-in classifiers (Proto-NN, Proto-k-NN, k-NN, a gamma-net selector), a
partitioning regressor, synthetic families with known posteriors, and a
seeded Monte-Carlo harness for measuring convergence rates.
"""

from .metric import (
    AugmentedSpace,
    DiscreteSpace,
    EditSpace,
    EuclideanSpace,
    Lifted,
    LpSpace,
    MetricAxiomError,
    MetricSpace,
    TableSpace,
    UniverseError,
    augment,
    default_delta,
    parse_metric,
)
from .neighbors import NeighborList, PivotIndex, build_pivot_index, k_nearest, k_nearest_pruned
from .partition import CellStats, VoronoiPartition, assign_cell, build_partition, tally
from .models import (
    GammaNetModel,
    KNNModel,
    LabeledDataset,
    PartitionRegressor,
    ProtoKNNModel,
    ProtoNNModel,
    build_gamma_net,
    fit_knn,
    fit_optinet_lite,
    fit_partition_regressor,
    fit_proto_knn,
    fit_proto_nn,
    predict,
    predict_knn,
    predict_regression,
    select_m_holdout,
)
from .synthetic import (
    DistributionSpec,
    bayes_risk,
    check_generalized_lipschitz,
    check_margin,
    integrate_bayes_risk,
    list_families,
    parse_family,
    sample,
)
from .harness import (
    ExperimentConfig,
    RiskReport,
    conditional_risk,
    fit_log_slope,
    rate_sweep,
)
from .decomposition import DecompositionReport, FiniteSpec, enumerate_labels, verify_decomposition
from .persistence import load_model, save_model

__version__ = "0.1.0"
