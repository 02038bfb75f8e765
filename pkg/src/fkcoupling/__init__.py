"""Coupled heat-bath dynamics for the random-cluster model in a box.

A standard chain and a disconnection-conditioned twin run on shared
randomness; the package builds the box geometry, maintains cluster
connectivity under free/wired/top-bottom boundary conditions, measures
the interface and pivotal structure between the chains, colors coupled
pairs into three spin fields, and orchestrates reproducible experiments.
"""

from .connectivity import AdHocGraph, BoundaryCondition, ClusterIndex, build_index
from .dynamics import (
    CoupledState,
    DynamicsParams,
    init_state,
    load_checkpoint,
    marginal_check,
    run,
    save_checkpoint,
    step,
)
from .geometry import (
    BoxGeometry,
    alpha,
    build_box,
    edge_distance,
    neighborhood,
    rotation_2d,
    set_distance,
    split_tb,
    star_neighbors,
)
from .harness import ExperimentConfig, ObservableRecord, run_experiment
from .interface import (
    explore_cplus,
    extract_minimal_cut,
    hausdorff_semi_distance,
    interface_set,
    is_minimal_cut,
    is_separating,
    longest_closed_star_path_from,
    pivotal_set,
)
from .measure import (
    ExactTable,
    FKParams,
    comparison_parameter,
    exact_distribution,
    exact_mean,
    heat_bath_close_prob,
    log_weight,
    weight,
)
from .spins import (
    IsingSets,
    SpinTriple,
    color_triple,
    exact_ising_distribution,
    ising_interface_sets,
    spin_cut_query,
)

__version__ = "0.1.0"
