"""Semi-discrete optimal transport via power-diagram height descent, with
Wasserstein barycenters, balanced clustering, spherical domains, and exact
small-instance oracles."""

from .measures import DiscreteMeasure, cell_masses, normalize, total_mass
from .power_diagram import PowerCellReport, assign_euclidean, assign_spherical, power_weights
from .vot_solver import (
    UnbalancedResult,
    VotConfig,
    VotResult,
    dual_energy,
    solve_unbalanced,
    solve_vot,
    transport_cost,
    vot_gradient,
)
from .barycenter import (
    BarycenterConfig,
    BarycenterResult,
    BarycenterState,
    RigidTransform,
    average_rigid,
    estimate_rigid,
    solve_vwb,
    solve_vwb_rigid,
    total_wasserstein,
    update_measures,
    update_supports,
    vwd,
)
from .clustering import (
    ClusteringConfig,
    ClusteringResult,
    CoclusterResult,
    cocluster,
    lloyd_kmeans,
    regularized_kmeans,
)
from .metrics_oracle import (
    Exact1DBackend,
    NMetricReport,
    TransportPlan,
    brute_force_monge,
    check_nmetric,
    exact_1d_barycenter,
    exact_ot_lp,
    w2_uniform_1d,
)
from .spherical import (
    SphericalVotResult,
    solve_vot_sphere,
    solve_vwb_sphere,
    total_spherical,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
