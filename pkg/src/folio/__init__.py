"""folio: a numerical laboratory for finite metric measure spaces.

Build spaces (spheres, weighted intervals, products, group quotients),
transport measures between them exactly or entropically, partition them
into foliations and certify the quotient identities, and study the graph
Laplacian spectra and entropy flows on both levels.
"""

from .errors import (
    BandwidthError,
    ConvergenceError,
    DimensionError,
    FolioError,
    GenerationError,
    OptimizationError,
    PartitionError,
    UnbalancedMarginalsError,
    UnsupportedGeometryError,
)
from .flows import (
    ConvexityReport,
    EDEReport,
    FlowTrajectory,
    ede_audit,
    entropy_slope,
    entropy_slope_probe,
    heat_flow,
    k_convexity_audit,
)
from .foliation import (
    FoliationBundle,
    FoliationReport,
    MMFoliationReport,
    build_quotient,
    check_metric_foliation,
    check_mm_foliation,
    disintegrate,
    dump_partition,
    fiber_average,
    load_partition,
    partition_from_json,
    partition_to_json,
    pullback_entropy_gap,
    pullback_function,
    pullback_measure,
)
from .generators import (
    cycle_space,
    gaussian_line,
    generate_from_config,
    group_quotient,
    interval_quotient,
    lq_product,
    path_space,
    reflection_permutation,
    rotation_permutation,
    sphere_distance_partition,
    sphere_mesh,
    warped_product,
)
from .spaces import (
    FiniteMMSpace,
    ValidationReport,
    as_density,
    as_prob_vector,
    dump_space,
    load_space,
    relative_entropy,
    space_from_json,
    space_to_json,
    validate_space,
    vg_integral,
)
from .spectral import (
    ContainmentReport,
    GapResult,
    GraphOperator,
    Spectrum,
    build_kernel_graph,
    chain_graph,
    containment_check,
    cycle_graph,
    dirichlet_energy_q,
    graph_operator,
    laplacian_spectrum,
    local_slope,
    product_graph,
    quadratic_form,
    quotient_graph,
    spectral_gap_q,
)
from .transport import (
    TransportPlan,
    check_plan_realizes_quotient,
    displacement_interpolate_1d,
    pushforward,
    sinkhorn,
    solve_ot,
    wasserstein,
    wasserstein_1d,
)

__version__ = "0.1.0"
