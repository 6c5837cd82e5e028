"""Landmark-based localization in forests from lidar trunk triangulations."""

from .dtgraph import (
    DTGraph,
    TriangleDescriptor,
    TriangleStar,
    load_graph,
    save_graph,
    select_interior_stars,
    triangle_descriptors,
    triangulate,
)
from .errors import (
    AmbiguousCorrespondenceError,
    DegeneratePointSetError,
    DegenerateStarError,
    EmptyCloudError,
    ForestLocError,
    InfeasibleForestError,
    InsufficientMatchesError,
    NoOverlapError,
    SizeCapError,
)
from .geometry import RigidTransform2D, SpatialIndex3, load_xyz, normalize_angle, save_xyz
from .matching import (
    Correspondence,
    LocalizationResult,
    MatchParams,
    OracleResult,
    brute_force_match_oracle,
    correspond_vertices,
    dissimilarity,
    estimate_transform,
    find_candidate_stars,
    localize,
    verification_residual,
)
from .pipeline import (
    BenchmarkConfig,
    BenchmarkDetail,
    BenchmarkRow,
    PipelineResult,
    run_benchmark,
    run_pipeline,
    write_benchmark_csv,
)
from .simulator import (
    Forest,
    ForestSpec,
    ScannerSpec,
    SimulatedScan,
    aggregate_scans,
    generate_forest,
    simulate_scan,
)
from .trunks import (
    TrunkCluster,
    TrunkExtractionParams,
    TrunkMap,
    cluster_trunk_points,
    extract_trunk_map,
    select_trunk_points,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousCorrespondenceError",
    "BenchmarkConfig",
    "BenchmarkDetail",
    "BenchmarkRow",
    "Correspondence",
    "DegeneratePointSetError",
    "DegenerateStarError",
    "DTGraph",
    "EmptyCloudError",
    "Forest",
    "ForestLocError",
    "ForestSpec",
    "InfeasibleForestError",
    "InsufficientMatchesError",
    "LocalizationResult",
    "MatchParams",
    "NoOverlapError",
    "OracleResult",
    "PipelineResult",
    "RigidTransform2D",
    "ScannerSpec",
    "SimulatedScan",
    "SizeCapError",
    "SpatialIndex3",
    "TriangleDescriptor",
    "TriangleStar",
    "TrunkCluster",
    "TrunkExtractionParams",
    "TrunkMap",
    "aggregate_scans",
    "brute_force_match_oracle",
    "cluster_trunk_points",
    "correspond_vertices",
    "dissimilarity",
    "estimate_transform",
    "extract_trunk_map",
    "find_candidate_stars",
    "generate_forest",
    "load_graph",
    "load_xyz",
    "localize",
    "normalize_angle",
    "run_benchmark",
    "run_pipeline",
    "save_graph",
    "save_xyz",
    "select_interior_stars",
    "select_trunk_points",
    "simulate_scan",
    "triangle_descriptors",
    "triangulate",
    "verification_residual",
    "write_benchmark_csv",
]
