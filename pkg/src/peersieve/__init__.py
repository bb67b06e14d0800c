"""Malicious-collaborator screening for cooperative perception.

The package simulates agents that share bird's-eye-view perception outputs,
scores how consistent a fused view is with the ego's own view, isolates
malicious collaborators by adaptive group testing, and keeps the decision
threshold calibrated online from two labeled score windows.
"""

from .bench import (
    E2EResult,
    FrameRow,
    SweepSpec,
    SweepSummary,
    TrialRecord,
    check_thm1,
    check_thm2,
    check_thm3,
    convergence_summary,
    run_e2e,
    run_sweep,
    run_threshold_trace,
    summarize,
)
from .consistency import (
    DUMMY,
    CCLossParams,
    MatchResult,
    assign_min_cost,
    box_loss,
    ccloss_det,
    ccloss_seg,
    iou,
)
from .oracle import (
    CCLossOracle,
    ScoreDistributions,
    SyntheticOracle,
    SyntheticOracleSpec,
    ccloss_test,
    sample_score,
    synthetic_test,
)
from .pasac import (
    PasacConfig,
    PasacResult,
    TraceRecord,
    ceil_log2,
    error_bound,
    linear_scan,
    pasac_run,
    query_bound,
    random_consensus,
)
from .rng import derive_seed, make_rng, splitmix64
from .scene import (
    AgentModel,
    AttackKind,
    AttackSpec,
    GroundTruthObject,
    Role,
    Scene,
    SimConfig,
    corrupt,
    fuse_detections,
    fuse_segmaps,
    gen_scene,
    load_sim_config,
    observe,
    parse_sim_config,
)
from .threshold import (
    ThresholdParams,
    ThresholdState,
    ThresholdTraceRow,
    classify,
    empirical_quantile,
    threshold_update,
    update_with_trace,
)
from .types import (
    BoxProposal,
    ConfigError,
    DetectionSet,
    OracleVerdict,
    PerceptionOutput,
    SegGrid,
    Verdict,
)

__version__ = "0.1.0"

__all__ = [
    "AgentModel", "AttackKind", "AttackSpec", "BoxProposal", "CCLossOracle",
    "CCLossParams", "ConfigError", "DetectionSet", "DUMMY", "E2EResult",
    "FrameRow", "GroundTruthObject", "MatchResult", "OracleVerdict",
    "PasacConfig", "PasacResult", "PerceptionOutput", "Role", "Scene",
    "ScoreDistributions", "SegGrid", "SimConfig", "SweepSpec", "SweepSummary",
    "SyntheticOracle", "SyntheticOracleSpec", "ThresholdParams",
    "ThresholdState", "ThresholdTraceRow", "TraceRecord", "TrialRecord",
    "Verdict", "assign_min_cost", "box_loss", "ccloss_det", "ccloss_seg",
    "ccloss_test", "ceil_log2", "check_thm1", "check_thm2", "check_thm3",
    "classify", "convergence_summary", "corrupt", "derive_seed",
    "empirical_quantile", "error_bound", "fuse_detections", "fuse_segmaps",
    "gen_scene", "iou", "linear_scan", "load_sim_config", "make_rng",
    "observe", "parse_sim_config", "pasac_run", "query_bound",
    "random_consensus", "run_e2e", "run_sweep", "run_threshold_trace",
    "sample_score", "splitmix64", "summarize", "synthetic_test",
    "threshold_update", "update_with_trace",
]
