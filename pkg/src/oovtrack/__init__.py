"""oovtrack: camera pose estimation from out-of-view feature-point heatmaps.

Feature points of a known object are localised as heatmap peaks in a
coordinate frame that extends beyond the input image: image coordinates
are contracted toward the heatmap centre by a scale factor s <= 1, so a
predictor can place peaks for points that fall outside the image.  Two
trackers consume such heatmaps (a particle filter and a gradient-descent
optimiser over negative-log cost maps), and an evaluation harness measures
pose-recovery robustness as the visible fraction of the object shrinks.
"""

__version__ = "0.1.0"

from .errors import (
    BadMagic,
    ChannelOutOfRange,
    ConfigError,
    DegenerateConfiguration,
    DegenerateHull,
    DegenerateRotation,
    DepthError,
    Diverged,
    NonFiniteCost,
    NoSolution,
    OOVHFormatError,
    OovtrackError,
    SingularTransform,
    TruncatedFile,
    VersionMismatch,
)
from .geometry import (
    Affine2,
    CameraIntrinsics,
    ObjectModel,
    Pose,
    ScaleConfig,
    apply_affine,
    from_heatmap_space,
    invert_affine,
    project,
    to_heatmap_space,
)
from .heatmap import (
    CostStack,
    HeatmapStack,
    peaks,
    render_labels,
    sample,
    sample_cost,
    smooth,
    to_cost,
)
from .predictor import (
    FilePredictor,
    NoiseConfig,
    OraclePredictor,
    SceneTruth,
    load_heatmaps,
    oracle_predict,
    save_heatmaps,
)
from .pnp import Correspondences, refine_pose, reprojection_rms, solve_pnp
from .particle_filter import (
    MotionConfig,
    ParticleFilterTracker,
    ParticleSet,
    estimate,
    init_particles,
    motion_update,
    resample,
    step,
    weigh,
)
from .optimizer import (
    OptResult,
    OptSettings,
    OptStatus,
    build_cost,
    optimise,
    pose_cost,
    pose_gradient,
    pose_gradient_fd,
    projection_jacobian,
)
from .evaluation import (
    ErrorTriple,
    SweepConfig,
    SweepResult,
    TransformRanges,
    View,
    convex_hull,
    generate_view,
    pose_errors,
    reference_model,
    reference_scene,
    run_sweep,
    visibility_fraction,
)
