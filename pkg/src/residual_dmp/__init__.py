"""Full-pose DMPs with residual policy corrections and a peg-in-hole benchmark."""

from .dmp import (
    BasisSet,
    CanonicalState,
    DmpParams,
    DmpState,
    FitError,
    Trajectory,
    basis_activations,
    canonical_step,
    differentiate_demo,
    dmp_step,
    fit_from_demo,
    forcing_term,
    rollout,
)
from .env import (
    EnvConfig,
    EnvState,
    SocketGeometry,
    StepResult,
    ToyInsertionEnv,
    make_task,
    measure_forces,
    measure_insertion_time,
)
from .orientation import (
    OrientationDmpParams,
    OrientationState,
    fit_orientation_dmp,
    orientation_dmp_step,
    orientation_rollout,
)
from .policies import (
    ActionBounds,
    ExplorationLocus,
    LinearPolicyState,
    Observation,
    ResidualAction,
    compose_full_pose,
    hold_and_interpolate,
    inject_exploration,
    linear_policy_act,
    linear_policy_update,
    random_policy,
    residual_schedule,
)
from .quaternions import (
    AngleAxisResidual,
    DegenerateAxisError,
    UnitQuaternion,
    angle_axis_to_quat,
    apply_orientation_residual,
    quat_compose,
    quat_error_to_angular_velocity,
    quat_exp,
    quat_log,
    quat_to_matrix,
    rotate_vector,
)
from .rl import (
    DenseReward,
    EpisodeRecord,
    SparseReward,
    compute_return,
    curriculum_step,
    dense_reward,
    sparse_reward,
)
from .runner import TaskSetup, build_task, evaluate, policy_act, run_episode
from .sac import SacConfig, SacLearner
from .ppo import PpoConfig, PpoLearner

__version__ = "0.1.0"
