"""Deterministic master-slave teleoperation simulator with clutch-based
force feedback.

The core loop couples a five joint master exoskeleton to a seven joint
slave arm over delayed channels; contact forces on the slave map back to
per-joint resistive torques through a current-to-torque law with first
order magnetization dynamics.

Heavier entry points stay in their own modules to keep import light:
mrteleop.report (matplotlib figures), mrteleop.bridge (WebSocket streaming),
mrteleop.cli (command line front end).
"""

from mrteleop.calibrate import (
    CalibrationError,
    CalibrationResult,
    CalibrationTarget,
    calibrate_scenario,
    calibrate_stiffness,
    measure_windows,
)
from mrteleop.clutch import (
    ClutchSaturationError,
    ClutchSpec,
    ClutchState,
    DemagParams,
    FitError,
    FitResult,
    HillParams,
    TimeConstants,
    demag_waveform,
    fit_hill,
    hill_torque,
    idle_clutch_state,
    inverse_hill,
    performance_metrics,
    read_current_torque_csv,
    step_magnetization,
)
from mrteleop.feedback import (
    FeedbackConfig,
    JointCommand,
    feedback_pipeline,
    trigger_manual_demag,
    wrench_to_joint_torques,
)
from mrteleop.kinematics import (
    ARM_LINK_LENGTHS,
    DHRow,
    IKParams,
    IKResult,
    KinematicChain,
    Pose,
    WorkspaceMap,
    dh_transform,
    exoskeleton_chain,
    forward_kinematics,
    inverse_kinematics_dls,
    map_workspace,
    numeric_jacobian,
    seven_dof_arm_chain,
)
from mrteleop.operator import (
    OperatorModel,
    OperatorState,
    ReflexConfig,
    SEMGCalibration,
    TrajectoryScript,
    interpolate_script,
    rms_window,
    scripted_operator_step,
    semg_proxy,
)
from mrteleop.scenario_io import (
    ScenarioError,
    fixture_names,
    fixture_path,
    load_scenario_file,
    resolve_scenario_source,
    scenario_from_dict,
    write_scenario_dict,
)
from mrteleop.session import (
    Channel,
    ChannelConfig,
    ChannelMessage,
    Scenario,
    Session,
    TelemetryRecord,
    collision_summary,
    collision_windows,
    count_collision_events,
    export_telemetry,
    import_telemetry,
    run_scenario,
    telemetry_header,
)
from mrteleop.slave_env import (
    STIFFNESS_PRESETS,
    ContactState,
    ForceSample,
    RigidObject,
    contact_force,
    sense_force,
    step_slave,
)

__version__ = "0.1.0"

__all__ = [
    "ARM_LINK_LENGTHS",
    "CalibrationError",
    "CalibrationResult",
    "CalibrationTarget",
    "Channel",
    "ChannelConfig",
    "ChannelMessage",
    "ClutchSaturationError",
    "ClutchSpec",
    "ClutchState",
    "ContactState",
    "DHRow",
    "DemagParams",
    "FeedbackConfig",
    "FitError",
    "FitResult",
    "ForceSample",
    "HillParams",
    "IKParams",
    "IKResult",
    "JointCommand",
    "KinematicChain",
    "OperatorModel",
    "OperatorState",
    "Pose",
    "ReflexConfig",
    "RigidObject",
    "SEMGCalibration",
    "STIFFNESS_PRESETS",
    "Scenario",
    "ScenarioError",
    "Session",
    "TelemetryRecord",
    "TimeConstants",
    "TrajectoryScript",
    "WorkspaceMap",
    "calibrate_scenario",
    "calibrate_stiffness",
    "collision_summary",
    "collision_windows",
    "contact_force",
    "count_collision_events",
    "demag_waveform",
    "dh_transform",
    "exoskeleton_chain",
    "export_telemetry",
    "feedback_pipeline",
    "fit_hill",
    "fixture_names",
    "fixture_path",
    "forward_kinematics",
    "hill_torque",
    "idle_clutch_state",
    "import_telemetry",
    "interpolate_script",
    "inverse_hill",
    "inverse_kinematics_dls",
    "load_scenario_file",
    "map_workspace",
    "measure_windows",
    "numeric_jacobian",
    "performance_metrics",
    "read_current_torque_csv",
    "resolve_scenario_source",
    "rms_window",
    "run_scenario",
    "scenario_from_dict",
    "scripted_operator_step",
    "semg_proxy",
    "sense_force",
    "step_magnetization",
    "step_slave",
    "telemetry_header",
    "trigger_manual_demag",
    "wrench_to_joint_torques",
    "write_scenario_dict",
    "__version__",
]
