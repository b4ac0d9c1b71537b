"""Scenario file loading and validation.

Scenarios are JSON documents with sections master, slave, map, objects,
script, feedback, clutch, channel, operator, ik and run. Every key is
optional except the run block's duration; defaults match the library
dataclasses. Validation failures raise ScenarioError naming the offending
key path (e.g. "feedback.gain: must be > 0").
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from mrteleop.clutch import ClutchSpec, DemagParams, HillParams, TimeConstants
from mrteleop.feedback import FeedbackConfig
from mrteleop.kinematics import (
    DHRow,
    IKParams,
    KinematicChain,
    WorkspaceMap,
    exoskeleton_chain,
    seven_dof_arm_chain,
)
from mrteleop.operator import OperatorModel, ReflexConfig, SEMGCalibration, TrajectoryScript
from mrteleop.session import ChannelConfig, Scenario
from mrteleop.slave_env import RigidObject, STIFFNESS_PRESETS

__all__ = [
    "ScenarioError",
    "fixture_names",
    "fixture_path",
    "load_scenario_file",
    "resolve_scenario_source",
    "scenario_from_dict",
    "write_scenario_dict",
]


class ScenarioError(ValueError):
    """Scenario file is malformed; the message names the offending key path."""


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ScenarioError(f"{path}: must be an object")
    return value


def _check_keys(section, allowed, path):
    for key in section:
        if key not in allowed:
            raise ScenarioError(f"{path}.{key}: unknown key (expected one of {sorted(allowed)})")


def _number(section, key, path, default=None, minimum=None, exclusive_min=None,
            maximum=None):
    if key not in section:
        if default is None:
            raise ScenarioError(f"{path}.{key}: required")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{path}.{key}: must be a finite number")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{path}.{key}: must be >= {minimum}")
    if exclusive_min is not None and value <= exclusive_min:
        raise ScenarioError(f"{path}.{key}: must be > {exclusive_min}")
    if maximum is not None and value > maximum:
        raise ScenarioError(f"{path}.{key}: must be <= {maximum}")
    return float(value)


def _vector(section, key, path, length, default=None):
    if key not in section:
        return default
    value = section[key]
    if not isinstance(value, list) or len(value) != length or \
            not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ScenarioError(f"{path}.{key}: must be a list of {length} numbers")
    return [float(v) for v in value]


def _chain_from_section(section, path, default_factory, default_name):
    if section is None:
        return default_factory(name=default_name)
    _require_mapping(section, path)
    _check_keys(section, {"rows", "lengths_m", "name"}, path)
    name = section.get("name", default_name)
    if "rows" in section and "lengths_m" in section:
        raise ScenarioError(f"{path}: give rows or lengths_m, not both")
    if "lengths_m" in section:
        lengths = _vector(section, "lengths_m", path, 4)
        if any(l < 0 for l in lengths):
            raise ScenarioError(f"{path}.lengths_m: must be >= 0")
        return default_factory(lengths=tuple(lengths), name=name)
    if "rows" not in section:
        return default_factory(name=name)
    rows_spec = section["rows"]
    if not isinstance(rows_spec, list) or not rows_spec:
        raise ScenarioError(f"{path}.rows: must be a non-empty list")
    rows, limits = [], []
    for i, row in enumerate(rows_spec):
        row_path = f"{path}.rows[{i}]"
        _require_mapping(row, row_path)
        _check_keys(row, {"alpha_rad", "a_m", "d_m", "theta_offset_rad", "limits_rad"}, row_path)
        try:
            rows.append(DHRow(
                alpha=_number(row, "alpha_rad", row_path, default=0.0),
                a=_number(row, "a_m", row_path, default=0.0, minimum=0.0),
                d=_number(row, "d_m", row_path, default=0.0),
                theta_offset=_number(row, "theta_offset_rad", row_path, default=0.0),
            ))
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{row_path}: {exc}") from exc
        lim = _vector(row, "limits_rad", row_path, 2, default=[-np.pi, np.pi])
        if lim[0] > lim[1]:
            raise ScenarioError(f"{row_path}.limits_rad: min must not exceed max")
        limits.append(lim)
    try:
        return KinematicChain(rows=tuple(rows), joint_limits=np.array(limits), name=name)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _objects_from_section(section, path):
    if section is None:
        return []
    if not isinstance(section, list):
        raise ScenarioError(f"{path}: must be a list")
    objects = []
    for i, entry in enumerate(section):
        obj_path = f"{path}[{i}]"
        _require_mapping(entry, obj_path)
        _check_keys(entry, {"center_m", "half_extents_m", "stiffness_n_per_m", "preset",
                            "damping_n_s_per_m", "label", "force_cap_n"}, obj_path)
        center = _vector(entry, "center_m", obj_path, 3)
        half = _vector(entry, "half_extents_m", obj_path, 3)
        if center is None or half is None:
            raise ScenarioError(f"{obj_path}: center_m and half_extents_m are required")
        preset = entry.get("preset")
        if preset is not None and preset not in STIFFNESS_PRESETS:
            raise ScenarioError(
                f"{obj_path}.preset: unknown preset {preset!r} (choose from {sorted(STIFFNESS_PRESETS)})")
        if "stiffness_n_per_m" in entry:
            stiffness = _number(entry, "stiffness_n_per_m", obj_path, exclusive_min=0.0)
        elif preset is not None:
            stiffness = STIFFNESS_PRESETS[preset]
        else:
            raise ScenarioError(f"{obj_path}: needs stiffness_n_per_m or preset")
        label = entry.get("label", preset or "custom")
        force_cap = None
        if entry.get("force_cap_n") is not None:
            force_cap = _number(entry, "force_cap_n", obj_path, exclusive_min=0.0)
        try:
            objects.append(RigidObject(
                center=center, half_extents=half, stiffness=stiffness,
                damping=_number(entry, "damping_n_s_per_m", obj_path, default=10.0, minimum=0.0),
                label=label, force_cap=force_cap))
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{obj_path}: {exc}") from exc
    return objects


def _script_from_section(section, path):
    """Returns (script or None, interactive flag)."""
    if section is None:
        return None, False
    _require_mapping(section, path)
    _check_keys(section, {"keyframes", "reflex", "interactive"}, path)
    interactive = section.get("interactive", False)
    if not isinstance(interactive, bool):
        raise ScenarioError(f"{path}.interactive: must be true or false")
    if "keyframes" not in section:
        if not interactive:
            raise ScenarioError(f"{path}: needs keyframes or interactive=true")
        return None, True
    frames_spec = section["keyframes"]
    if not isinstance(frames_spec, list) or not frames_spec:
        raise ScenarioError(f"{path}.keyframes: must be a non-empty list")
    keyframes = []
    for i, frame in enumerate(frames_spec):
        frame_path = f"{path}.keyframes[{i}]"
        if not isinstance(frame, list) or len(frame) != 2 or not isinstance(frame[1], list):
            raise ScenarioError(f"{frame_path}: must be [time_s, [angles_rad...]]")
        keyframes.append((frame[0], frame[1]))
    reflex = None
    if "reflex" in section and section["reflex"] is not None:
        reflex_spec = _require_mapping(section["reflex"], f"{path}.reflex")
        _check_keys(reflex_spec, {"retreat_torque_nm", "retreat_offset_rad"}, f"{path}.reflex")
        torque = _number(reflex_spec, "retreat_torque_nm", f"{path}.reflex",
                         default=4.0, exclusive_min=0.0)
        offset = reflex_spec.get("retreat_offset_rad", [])
        if not isinstance(offset, list):
            raise ScenarioError(f"{path}.reflex.retreat_offset_rad: must be a list")
        reflex = ReflexConfig(retreat_torque=torque, retreat_offset=tuple(offset))
    try:
        return TrajectoryScript(keyframes=tuple(keyframes), reflex=reflex), interactive
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def scenario_from_dict(data: dict, source: str = "scenario") -> Scenario:
    """Build a validated Scenario from a parsed JSON document."""
    _require_mapping(data, source)
    _check_keys(data, {"master", "slave", "map", "objects", "script", "feedback",
                       "clutch", "channel", "operator", "ik", "run"}, source.rstrip("."))

    master = _chain_from_section(data.get("master"), "master", exoskeleton_chain, "master")
    slave = _chain_from_section(data.get("slave"), "slave", seven_dof_arm_chain, "slave")

    map_spec = data.get("map")
    wmap = WorkspaceMap()
    if map_spec is not None:
        _require_mapping(map_spec, "map")
        _check_keys(map_spec, {"scale", "master_origin_m", "slave_origin_m"}, "map")
        scale = _vector(map_spec, "scale", "map", 3, default=[1.0, 1.0, 1.0])
        if any(s <= 0 for s in scale):
            raise ScenarioError("map.scale: components must be > 0")
        wmap = WorkspaceMap(
            scale=scale,
            master_origin=_vector(map_spec, "master_origin_m", "map", 3, default=[0.0] * 3),
            slave_origin=_vector(map_spec, "slave_origin_m", "map", 3, default=[0.0] * 3))

    objects = _objects_from_section(data.get("objects"), "objects")
    script, interactive = _script_from_section(data.get("script"), "script")

    fb_spec = data.get("feedback") or {}
    _require_mapping(fb_spec, "feedback")
    _check_keys(fb_spec, {"gain", "current_limit_a", "torque_cap_nm", "actuated_joints"},
                "feedback")
    actuated = fb_spec.get("actuated_joints", [0, 1, 2, 3])
    if not isinstance(actuated, list) or not all(isinstance(i, int) and not isinstance(i, bool)
                                                 for i in actuated):
        raise ScenarioError("feedback.actuated_joints: must be a list of joint indices")
    feedback = FeedbackConfig(
        gain=_number(fb_spec, "gain", "feedback", default=5.0, exclusive_min=0.0),
        current_limit=_number(fb_spec, "current_limit_a", "feedback", default=1.3,
                              exclusive_min=0.0),
        torque_cap=_number(fb_spec, "torque_cap_nm", "feedback", default=42.12,
                           exclusive_min=0.0),
        actuated_joints=tuple(actuated))

    cl_spec = data.get("clutch") or {}
    _require_mapping(cl_spec, "clutch")
    _check_keys(cl_spec, {"hill", "spec", "time_constants", "demag"}, "clutch")
    hill_spec = _require_mapping(cl_spec.get("hill") or {}, "clutch.hill")
    _check_keys(hill_spec, {"v_max_nm", "k_a", "n"}, "clutch.hill")
    hill = HillParams(
        v_max=_number(hill_spec, "v_max_nm", "clutch.hill", default=54.28, exclusive_min=0.0),
        k=_number(hill_spec, "k_a", "clutch.hill", default=0.66, exclusive_min=0.0),
        n=_number(hill_spec, "n", "clutch.hill", default=1.96, exclusive_min=0.0))
    spec_spec = _require_mapping(cl_spec.get("spec") or {}, "clutch.spec")
    _check_keys(spec_spec, {"idle_torque_nm", "saturation_current_a", "max_torque_nm",
                            "mass_kg", "volume_m3", "dissipated_power_w"}, "clutch.spec")
    try:
        clutch_spec = ClutchSpec(
            idle_torque=_number(spec_spec, "idle_torque_nm", "clutch.spec", default=0.2,
                                minimum=0.0),
            saturation_current=_number(spec_spec, "saturation_current_a", "clutch.spec",
                                       default=1.3, exclusive_min=0.0),
            max_torque=_number(spec_spec, "max_torque_nm", "clutch.spec", default=42.12,
                               exclusive_min=0.0),
            mass=_number(spec_spec, "mass_kg", "clutch.spec", default=0.45, exclusive_min=0.0),
            volume=_number(spec_spec, "volume_m3", "clutch.spec", default=10.4e-5,
                           exclusive_min=0.0),
            dissipated_power=_number(spec_spec, "dissipated_power_w", "clutch.spec",
                                     default=10.14, exclusive_min=0.0))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"clutch.spec: {exc}") from exc
    tc_spec = _require_mapping(cl_spec.get("time_constants") or {}, "clutch.time_constants")
    _check_keys(tc_spec, {"tau_rise_s", "tau_fall_s", "tau_demag_s"}, "clutch.time_constants")
    time_constants = TimeConstants(
        tau_rise=_number(tc_spec, "tau_rise_s", "clutch.time_constants", default=0.010,
                         exclusive_min=0.0),
        tau_fall=_number(tc_spec, "tau_fall_s", "clutch.time_constants", default=0.300,
                         exclusive_min=0.0),
        tau_demag=_number(tc_spec, "tau_demag_s", "clutch.time_constants", default=0.020,
                          exclusive_min=0.0))
    demag_spec = _require_mapping(cl_spec.get("demag") or {}, "clutch.demag")
    _check_keys(demag_spec, {"frequency_hz", "envelope_tau_s", "duration_s"}, "clutch.demag")
    try:
        demag = DemagParams(
            frequency=_number(demag_spec, "frequency_hz", "clutch.demag", default=100.0,
                              exclusive_min=0.0),
            envelope_tau=_number(demag_spec, "envelope_tau_s", "clutch.demag", default=0.05,
                                 exclusive_min=0.0),
            duration=_number(demag_spec, "duration_s", "clutch.demag", default=0.25,
                             exclusive_min=0.0))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"clutch.demag: {exc}") from exc

    ch_spec = data.get("channel") or {}
    _require_mapping(ch_spec, "channel")
    _check_keys(ch_spec, {"base_delay_s", "jitter_s", "drop_probability", "tick_rate_hz"},
                "channel")
    channel = ChannelConfig(
        base_delay=_number(ch_spec, "base_delay_s", "channel", default=0.0, minimum=0.0),
        jitter=_number(ch_spec, "jitter_s", "channel", default=0.0, minimum=0.0),
        drop_probability=_number(ch_spec, "drop_probability", "channel", default=0.0,
                                 minimum=0.0),
        tick_rate=_number(ch_spec, "tick_rate_hz", "channel", default=500.0,
                          exclusive_min=0.0))
    if channel.drop_probability >= 1:
        raise ScenarioError("channel.drop_probability: must be < 1")

    op_spec = data.get("operator") or {}
    _require_mapping(op_spec, "operator")
    _check_keys(op_spec, {"lock_torque_nm", "max_velocity_rad_s", "semg"}, "operator")
    operator_model = OperatorModel(
        lock_torque=_number(op_spec, "lock_torque_nm", "operator", default=42.12,
                            exclusive_min=0.0),
        max_velocity=_number(op_spec, "max_velocity_rad_s", "operator", default=6.0,
                             exclusive_min=0.0))
    semg_spec = op_spec.get("semg")
    semg_cal = SEMGCalibration()
    if semg_spec is not None:
        _require_mapping(semg_spec, "operator.semg")
        _check_keys(semg_spec, {"intercept_uv", "slope_uv_per_nm", "table"}, "operator.semg")
        if "table" in semg_spec:
            table = semg_spec["table"]
            if not isinstance(table, list) or len(table) < 2:
                raise ScenarioError("operator.semg.table: must list at least 2 [nm, uv] pairs")
            try:
                semg_cal = SEMGCalibration(table=tuple((p[0], p[1]) for p in table))
            except (ValueError, TypeError, IndexError) as exc:
                raise ScenarioError(f"operator.semg.table: {exc}") from exc
        else:
            semg_cal = SEMGCalibration(
                intercept=_number(semg_spec, "intercept_uv", "operator.semg",
                                  default=SEMGCalibration().intercept, minimum=0.0),
                slope=_number(semg_spec, "slope_uv_per_nm", "operator.semg",
                              default=SEMGCalibration().slope, exclusive_min=0.0))

    ik_spec = data.get("ik") or {}
    _require_mapping(ik_spec, "ik")
    _check_keys(ik_spec, {"damping", "tol_m", "tol_rot_rad", "max_iters",
                          "orientation_weight"}, "ik")
    max_iters = ik_spec.get("max_iters", 200)
    if isinstance(max_iters, bool) or not isinstance(max_iters, int) or max_iters < 1:
        raise ScenarioError("ik.max_iters: must be a positive integer")
    ik = IKParams(
        damping=_number(ik_spec, "damping", "ik", default=0.05, exclusive_min=0.0),
        tol=_number(ik_spec, "tol_m", "ik", default=1e-6, exclusive_min=0.0),
        tol_rot=_number(ik_spec, "tol_rot_rad", "ik", default=1e-4, exclusive_min=0.0),
        max_iters=max_iters,
        orientation_weight=_number(ik_spec, "orientation_weight", "ik", default=0.0,
                                   minimum=0.0))

    run_spec = data.get("run") or {}
    _require_mapping(run_spec, "run")
    _check_keys(run_spec, {"name", "duration_s", "seed", "tracker_rate_limit_rad_s",
                           "sensor_sigma_n", "semg_sigma_uv"}, "run")
    seed = run_spec.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("run.seed: must be a nonnegative integer")
    name = run_spec.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioError("run.name: must be a string")

    try:
        return Scenario(
            name=name,
            master_chain=master,
            slave_chain=slave,
            workspace_map=wmap,
            objects=objects,
            script=script,
            interactive=interactive,
            feedback=feedback,
            hill=hill,
            clutch_spec=clutch_spec,
            time_constants=time_constants,
            demag=demag,
            channel=channel,
            duration=_number(run_spec, "duration_s", "run", exclusive_min=0.0),
            seed=seed,
            tracker_rate_limit=_number(run_spec, "tracker_rate_limit_rad_s", "run",
                                       default=10.0, exclusive_min=0.0),
            ik=ik,
            sensor_sigma=_number(run_spec, "sensor_sigma_n", "run", default=0.0, minimum=0.0),
            semg_sigma=_number(run_spec, "semg_sigma_uv", "run", default=5.0, minimum=0.0),
            semg_cal=semg_cal,
            operator_model=operator_model,
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{source}: {exc}") from exc


def load_scenario_file(path) -> Scenario:
    """Parse and validate a scenario JSON file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"{path}: no such file")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(data, source=str(path))


def fixture_names() -> list:
    """Names of the scenario fixtures bundled with the package."""
    root = resources.files("mrteleop") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture; accepts bare names or *.json."""
    if not name.endswith(".json"):
        name = name + ".json"
    candidate = resources.files("mrteleop") / "fixtures" / name
    if not candidate.is_file():
        raise ScenarioError(f"no bundled fixture named {name!r}; "
                            f"available: {', '.join(fixture_names())}")
    return Path(str(candidate))


def resolve_scenario_source(spec: str) -> Path:
    """Interpret a CLI scenario argument: an existing file path, else a
    bundled fixture name."""
    path = Path(spec)
    if path.exists():
        return path
    return fixture_path(spec)


def write_scenario_dict(data: dict, path):
    """Write a scenario document with stable formatting (calibration output)."""
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.write("\n")
