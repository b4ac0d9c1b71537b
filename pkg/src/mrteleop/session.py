"""Deterministic fixed-timestep teleoperation loop.

Each tick wires operator -> master FK -> workspace map -> pose channel ->
slave tracking -> contact -> force sensing -> force channel -> feedback ->
clutches -> sEMG, then appends one telemetry record. All randomness (channel
jitter and drops, sensor noise, sEMG noise) flows from one seed split into
per-subsystem streams, so a scenario replays bit-identically.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from mrteleop.clutch import (
    ClutchSpec,
    DemagParams,
    HillParams,
    TimeConstants,
    idle_clutch_state,
    step_magnetization,
)
from mrteleop.feedback import FeedbackConfig, feedback_pipeline, trigger_manual_demag
from mrteleop.kinematics import (
    IKParams,
    KinematicChain,
    WorkspaceMap,
    exoskeleton_chain,
    forward_kinematics,
    inverse_kinematics_dls,
    map_workspace,
    seven_dof_arm_chain,
)
from mrteleop.operator import (
    OperatorModel,
    OperatorState,
    SEMGCalibration,
    TrajectoryScript,
    interpolate_script,
    rms_window,
    scripted_operator_step,
    semg_proxy,
)
from mrteleop.slave_env import ForceSample, contact_force, sense_force, step_slave

__all__ = [
    "Channel",
    "ChannelConfig",
    "ChannelMessage",
    "Scenario",
    "Session",
    "TelemetryRecord",
    "collision_summary",
    "collision_windows",
    "count_collision_events",
    "export_telemetry",
    "import_telemetry",
    "run_scenario",
    "telemetry_header",
]


@dataclass(frozen=True)
class ChannelConfig:
    """Latency model for one direction of the master-slave link, plus the
    loop tick rate both ends share."""

    base_delay: float = 0.0
    jitter: float = 0.0
    drop_probability: float = 0.0
    tick_rate: float = 500.0

    def __post_init__(self):
        if self.base_delay < 0 or self.jitter < 0:
            raise ValueError("ChannelConfig delay and jitter must be >= 0")
        if not 0 <= self.drop_probability < 1:
            raise ValueError("ChannelConfig.drop_probability must be in [0, 1)")
        if self.tick_rate <= 0:
            raise ValueError("ChannelConfig.tick_rate must be > 0")


@dataclass
class ChannelMessage:
    payload: object
    send_time: float
    deliver_time: float

    def __post_init__(self):
        if self.deliver_time < self.send_time:
            raise ValueError("ChannelMessage.deliver_time must be >= send_time")


class Channel:
    """FIFO delay line: messages deliver after base_delay plus seeded jitter,
    never out of order (a message's delivery clamps to its predecessor's)."""

    def __init__(self, config: ChannelConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.queue = deque()

    def send(self, payload, now: float) -> bool:
        """Enqueue a message; returns False if the channel dropped it."""
        if self.config.drop_probability > 0 and self.rng.random() < self.config.drop_probability:
            return False
        deliver = now + self.config.base_delay
        if self.config.jitter > 0:
            deliver += self.rng.uniform(0.0, self.config.jitter)
        if self.queue:
            deliver = max(deliver, self.queue[-1].deliver_time)
        self.queue.append(ChannelMessage(payload=payload, send_time=now, deliver_time=deliver))
        return True

    def poll(self, now: float) -> list:
        """Pop every message whose delivery time has arrived, in send order."""
        out = []
        while self.queue and self.queue[0].deliver_time <= now:
            out.append(self.queue.popleft().payload)
        return out


@dataclass
class Scenario:
    """Complete declarative description of one run."""

    name: str = "scenario"
    master_chain: KinematicChain = field(default_factory=exoskeleton_chain)
    slave_chain: KinematicChain = field(default_factory=seven_dof_arm_chain)
    workspace_map: WorkspaceMap = field(default_factory=WorkspaceMap)
    objects: list = field(default_factory=list)
    script: TrajectoryScript | None = None
    interactive: bool = False
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    hill: HillParams = field(default_factory=HillParams)
    clutch_spec: ClutchSpec = field(default_factory=ClutchSpec)
    time_constants: TimeConstants = field(default_factory=TimeConstants)
    demag: DemagParams = field(default_factory=DemagParams)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    duration: float = 5.0
    seed: int = 0
    tracker_rate_limit: float = 10.0
    ik: IKParams = field(default_factory=lambda: IKParams(orientation_weight=0.0))
    sensor_sigma: float = 0.0
    semg_sigma: float = 5.0
    semg_cal: SEMGCalibration = field(default_factory=SEMGCalibration)
    operator_model: OperatorModel = field(default_factory=OperatorModel)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("Scenario.duration must be > 0")
        # telemetry format pins the master at 5 joints / 4 clutches
        if self.master_chain.dof != 5:
            raise ValueError("Scenario.master_chain must have 5 joints")
        if len(self.feedback.actuated_joints) != 4:
            raise ValueError("Scenario.feedback must actuate exactly 4 joints")
        if any(i >= self.master_chain.dof for i in self.feedback.actuated_joints):
            raise ValueError("Scenario.feedback.actuated_joints outside master chain")
        if self.script is None and not self.interactive:
            raise ValueError("Scenario needs a script or interactive=True")
        if self.script is not None and self.script.dof != self.master_chain.dof:
            raise ValueError("Scenario.script keyframe width must match the master chain")
        if self.feedback.current_limit > self.clutch_spec.saturation_current:
            raise ValueError("Scenario.feedback.current_limit exceeds clutch saturation")
        if self.feedback.torque_cap > self.clutch_spec.max_torque:
            raise ValueError("Scenario.feedback.torque_cap exceeds clutch max torque")
        if self.tracker_rate_limit <= 0:
            raise ValueError("Scenario.tracker_rate_limit must be > 0")
        if self.sensor_sigma < 0 or self.semg_sigma < 0:
            raise ValueError("Scenario noise sigmas must be >= 0")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError("Scenario.seed must be a nonnegative integer")


@dataclass
class TelemetryRecord:
    """One tick of the loop; tuple fields keep it hashable and cheap to copy."""

    t: float
    master_q: tuple
    slave_q: tuple
    master_ee: tuple
    slave_ee: tuple
    force: tuple
    currents: tuple
    feedback_torques: tuple
    semg: float
    events: tuple


class Session:
    """Owns all mutable run state; step() advances exactly one tick.

    External agents (the bridge) interact only through queue_command(),
    drained at the next tick boundary, so observers can never perturb physics.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.dt = 1.0 / scenario.channel.tick_rate
        self.total_ticks = int(math.floor(scenario.duration * scenario.channel.tick_rate + 1e-9))
        streams = np.random.SeedSequence(scenario.seed).spawn(4)
        self.rng_pose = np.random.default_rng(streams[0])
        self.rng_force = np.random.default_rng(streams[1])
        self.rng_sensor = np.random.default_rng(streams[2])
        self.rng_semg = np.random.default_rng(streams[3])
        self.pose_channel = Channel(scenario.channel, self.rng_pose)
        self.force_channel = Channel(scenario.channel, self.rng_force)

        if scenario.script is not None:
            q0 = interpolate_script(scenario.script, 0.0)
        else:
            q0 = np.zeros(scenario.master_chain.dof)
        self.operator = OperatorState(current_q=scenario.master_chain.clamp(q0))
        master_pose = forward_kinematics(scenario.master_chain, self.operator.current_q)
        self.slave_target = map_workspace(master_pose, scenario.workspace_map)
        settle = replace(scenario.ik, max_iters=max(500, scenario.ik.max_iters))
        seed_q = np.zeros(scenario.slave_chain.dof)
        self.slave_q = inverse_kinematics_dls(
            scenario.slave_chain, self.slave_target, seed_q, settle
        ).q
        self.prev_slave_ee = forward_kinematics(scenario.slave_chain, self.slave_q).position
        self.latest_force = ForceSample(force=np.zeros(3), timestamp=0.0)
        self.clutches = [idle_clutch_state(scenario.clutch_spec)
                         for _ in scenario.feedback.actuated_joints]
        self.tick = 0
        self.last_commands: list = []
        self.records: list[TelemetryRecord] = []
        self._commands = deque()
        self._jog_accum = np.zeros(scenario.master_chain.dof)
        self._pose_goal = None

    # -- external command surface (bridge) --------------------------------

    def queue_command(self, kind: str, payload=None):
        """Enqueue a command; it takes effect at the next tick boundary."""
        self._commands.append((kind, payload or {}))

    def _apply_commands(self, events: set):
        while self._commands:
            kind, payload = self._commands.popleft()
            events.add("command")
            if kind == "demag":
                self.clutches = trigger_manual_demag(self.clutches)
            elif kind == "jog":
                deltas = np.asarray(payload.get("deltas", []), dtype=float)
                if deltas.shape == self._jog_accum.shape:
                    self._jog_accum += deltas
            elif kind == "set_pose":
                position = np.asarray(payload.get("position", []), dtype=float)
                if position.shape == (3,):
                    pose = forward_kinematics(self.scenario.master_chain,
                                              self.operator.current_q)
                    target = replace(pose, position=position)
                    result = inverse_kinematics_dls(
                        self.scenario.master_chain, target, self.operator.current_q,
                        replace(self.scenario.ik, orientation_weight=0.0))
                    self._pose_goal = result.q

    # -- the loop ----------------------------------------------------------

    def step(self) -> TelemetryRecord:
        sc = self.scenario
        t = self.tick * self.dt
        events: set[str] = set()
        self._apply_commands(events)

        # operator feels the clutch outputs from the previous tick
        resistance = np.zeros(sc.master_chain.dof)
        for state, joint in zip(self.clutches, sc.feedback.actuated_joints):
            resistance[joint] = state.output_torque

        if sc.script is not None:
            self.operator = scripted_operator_step(
                sc.script, self.operator, t, resistance, self.dt, sc.operator_model)
        else:
            scale = np.clip(1.0 - resistance / sc.operator_model.lock_torque, 0.0, 1.0)
            dq = np.zeros(sc.master_chain.dof)
            if np.any(self._jog_accum):
                dq = self._jog_accum.copy()
                self._jog_accum[:] = 0.0
            elif self._pose_goal is not None:
                limit = sc.operator_model.max_velocity * self.dt
                dq = np.clip(self._pose_goal - self.operator.current_q, -limit, limit)
            self.operator.current_q = self.operator.current_q + dq * scale
        self.operator.current_q = sc.master_chain.clamp(self.operator.current_q)

        master_pose = forward_kinematics(sc.master_chain, self.operator.current_q)
        mapped = map_workspace(master_pose, sc.workspace_map)

        delivered = self.pose_channel.poll(t)
        if delivered:
            self.slave_target = delivered[-1]
        self.pose_channel.send(mapped, t)

        self.slave_q, ik_ok = step_slave(
            sc.slave_chain, self.slave_q, self.slave_target, self.dt,
            sc.tracker_rate_limit, sc.ik)
        if not ik_ok:
            events.add("ik_fail")
        slave_pose = forward_kinematics(sc.slave_chain, self.slave_q)
        ee_velocity = (slave_pose.position - self.prev_slave_ee) / self.dt
        self.prev_slave_ee = slave_pose.position

        raw, contact = contact_force(slave_pose.position, ee_velocity, sc.objects, now=t)
        if contact.penetrating:
            events.add("collision")
        sensed = sense_force(raw, sc.sensor_sigma, self.rng_sensor)

        arrived = self.force_channel.poll(t)
        if arrived:
            self.latest_force = arrived[-1]
        self.force_channel.send(sensed, t)

        commands = feedback_pipeline(
            sc.master_chain, self.operator.current_q, self.latest_force.force,
            sc.feedback, sc.hill)
        if any(c.clamped for c in commands):
            events.add("clamp")
        self.last_commands = commands
        self.clutches = [
            step_magnetization(state, cmd.current, self.dt, sc.hill, sc.clutch_spec,
                               sc.time_constants, sc.demag)
            for state, cmd in zip(self.clutches, commands)
        ]
        if any(s.mode == "demag" for s in self.clutches):
            events.add("demag")

        semg = semg_proxy(self.clutches[-1].output_torque, sc.semg_cal)
        if sc.semg_sigma > 0:
            semg += self.rng_semg.normal(0.0, sc.semg_sigma)
        self.operator.semg = float(semg)

        record = TelemetryRecord(
            t=float(t),
            master_q=tuple(float(v) for v in self.operator.current_q),
            slave_q=tuple(float(v) for v in self.slave_q),
            master_ee=tuple(float(v) for v in master_pose.position),
            slave_ee=tuple(float(v) for v in slave_pose.position),
            force=tuple(float(v) for v in sensed.force),
            currents=tuple(float(s.commanded_current) for s in self.clutches),
            feedback_torques=tuple(float(s.output_torque) for s in self.clutches),
            semg=float(semg),
            events=tuple(sorted(events)),
        )
        self.records.append(record)
        self.tick += 1
        return record

    def run(self) -> list:
        while self.tick < self.total_ticks:
            self.step()
        return self.records


def run_scenario(scenario: Scenario) -> list:
    """Run to completion and return the telemetry records."""
    return Session(scenario).run()


# -- telemetry analysis ------------------------------------------------------


def count_collision_events(records) -> int:
    """Number of contact onsets (non-penetrating to penetrating transitions)."""
    count = 0
    prev = False
    for rec in records:
        now = "collision" in rec.events
        if now and not prev:
            count += 1
        prev = now
    return count


def collision_windows(records, pad: float = 0.05) -> list:
    """Contiguous penetrating spans padded by +-pad seconds, merged if they
    overlap after padding."""
    spans = []
    start = None
    prev_t = None
    for rec in records:
        if "collision" in rec.events:
            if start is None:
                start = rec.t
            prev_t = rec.t
        elif start is not None:
            spans.append((start, prev_t))
            start = None
    if start is not None:
        spans.append((start, prev_t))
    if not spans:
        return []
    t_lo, t_hi = records[0].t, records[-1].t
    padded = [(max(t_lo, a - pad), min(t_hi, b + pad)) for a, b in spans]
    merged = [padded[0]]
    for a, b in padded[1:]:
        la, lb = merged[-1]
        if a <= lb:
            merged[-1] = (la, max(lb, b))
        else:
            merged.append((a, b))
    return merged


def collision_summary(records, pad: float = 0.05, cal: SEMGCalibration | None = None) -> list:
    """Per-collision-window RMS of the elbow feedback torque and the sEMG
    trace, plus the calibration-curve prediction at that RMS torque."""
    windows = collision_windows(records, pad)
    torque_samples = [(rec.t, rec.feedback_torques[-1]) for rec in records]
    semg_samples = [(rec.t, rec.semg) for rec in records]
    out = []
    for window in windows:
        rms_torque = rms_window(torque_samples, window)
        rms_semg = rms_window(semg_samples, window)
        entry = {"window": window, "rms_torque": rms_torque, "rms_semg": rms_semg}
        if cal is not None:
            entry["semg_at_rms_torque"] = semg_proxy(rms_torque, cal)
        out.append(entry)
    return out


# -- telemetry persistence ---------------------------------------------------


def telemetry_header(slave_dof: int) -> list:
    cols = ["t"]
    cols += [f"mq{i}" for i in range(1, 6)]
    cols += [f"sq{i}" for i in range(1, slave_dof + 1)]
    cols += ["mex", "mey", "mez", "sex", "sey", "sez", "fx", "fy", "fz"]
    cols += [f"i{i}" for i in range(1, 5)]
    cols += [f"tau{i}" for i in range(1, 5)]
    cols += ["semg", "events"]
    return cols


def _record_row(rec: TelemetryRecord) -> list:
    values = [rec.t, *rec.master_q, *rec.slave_q, *rec.master_ee, *rec.slave_ee,
              *rec.force, *rec.currents, *rec.feedback_torques, rec.semg]
    return [repr(float(v)) for v in values] + ["|".join(rec.events)]


def export_telemetry(records, path, format: str = "csv"):
    """Write records to CSV or a structured JSON document.

    Floats are serialized with shortest round-trip repr, so identical runs
    produce identical bytes and import is lossless.
    """
    if not records:
        raise ValueError("no records to export")
    if format not in ("csv", "structured"):
        raise ValueError(f"format must be csv or structured, got {format!r}")
    slave_dof = len(records[0].slave_q)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(telemetry_header(slave_dof))
            for rec in records:
                writer.writerow(_record_row(rec))
    else:
        doc = {
            "schema_version": 1,
            "slave_dof": slave_dof,
            "records": [
                {
                    "t": rec.t, "master_q": list(rec.master_q), "slave_q": list(rec.slave_q),
                    "master_ee": list(rec.master_ee), "slave_ee": list(rec.slave_ee),
                    "force": list(rec.force), "currents": list(rec.currents),
                    "feedback_torques": list(rec.feedback_torques), "semg": rec.semg,
                    "events": list(rec.events),
                }
                for rec in records
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def import_telemetry(path) -> list:
    """Read records back from either export format."""
    with open(path) as fh:
        first = fh.read(1)
    if first == "{":
        with open(path) as fh:
            doc = json.load(fh)
        return [
            TelemetryRecord(
                t=r["t"], master_q=tuple(r["master_q"]), slave_q=tuple(r["slave_q"]),
                master_ee=tuple(r["master_ee"]), slave_ee=tuple(r["slave_ee"]),
                force=tuple(r["force"]), currents=tuple(r["currents"]),
                feedback_torques=tuple(r["feedback_torques"]), semg=r["semg"],
                events=tuple(r["events"]),
            )
            for r in doc["records"]
        ]
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t", "mq1"]:
            raise ValueError(f"{path}: unrecognized telemetry header")
        slave_dof = sum(1 for col in header if col.startswith("sq"))
        for row in reader:
            values = [float(v) for v in row[:-1]]
            events = tuple(row[-1].split("|")) if row[-1] else ()
            i = 0

            def take(n):
                nonlocal i
                chunk = tuple(values[i:i + n])
                i += n
                return chunk

            t = take(1)[0]
            records.append(TelemetryRecord(
                t=t, master_q=take(5), slave_q=take(slave_dof), master_ee=take(3),
                slave_ee=take(3), force=take(3), currents=take(4),
                feedback_torques=take(4), semg=take(1)[0], events=events,
            ))
    return records
