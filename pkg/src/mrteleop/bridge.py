"""Live bridge between a running session and operator consoles.

Streams one JSON state message per tick over a local WebSocket endpoint
(path /ws) and accepts operator commands (jog, set_pose, demag, pause,
resume, reset, select_scenario) that take effect at tick boundaries. A plain
HTTP /healthz endpoint reports the scenario name and tick.

The simulation loop owns all state; bridge I/O talks to it only through a
command queue and per-subscriber snapshot queues, so observers cannot
perturb physics.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from http import HTTPStatus

import numpy as np

from mrteleop.session import Scenario, Session, TelemetryRecord

__all__ = [
    "ReplaySource",
    "SCHEMA_VERSION",
    "SimulationHost",
    "decode_state",
    "encode_state",
    "serve_bridge",
]

SCHEMA_VERSION = 1

COMMAND_KINDS = ("jog", "set_pose", "demag", "select_scenario", "pause", "resume", "reset")


def encode_state(record: TelemetryRecord, clutch_states=None, tick: int = 0,
                 clamped=None, scenario: str = "") -> str:
    """Wire form of one tick: versioned JSON text frame."""
    if clutch_states is not None:
        modes = [s.mode for s in clutch_states]
    elif "demag" in record.events:
        modes = ["demag"] * len(record.currents)
    else:
        modes = ["excite" if c > 0 else "idle" for c in record.currents]
    if clamped is None:
        clamped = ["clamp" in record.events] * len(record.currents)
    message = {
        "schema_version": SCHEMA_VERSION,
        "type": "state",
        "tick": tick,
        "scenario": scenario,
        "t": record.t,
        "master_q": list(record.master_q),
        "slave_q": list(record.slave_q),
        "master_ee": list(record.master_ee),
        "slave_ee": list(record.slave_ee),
        "force": list(record.force),
        "currents": list(record.currents),
        "feedback_torques": list(record.feedback_torques),
        "semg": record.semg,
        "events": list(record.events),
        "clutch_modes": modes,
        "clamped": list(clamped),
    }
    return json.dumps(message)


def decode_state(text: str) -> dict:
    """Parse a state frame, checking the schema version."""
    message = json.loads(text)
    if message.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {message.get('schema_version')!r}")
    return message


def _drain_put(q: queue.Queue, item):
    """Bounded put with latest-wins backpressure: drop the oldest on overflow."""
    while True:
        try:
            q.put_nowait(item)
            return
        except queue.Full:
            try:
                q.get_nowait()
            except queue.Empty:
                pass


class SimulationHost:
    """Runs a Session on its own thread and fans out state snapshots.

    Commands are validated here, then queued; motion commands are rejected
    unless the scenario is interactive. Acks promise the tick boundary at
    which the command will land.
    """

    def __init__(self, scenario: Scenario, realtime: bool = True, speed: float = 1.0,
                 queue_size: int = 1024, scenario_loader=None):
        self.scenario = scenario
        self.session = Session(scenario)
        self.realtime = realtime
        self.speed = speed
        self.queue_size = queue_size
        self.scenario_loader = scenario_loader
        self.paused = False
        self.finished = threading.Event()
        self._stop = threading.Event()
        self._host_commands = queue.SimpleQueue()
        self._subscribers: list[queue.Queue] = []
        self._subs_lock = threading.Lock()
        self._thread: threading.Thread | None = None

    # -- subscriptions ------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q = queue.Queue(maxsize=self.queue_size)
        with self._subs_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self._subs_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _broadcast(self, text: str):
        with self._subs_lock:
            subs = list(self._subscribers)
        for q in subs:
            _drain_put(q, text)

    # -- commands -----------------------------------------------------------

    def apply_command(self, message: dict) -> dict:
        """Validate and enqueue one command; returns an ack or rejection."""
        kind = message.get("kind")
        if kind not in COMMAND_KINDS:
            return {"ok": False, "kind": kind, "reason": f"unknown command kind {kind!r}"}
        effect_tick = self.session.tick + 1
        if kind in ("jog", "set_pose"):
            if not self.scenario.interactive:
                return {"ok": False, "kind": kind,
                        "reason": "motion commands need an interactive scenario"}
            if kind == "jog":
                deltas = message.get("deltas")
                dof = self.scenario.master_chain.dof
                if not isinstance(deltas, list) or len(deltas) != dof or \
                        not all(isinstance(v, (int, float)) for v in deltas):
                    return {"ok": False, "kind": kind,
                            "reason": f"deltas must be a list of {dof} numbers"}
                limit = self.scenario.operator_model.max_velocity * self.session.dt
                if any(abs(v) > limit * (1 + 1e-9) for v in deltas):
                    return {"ok": False, "kind": kind,
                            "reason": f"per-tick jog limit is {limit:.6g} rad"}
                self.session.queue_command("jog", {"deltas": deltas})
            else:
                position = message.get("position")
                if not isinstance(position, list) or len(position) != 3 or \
                        not all(isinstance(v, (int, float)) for v in position):
                    return {"ok": False, "kind": kind, "reason": "position must be 3 numbers"}
                self.session.queue_command("set_pose", {"position": position})
        elif kind == "demag":
            self.session.queue_command("demag")
        elif kind == "select_scenario":
            name = message.get("name")
            if self.scenario_loader is None:
                return {"ok": False, "kind": kind, "reason": "no scenario loader configured"}
            try:
                scenario = self.scenario_loader(name)
            except Exception as exc:
                return {"ok": False, "kind": kind, "reason": str(exc)}
            self._host_commands.put(("swap", scenario))
        else:
            self._host_commands.put((kind, None))
        return {"ok": True, "kind": kind, "effect_tick": effect_tick}

    def _apply_host_commands(self):
        while True:
            try:
                kind, payload = self._host_commands.get_nowait()
            except queue.Empty:
                return
            if kind == "pause":
                self.paused = True
            elif kind == "resume":
                self.paused = False
            elif kind == "reset":
                self.session = Session(self.scenario)
                self.finished.clear()
            elif kind == "swap":
                self.scenario = payload
                self.session = Session(payload)
                self.finished.clear()

    # -- loop ---------------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._loop, name="sim-loop", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _loop(self):
        period = self.session.dt / max(self.speed, 1e-9)
        next_deadline = time.monotonic()
        while not self._stop.is_set():
            self._apply_host_commands()
            if self.paused or self.session.tick >= self.session.total_ticks:
                if self.session.tick >= self.session.total_ticks:
                    self.finished.set()
                time.sleep(0.01)
                next_deadline = time.monotonic()
                continue
            record = self.session.step()
            clamped = [c.clamped for c in getattr(self.session, "last_commands", [])] or None
            self._broadcast(encode_state(record, self.session.clutches,
                                         tick=self.session.tick - 1, clamped=clamped,
                                         scenario=self.scenario.name))
            if self.realtime:
                next_deadline += period
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_deadline = time.monotonic()

    def health(self) -> dict:
        return {"scenario": self.scenario.name, "tick": self.session.tick}


class ReplaySource:
    """Streams a recorded telemetry file through the same wire protocol.

    Commands are rejected (there is no live simulation to steer).
    """

    def __init__(self, records, rate: float = 500.0, speed: float = 1.0,
                 name: str = "replay", realtime: bool = True, queue_size: int = 1024):
        self.records = records
        self.rate = rate
        self.speed = speed
        self.name = name
        self.realtime = realtime
        self.queue_size = queue_size
        self.tick = 0
        self.finished = threading.Event()
        self._stop = threading.Event()
        self._subscribers: list[queue.Queue] = []
        self._subs_lock = threading.Lock()
        self._thread = None

    subscribe = SimulationHost.subscribe
    unsubscribe = SimulationHost.unsubscribe
    _broadcast = SimulationHost._broadcast

    def apply_command(self, message: dict) -> dict:
        return {"ok": False, "kind": message.get("kind"),
                "reason": "replay stream does not accept commands"}

    def start(self):
        self._thread = threading.Thread(target=self._loop, name="replay-loop", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _loop(self):
        period = 1.0 / (self.rate * max(self.speed, 1e-9))
        next_deadline = time.monotonic()
        for i, record in enumerate(self.records):
            if self._stop.is_set():
                return
            self.tick = i + 1
            self._broadcast(encode_state(record, tick=i, scenario=self.name))
            if self.realtime:
                next_deadline += period
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_deadline = time.monotonic()
        self.finished.set()

    def health(self) -> dict:
        return {"scenario": self.name, "tick": self.tick}


def serve_bridge(source, host: str = "127.0.0.1", port: int = 8765,
                 ready_event: threading.Event | None = None,
                 stop_event: threading.Event | None = None):
    """Serve /ws state streams and /healthz for the given source.

    Blocks until stop_event is set (or forever). The source must already be
    started (or be started by the caller); it outlives client connections.
    """
    from websockets.sync.server import serve

    def process_request(connection, request):
        if request.path == "/healthz":
            return connection.respond(HTTPStatus.OK, json.dumps(source.health()) + "\n")
        if request.path != "/ws":
            return connection.respond(HTTPStatus.NOT_FOUND, "unknown path; use /ws\n")
        return None

    def handler(websocket):
        snapshots = source.subscribe()
        closed = threading.Event()

        def pump():
            while not closed.is_set():
                try:
                    text = snapshots.get(timeout=0.1)
                except queue.Empty:
                    continue
                try:
                    websocket.send(text)
                except Exception:
                    return

        sender = threading.Thread(target=pump, daemon=True)
        sender.start()
        try:
            for raw in websocket:
                try:
                    message = json.loads(raw)
                    if not isinstance(message, dict):
                        raise ValueError("command must be a JSON object")
                except (json.JSONDecodeError, ValueError) as exc:
                    ack = {"ok": False, "kind": None, "reason": f"bad command frame: {exc}"}
                else:
                    ack = source.apply_command(message)
                ack_frame = {"schema_version": SCHEMA_VERSION, "type": "ack", **ack}
                websocket.send(json.dumps(ack_frame))
        except Exception:
            pass
        finally:
            closed.set()
            source.unsubscribe(snapshots)

    with serve(handler, host, port, process_request=process_request) as server:
        if ready_event is not None:
            ready_event.set()
        if stop_event is None:
            server.serve_forever()
        else:
            waiter = threading.Thread(target=lambda: (stop_event.wait(), server.shutdown()),
                                      daemon=True)
            waiter.start()
            server.serve_forever()
