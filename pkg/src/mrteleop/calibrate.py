"""Contact stiffness calibration against per-collision window torque targets.

Given a scenario description and a list of (object, window, target RMS torque)
triples, repeatedly runs the scenario and adjusts object stiffness until the
elbow clutch torque RMS inside each collision window lands on target. Root
finding works in log-stiffness space (RMS responds sublinearly to stiffness
over several decades) with a secant step that falls back to bisection once a
bracket exists.

Calibration operates on plain scenario dicts so the tuned values can be
written straight back to a scenario file.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

from mrteleop.scenario_io import ScenarioError, scenario_from_dict
from mrteleop.session import Session, collision_summary

__all__ = [
    "CalibrationError",
    "CalibrationResult",
    "CalibrationTarget",
    "calibrate_scenario",
    "calibrate_stiffness",
    "measure_windows",
]

# stiffness search range, N/m
STIFFNESS_FLOOR = 1.0
STIFFNESS_CEIL = 1e8


class CalibrationError(RuntimeError):
    """Raised when calibration cannot evaluate or converge on a target."""


@dataclass(frozen=True)
class CalibrationTarget:
    """Tune objects[object_index] until collision window window_index has the
    requested RMS clutch torque (N m)."""

    object_index: int
    window_index: int
    rms_torque: float

    def __post_init__(self):
        if self.object_index < 0 or self.window_index < 0:
            raise ValueError("CalibrationTarget indices must be >= 0")
        if not self.rms_torque > 0:
            raise ValueError("CalibrationTarget.rms_torque must be > 0")


@dataclass
class CalibrationResult:
    target: CalibrationTarget
    stiffness: float
    achieved: float
    iterations: int
    converged: bool


def measure_windows(scenario_dict: dict, pad: float = 0.05) -> list:
    """Run the scenario once and summarize its collision windows."""
    scenario = scenario_from_dict(scenario_dict)
    records = Session(scenario).run()
    return collision_summary(records, pad)


def _window_rms(scenario_dict: dict, target: CalibrationTarget, pad: float) -> float:
    summary = measure_windows(scenario_dict, pad)
    if target.window_index >= len(summary):
        raise CalibrationError(
            f"scenario produced {len(summary)} collision window(s); "
            f"target needs window {target.window_index}")
    return summary[target.window_index]["rms_torque"]


def _set_stiffness(scenario_dict: dict, index: int, stiffness: float):
    objects = scenario_dict.get("objects", [])
    if index >= len(objects):
        raise CalibrationError(f"scenario has {len(objects)} object(s); no index {index}")
    entry = objects[index]
    entry["stiffness_n_per_m"] = float(stiffness)
    # an explicit value supersedes a named preset
    if "preset" in entry and "label" not in entry:
        entry["label"] = entry["preset"]
    entry.pop("preset", None)


def _get_stiffness(scenario_dict: dict, index: int) -> float:
    from mrteleop.slave_env import STIFFNESS_PRESETS

    objects = scenario_dict.get("objects", [])
    if index >= len(objects):
        raise CalibrationError(f"scenario has {len(objects)} object(s); no index {index}")
    entry = objects[index]
    if "stiffness_n_per_m" in entry:
        return float(entry["stiffness_n_per_m"])
    preset = entry.get("preset")
    if preset in STIFFNESS_PRESETS:
        return STIFFNESS_PRESETS[preset]
    raise CalibrationError(f"objects[{index}] has no stiffness to start from")


def calibrate_stiffness(scenario_dict: dict, target: CalibrationTarget,
                        tol: float = 0.01, max_iters: int = 24,
                        pad: float = 0.05, log=None) -> CalibrationResult:
    """Tune one object's stiffness in place until the windowed RMS torque is
    within tol (relative) of the target.

    Evaluations are whole scenario runs, so max_iters bounds wall time, not
    precision; the secant usually lands in 4-8 runs.
    """
    work = scenario_dict
    lo, hi = math.log(STIFFNESS_FLOOR), math.log(STIFFNESS_CEIL)

    def note(msg):
        if log is not None:
            log(msg)

    def evaluate(x: float) -> float:
        _set_stiffness(work, target.object_index, math.exp(x))
        rms = _window_rms(work, target, pad)
        note(f"  k={math.exp(x):.6g} N/m -> rms {rms:.4f} N m (target {target.rms_torque})")
        return rms

    x0 = math.log(min(max(_get_stiffness(work, target.object_index), STIFFNESS_FLOOR),
                      STIFFNESS_CEIL))
    r0 = evaluate(x0)
    f0 = r0 - target.rms_torque
    best = (abs(f0), x0, r0)
    iterations = 1
    if abs(f0) <= tol * target.rms_torque:
        return CalibrationResult(target, math.exp(x0), r0, iterations, True)

    # bracket endpoints found so far: (x, f) with f < 0 and f > 0
    below = (x0, f0) if f0 < 0 else None
    above = (x0, f0) if f0 > 0 else None

    # second point: assume rms ~ k^(2/3) locally and overshoot a little
    x1 = x0 + 1.5 * math.log(target.rms_torque / max(r0, 1e-6))
    x1 = min(max(x1, lo), hi)
    if abs(x1 - x0) < 1e-3:
        x1 = x0 + (0.5 if f0 < 0 else -0.5)

    while iterations < max_iters:
        r1 = evaluate(x1)
        f1 = r1 - target.rms_torque
        iterations += 1
        if abs(f1) < best[0]:
            best = (abs(f1), x1, r1)
        if abs(f1) <= tol * target.rms_torque:
            _set_stiffness(work, target.object_index, math.exp(x1))
            return CalibrationResult(target, math.exp(x1), r1, iterations, True)
        if f1 < 0 and (below is None or f1 > below[1]):
            below = (x1, f1)
        elif f1 > 0 and (above is None or f1 < above[1]):
            above = (x1, f1)

        if f1 != f0:
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        else:
            x2 = x1 + (0.5 if f1 < 0 else -0.5)
        if below is not None and above is not None:
            ba, bb = sorted((below[0], above[0]))
            if not ba < x2 < bb:
                x2 = 0.5 * (ba + bb)
        x2 = min(max(x2, lo), hi)
        if abs(x2 - x1) < 1e-6:
            break
        x0, f0 = x1, f1
        x1 = x2

    _, xb, rb = best
    _set_stiffness(work, target.object_index, math.exp(xb))
    return CalibrationResult(target, math.exp(xb), rb,
                             iterations, abs(rb - target.rms_torque) <= tol * target.rms_torque)


def calibrate_scenario(scenario_dict: dict, targets, tol: float = 0.01,
                       max_iters: int = 24, pad: float = 0.05, passes: int = 1,
                       log=None):
    """Calibrate several targets sequentially, optionally repeating the whole
    sweep to settle cross-coupling between objects.

    Returns (tuned scenario dict, [CalibrationResult]) with the input left
    untouched.
    """
    if not targets:
        raise ValueError("calibrate_scenario needs at least one target")
    if passes < 1:
        raise ValueError("calibrate_scenario passes must be >= 1")
    seen = set()
    for t in targets:
        if t.object_index in seen:
            raise ValueError(f"duplicate target for objects[{t.object_index}]")
        seen.add(t.object_index)

    work = copy.deepcopy(scenario_dict)
    try:
        scenario_from_dict(work)
    except ScenarioError as exc:
        raise CalibrationError(f"scenario invalid before calibration: {exc}") from exc

    results = []
    for sweep in range(passes):
        results = []
        for t in targets:
            if log is not None:
                log(f"pass {sweep + 1}/{passes}: objects[{t.object_index}] -> "
                    f"window {t.window_index} rms {t.rms_torque} N m")
            results.append(calibrate_stiffness(work, t, tol, max_iters, pad, log))
        if all(r.converged for r in results):
            if sweep + 1 < passes and log is not None:
                log("all targets converged; remaining passes skipped")
            break
    return work, results
