"""Magnetorheological clutch model.

Hill saturation curve mapping coil current to transmissible torque, its
closed-form inverse, least-squares parameter fitting with error metrics,
first-order magnetization dynamics with rise/fall asymmetry, an alternating
decaying demagnetization waveform, and actuator figure-of-merit ratios.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit

__all__ = [
    "ClutchSaturationError",
    "ClutchSpec",
    "ClutchState",
    "DemagParams",
    "FitError",
    "FitResult",
    "HillParams",
    "TimeConstants",
    "demag_waveform",
    "fit_hill",
    "hill_torque",
    "idle_clutch_state",
    "inverse_hill",
    "performance_metrics",
    "read_current_torque_csv",
    "step_magnetization",
]


class ClutchSaturationError(ValueError):
    """Requested torque at or above the curve's asymptote; clamp before inverting."""


class FitError(RuntimeError):
    """Curve fitting failed or the sample set is degenerate."""


@dataclass(frozen=True)
class HillParams:
    """Saturation curve f(x) = v_max * x^n / (k^n + x^n); x in A, f in N*m."""

    v_max: float = 54.28
    k: float = 0.66
    n: float = 1.96

    def __post_init__(self):
        if not (self.v_max > 0 and self.k > 0 and self.n > 0):
            raise ValueError(f"HillParams must all be > 0, got {self!r}")


@dataclass(frozen=True)
class ClutchSpec:
    """Physical ratings of one clutch unit."""

    idle_torque: float = 0.2
    saturation_current: float = 1.3
    max_torque: float = 42.12
    mass: float = 0.45
    volume: float = 10.4e-5
    dissipated_power: float = 10.14

    def __post_init__(self):
        if not 0 <= self.idle_torque < self.max_torque:
            raise ValueError("ClutchSpec.idle_torque must satisfy 0 <= idle < max_torque")
        if self.saturation_current <= 0:
            raise ValueError("ClutchSpec.saturation_current must be > 0")
        if not (self.mass > 0 and self.volume > 0 and self.dissipated_power > 0):
            raise ValueError("ClutchSpec mass, volume and dissipated_power must be > 0")


@dataclass
class ClutchState:
    """Evolving excitation state of one clutch.

    magnetization is an equivalent coil current (A): the level the torque
    curve currently sees, lagging the command. demag_i0 remembers the level
    at which a demagnetization burst started, for waveform reconstruction.
    """

    commanded_current: float = 0.0
    magnetization: float = 0.0
    output_torque: float = 0.0
    mode: str = "idle"
    demag_elapsed: float = 0.0
    demag_i0: float = 0.0

    def __post_init__(self):
        if self.mode not in ("excite", "demag", "idle"):
            raise ValueError(f"ClutchState.mode must be excite/demag/idle, got {self.mode!r}")
        if self.magnetization < 0:
            raise ValueError("ClutchState.magnetization must be >= 0")
        if self.output_torque < 0:
            raise ValueError("ClutchState.output_torque must be >= 0")
        if self.demag_elapsed < 0:
            raise ValueError("ClutchState.demag_elapsed must be >= 0")


@dataclass(frozen=True)
class DemagParams:
    """Alternating decaying-burst parameters for active demagnetization."""

    frequency: float = 100.0
    envelope_tau: float = 0.05
    duration: float = 0.25

    def __post_init__(self):
        if not (self.frequency > 0 and self.envelope_tau > 0 and self.duration > 0):
            raise ValueError("DemagParams fields must be > 0")
        if self.duration < 3.0 * self.envelope_tau:
            raise ValueError("DemagParams.duration must be >= 3 * envelope_tau")


@dataclass(frozen=True)
class TimeConstants:
    """First-order lag constants (s) for magnetization dynamics."""

    tau_rise: float = 0.010
    tau_fall: float = 0.300
    tau_demag: float = 0.020

    def __post_init__(self):
        if not (self.tau_rise > 0 and self.tau_fall > 0 and self.tau_demag > 0):
            raise ValueError("TimeConstants must all be > 0")


@dataclass(frozen=True)
class FitResult:
    """Fitted curve parameters plus residual error metrics."""

    params: HillParams
    mae: float
    rmse: float
    nrmse: float

    def __post_init__(self):
        if self.mae > self.rmse + 1e-12:
            raise ValueError("FitResult.mae cannot exceed rmse")
        if not 0 <= self.nrmse <= 1:
            raise ValueError("FitResult.nrmse must lie in [0, 1]")


def hill_torque(params: HillParams, current):
    """Transmissible torque (N*m) at coil current (A); scalar or array."""
    if isinstance(current, (int, float)):
        if current < 0:
            raise ValueError(f"current must be >= 0, got {current!r}")
        xn = current**params.n
        return params.v_max * xn / (params.k**params.n + xn)
    x = np.asarray(current, dtype=float)
    if np.any(x < 0):
        raise ValueError(f"current must be >= 0, got {current!r}")
    xn = x**params.n
    torque = params.v_max * xn / (params.k**params.n + xn)
    return float(torque) if torque.ndim == 0 else torque


def inverse_hill(params: HillParams, torque):
    """Coil current (A) producing the given torque; defined on [0, v_max).

    Raises ClutchSaturationError at or above v_max: the curve saturates, so
    callers must clamp the request first.
    """
    if isinstance(torque, (int, float)):
        if torque < 0:
            raise ValueError(f"torque must be >= 0, got {torque!r}")
        if torque >= params.v_max:
            raise ClutchSaturationError(
                f"torque {torque!r} not reachable below the {params.v_max} N*m asymptote"
            )
        return params.k * (torque / (params.v_max - torque)) ** (1.0 / params.n)
    f = np.asarray(torque, dtype=float)
    if np.any(f < 0):
        raise ValueError(f"torque must be >= 0, got {torque!r}")
    if np.any(f >= params.v_max):
        raise ClutchSaturationError(
            f"torque {torque!r} not reachable below the {params.v_max} N*m asymptote"
        )
    current = params.k * (f / (params.v_max - f)) ** (1.0 / params.n)
    return float(current) if current.ndim == 0 else current


def fit_hill(samples) -> FitResult:
    """Nonlinear least-squares fit of the saturation curve to (current, torque) pairs.

    Multi-start over a coarse (n, k) grid to dodge local minima; the best
    sum-of-squares wins. nrmse normalizes rmse by the observed torque range.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("samples must be an N x 2 array of (current, torque)")
    if data.shape[0] < 4:
        raise FitError("need at least 4 samples")
    currents, torques = data[:, 0], data[:, 1]
    if np.any(currents < 0):
        raise FitError("currents must be >= 0")
    if len(np.unique(currents)) < 3:
        raise FitError("need at least 3 distinct currents")
    torque_range = float(torques.max() - torques.min())
    if torque_range <= 0:
        raise FitError("torques are all identical; nothing to fit")

    def model(x, v_max, k, n):
        xn = np.power(np.maximum(x, 0.0), n)
        return v_max * xn / (k**n + xn)

    v0 = 1.2 * float(torques.max())
    best = None
    for n0 in (1.0, 2.0, 3.0):
        for k0 in (0.3, 0.6, 1.0):
            try:
                popt, _ = curve_fit(
                    model, currents, torques, p0=(v0, k0, n0),
                    bounds=(1e-9, np.inf), maxfev=20000,
                )
            except (RuntimeError, ValueError):
                continue
            ssr = float(np.sum((model(currents, *popt) - torques) ** 2))
            if best is None or ssr < best[0]:
                best = (ssr, popt)
    if best is None:
        raise FitError("no start point converged")
    v_max, k, n = (float(v) for v in best[1])
    params = HillParams(v_max=v_max, k=k, n=n)
    residuals = hill_torque(params, currents) - torques
    mae = float(np.mean(np.abs(residuals)))
    rmse = float(np.sqrt(np.mean(residuals**2)))
    return FitResult(params=params, mae=mae, rmse=rmse,
                     nrmse=min(rmse / torque_range, 1.0))


def read_current_torque_csv(path) -> np.ndarray:
    """Load (current, torque) samples from a CSV with header current_a,torque_nm."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["current_a", "torque_nm"]:
            raise ValueError(f"{path}: expected header 'current_a,torque_nm', got {header!r}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def idle_clutch_state(spec: ClutchSpec) -> ClutchState:
    """Fresh unexcited state: zero magnetization, output at the idle drag level."""
    return ClutchState(output_torque=spec.idle_torque)


def step_magnetization(
    state: ClutchState,
    command: float,
    dt: float,
    params: HillParams,
    spec: ClutchSpec,
    time_constants: TimeConstants = TimeConstants(),
    demag_params: DemagParams = DemagParams(),
) -> ClutchState:
    """Advance magnetization by dt and recompute output torque.

    Excite/idle: first-order lag toward the command, rising faster than it
    falls. Demag: exponential drain toward zero that ignores the command until
    the burst duration elapses. Output torque never drops below idle drag.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt!r}")
    if not 0 <= command <= spec.saturation_current:
        raise ValueError(
            f"command {command!r} outside [0, {spec.saturation_current}] A"
        )
    if dt == 0:
        return replace(state)
    m = state.magnetization
    if state.mode == "demag":
        m = min(max(m * math.exp(-dt / time_constants.tau_demag), 0.0),
                spec.saturation_current)
        elapsed = state.demag_elapsed + dt
        done = elapsed >= demag_params.duration
        return ClutchState(
            commanded_current=command,
            magnetization=m,
            output_torque=max(spec.idle_torque, hill_torque(params, m)),
            mode="idle" if done else "demag",
            demag_elapsed=0.0 if done else elapsed,
            demag_i0=0.0 if done else state.demag_i0,
        )
    tau = time_constants.tau_rise if command > m else time_constants.tau_fall
    m = command + (m - command) * math.exp(-dt / tau)
    m = min(max(m, 0.0), spec.saturation_current)
    return ClutchState(
        commanded_current=command,
        magnetization=m,
        output_torque=max(spec.idle_torque, hill_torque(params, m)),
        mode="excite" if command > 0 else "idle",
        demag_elapsed=0.0,
        demag_i0=0.0,
    )


def demag_waveform(i0: float, t: float, params: DemagParams = DemagParams()) -> float:
    """Signed coil current of the demagnetization burst at time t since trigger."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    if i0 < 0:
        raise ValueError(f"i0 must be >= 0, got {i0!r}")
    if t > params.duration:
        return 0.0
    return float(i0 * np.exp(-t / params.envelope_tau) * np.sin(2.0 * np.pi * params.frequency * t))


def performance_metrics(spec: ClutchSpec) -> dict:
    """Torque-to-mass, torque-to-volume and torque-to-power ratios."""
    if spec.mass == 0 or spec.volume == 0 or spec.dissipated_power == 0:
        raise ValueError("metrics need nonzero mass, volume and dissipated_power")
    return {
        "tmr": spec.max_torque / spec.mass,
        "tvr": spec.max_torque / spec.volume,
        "tpr": spec.max_torque / spec.dissipated_power,
    }
