"""Batch report rendering: PNG figures plus a text summary for one run.

Everything draws through the Agg backend so reports render identically on
headless machines. Figures land next to the delimited telemetry a run
already writes:

  torque_semg.png     elbow clutch torque and the sEMG proxy, contact shaded
  tracking_error.png  slave end point minus the mapped master end point
  joint_currents.png  commanded clutch currents, all actuated joints
  summary.txt         event counts and per-window RMS figures
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from mrteleop.kinematics import WorkspaceMap
from mrteleop.operator import SEMGCalibration
from mrteleop.session import collision_summary, collision_windows, count_collision_events

__all__ = ["render_report"]


def _shade_windows(ax, windows):
    for lo, hi in windows:
        ax.axvspan(lo, hi, color="tab:red", alpha=0.12, lw=0)


def _torque_semg_figure(t, records, windows, path):
    fig, (ax_tau, ax_emg) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    tau = [rec.feedback_torques[-1] for rec in records]
    semg = [rec.semg for rec in records]
    ax_tau.plot(t, tau, color="tab:blue", lw=1.0)
    ax_tau.set_ylabel("elbow clutch torque (N m)")
    ax_emg.plot(t, semg, color="tab:green", lw=1.0)
    ax_emg.set_ylabel("sEMG proxy (uV)")
    ax_emg.set_xlabel("time (s)")
    for ax in (ax_tau, ax_emg):
        _shade_windows(ax, windows)
        ax.grid(True, alpha=0.3)
    ax_tau.set_title("force feedback and muscle proxy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _tracking_figure(t, records, wmap, windows, path):
    master = np.array([rec.master_ee for rec in records])
    slave = np.array([rec.slave_ee for rec in records])
    if wmap is not None:
        mapped = wmap.slave_origin + wmap.scale * (master - wmap.master_origin)
    else:
        mapped = master
    err = slave - mapped
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, label in enumerate("xyz"):
        ax.plot(t, 1e3 * err[:, i], lw=0.9, label=label)
    ax.plot(t, 1e3 * np.linalg.norm(err, axis=1), lw=1.2, color="black",
            alpha=0.7, label="|error|")
    _shade_windows(ax, windows)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("tracking error (mm)")
    ax.set_title("slave end point minus mapped master end point")
    ax.legend(loc="upper right", ncol=4, fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _currents_figure(t, records, windows, path):
    currents = np.array([rec.currents for rec in records])
    fig, ax = plt.subplots(figsize=(8, 4))
    for i in range(currents.shape[1]):
        ax.plot(t, currents[:, i], lw=0.9, label=f"joint {i + 1}")
    _shade_windows(ax, windows)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("commanded current (A)")
    ax.set_title("clutch current commands")
    ax.legend(loc="upper right", ncol=4, fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _event_counts(records):
    counts: dict[str, int] = {}
    for rec in records:
        for name in rec.events:
            counts[name] = counts.get(name, 0) + 1
    return counts


def _summary_text(records, windows, summary):
    t0, t1 = records[0].t, records[-1].t
    master = np.array([rec.master_ee for rec in records])
    slave = np.array([rec.slave_ee for rec in records])
    lines = [
        "run summary",
        f"  ticks: {len(records)}",
        f"  time span: {t0:.3f} .. {t1:.3f} s",
        f"  collision onsets: {count_collision_events(records)}",
    ]
    counts = _event_counts(records)
    if counts:
        lines.append("  event ticks: " + ", ".join(
            f"{k}={v}" for k, v in sorted(counts.items())))
    else:
        lines.append("  event ticks: none")
    lines.append(f"  master end point span: {np.ptp(master, axis=0).round(4).tolist()} m")
    lines.append(f"  slave end point span: {np.ptp(slave, axis=0).round(4).tolist()} m")
    if windows:
        lines.append("contact windows (padded 50 ms):")
        for entry in summary:
            lo, hi = entry["window"]
            lines.append(
                f"  {lo:.3f} .. {hi:.3f} s  rms torque {entry['rms_torque']:.3f} N m"
                f"  rms sEMG {entry['rms_semg']:.1f} uV"
                f"  curve sEMG {entry['semg_at_rms_torque']:.1f} uV")
    else:
        lines.append("contact windows: none")
    return "\n".join(lines) + "\n"


def render_report(records, outdir, wmap: WorkspaceMap | None = None,
                  cal: SEMGCalibration | None = None, pad: float = 0.05) -> list:
    """Render the standard figure set for one record list; returns the paths
    written, summary last."""
    if not records:
        raise ValueError("render_report needs at least one record")
    os.makedirs(outdir, exist_ok=True)
    t = [rec.t for rec in records]
    windows = collision_windows(records, pad)
    summary = collision_summary(records, pad, cal or SEMGCalibration())

    paths = []
    path = os.path.join(outdir, "torque_semg.png")
    _torque_semg_figure(t, records, windows, path)
    paths.append(path)
    path = os.path.join(outdir, "tracking_error.png")
    _tracking_figure(t, records, wmap, windows, path)
    paths.append(path)
    path = os.path.join(outdir, "joint_currents.png")
    _currents_figure(t, records, windows, path)
    paths.append(path)
    path = os.path.join(outdir, "summary.txt")
    with open(path, "w") as fh:
        fh.write(_summary_text(records, windows, summary))
    paths.append(path)
    return paths
