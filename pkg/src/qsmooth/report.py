"""Static figures written next to the CSV output of the command line."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "filtered": dict(color="tab:blue", lw=1.2, label="filtered"),
    "q1": dict(color="tab:red", lw=1.5, label="Q1 smoothed"),
    "q2": dict(color="deepskyblue", ls="--", lw=1.5, label="Q2 lustrated"),
    "q3": dict(color="magenta", ls="-.", lw=1.5, label="Q3 most likely"),
    "q4": dict(color="tab:olive", ls=":", lw=1.5, label="Q4 best past record"),
    "q5": dict(color="tab:green", lw=1.2, label="Q5 best whole record"),
    "q6": dict(color="tab:orange", ls="--", lw=1.2, label="Q6 = Q7 local record"),
    "q8": dict(color="black", ls=(0, (5, 1, 1, 1)), lw=1.2, label="Q8 SWV"),
}


def _style(name):
    return STYLE.get(name, dict(label=name))


def _break_wraps(theta):
    """Angles in [0, 2 pi) with NaN where the curve wraps, so no vertical lines."""
    th = np.mod(np.asarray(theta, dtype=float), 2 * np.pi)
    th[1:][np.abs(np.diff(th)) > np.pi] = np.nan
    return th


def plot_trajectories(block, path, names=None) -> Path:
    """y, z, angle and radius of every estimator against time."""
    names = names or [n for n in STYLE if n in block.tracks]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    for name in names:
        tr = block.tracks[name]
        st = _style(name)
        axes[0, 0].plot(tr.times, tr.y, **st)
        axes[0, 1].plot(tr.times, tr.z, **st)
        axes[1, 0].plot(tr.times, _break_wraps(tr.theta), **st)
        axes[1, 1].plot(tr.times, tr.radius, **st)
    for ax, lab in zip(axes.ravel(), ("y", "z", r"$\theta$", "R")):
        ax.set_ylabel(lab)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel(r"t [$T_\gamma$]")
    axes[0, 0].legend(fontsize=7, loc="best")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_costs(reports: dict, path) -> Path:
    """Per-time costs, one panel per cost, one line per estimator."""
    panels = [c for c in ("c1", "c2", "c3", "c8", "c6") if any(c in r.per_time for r in reports.values())]
    fig, axes = plt.subplots(1, len(panels), figsize=(3.6 * len(panels), 3.4), squeeze=False)
    for ax, c in zip(axes[0], panels):
        for name, rep in reports.items():
            if c not in rep.per_time:
                continue
            t = rep.record_times if c == "c6" else rep.times
            ax.plot(t, rep.per_time[c], **_style(name))
        ax.set_title("c6 = c7" if c == "c6" else c)
        ax.set_xlabel(r"t [$T_\gamma$]")
        ax.grid(alpha=0.3)
        if c == "c6":
            ax.set_yscale("symlog", linthresh=1.0)
    axes[0, 0].legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_mc_check(rows, path) -> Path:
    """Density pipeline curves against Monte Carlo points with error bars."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, kind in zip(axes, ("filtered", "smoothed")):
        for comp, color in (("y", "tab:blue"), ("z", "tab:red")):
            sel = [r for r in rows if r["kind"] == kind and r["component"] == comp]
            t = [r["t"] for r in sel]
            ax.plot(t, [r["pde"] for r in sel], "--", color=color, label=f"{comp} density")
            ax.errorbar(t, [r["mc"] for r in sel], yerr=[3 * r["se"] for r in sel], fmt="o", ms=3, color=color, label=f"{comp} Monte Carlo")
        ax.set_title(kind)
        ax.set_xlabel(r"t [$T_\gamma$]")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_table(table, path) -> Path:
    """Jump-time-averaged cost matrix as an annotated heat map."""
    m = table.matrix()
    fig, ax = plt.subplots(figsize=(6, 3))
    z = (m - np.nanmin(m, axis=1, keepdims=True)) / (np.nanmax(m, axis=1, keepdims=True) - np.nanmin(m, axis=1, keepdims=True) + 1e-300)
    ax.imshow(np.ma.masked_invalid(z), cmap="Greys", vmin=0, vmax=2)
    for i, c in enumerate(table.rows):
        best = table.row_minimizer(c)
        for j, e in enumerate(table.columns):
            v = m[i, j]
            txt = "NA" if np.isnan(v) else f"{v:.2f}"
            ax.text(j, i, txt, ha="center", va="center", fontweight="bold" if e == best else "normal")
    ax.set_xticks(range(len(table.columns)), [e.upper() for e in table.columns])
    ax.set_yticks(range(len(table.rows)), [c.upper() for c in table.rows])
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
