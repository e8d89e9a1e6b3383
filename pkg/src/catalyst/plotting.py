"""PNG figures rendered next to the CSV logs (Agg backend, no display needed)."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["figure.dpi"] = 100
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3
plt.rcParams["font.size"] = 9

# strip the version string so repeated runs give identical PNG bytes
_META = {"Software": None}

_PHASE_COLORS = {"opt1": "tab:blue", "opt2": "tab:orange", "finetune": "tab:green"}


def _save(fig, path):
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_training_curves(runlog, path):
    """Test accuracy, train loss and ``||DW||_{2,1}`` against step, coloured by phase."""
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for phase, color in _PHASE_COLORS.items():
        rows = [r for r in runlog.steps if r.phase == phase]
        if not rows:
            continue
        t = [r.step for r in rows]
        axes[0].plot(t, [r.test_acc for r in rows], color=color, lw=0.8, label=phase)
        axes[1].plot(t, [r.train_loss for r in rows], color=color, lw=0.5)
        if phase != "finetune":
            axes[2].semilogy(t, [max(r.reg_value, 1e-300) for r in rows], color=color, lw=0.8)
    for e in runlog.events:
        for ax in axes:
            ax.axvline(e.step, color="k", ls=":", lw=0.8)
    axes[0].set_ylabel("test acc (%)")
    axes[1].set_ylabel("train loss")
    axes[2].set_ylabel(r"$\|DW\|_{2,1}$")
    axes[2].set_xlabel("step")
    if runlog.steps:
        axes[0].legend(loc="lower right")
    return _save(fig, path)


def plot_histograms(hists, path):
    """One row per checkpoint: histograms of log10 c, log10 ||F|| and log10 |D|."""
    n = len(hists)
    fig, axes = plt.subplots(n, 3, figsize=(9, 1.6 * n + 0.6), squeeze=False)
    titles = (r"$\log_{10} c_i$", r"$\log_{10}\|F_i\|$", r"$\log_{10}|D_{ii}|$")
    for row, h in enumerate(hists):
        counts = h.counts()
        for col, (key, edges) in enumerate((("log10_c", h.edges_log_c),
                                            ("log10_filter_norm", h.edges_log_norm),
                                            ("log10_abs_d", h.edges_log_d))):
            ax = axes[row, col]
            ax.stairs(counts[key], edges, fill=True, alpha=0.7)
            if col == 0:
                ax.axvline(0.0, color="r", lw=0.8)
                ax.set_ylabel(h.checkpoint)
            if row == 0:
                ax.set_title(titles[col])
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectory(traj, path):
    """``c_t`` of one simulated trajectory with its window edges."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    t = np.asarray(traj.t)
    c = np.asarray(traj.c)
    ax.semilogy(t, c, lw=1.0, label="c_t")
    lam = np.asarray(traj.lam)
    ax.semilogy(t, lam, "k--", lw=0.6, label=r"$\lambda_t$")
    ax.semilogy(t, 1.0 / lam, "k:", lw=0.6, label=r"$1/\lambda_t$")
    ax.axhline(1.0, color="r", lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("c")
    ax.set_title(f"outcome: {traj.outcome.value}")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_phase_diagram(rows, path):
    """Outcome markers over ``(c0, lambda)``, one panel per alpha."""
    alphas = sorted({r.alpha for r in rows})
    fig, axes = plt.subplots(1, max(len(alphas), 1), figsize=(4 * max(len(alphas), 1), 3.5), squeeze=False)
    markers = {"Preserve": ("o", "tab:blue"), "Prune": ("^", "tab:red"), "Boundary": ("s", "k"),
               "SignFlip": ("x", "tab:purple"), "Budget": ("d", "tab:gray")}
    for ax, alpha in zip(axes[0], alphas):
        sub = [r for r in rows if r.alpha == alpha]
        for name, (m, color) in markers.items():
            pts = [(r.c0, r.lam) for r in sub if r.outcome.value == name]
            if pts:
                x, y = zip(*pts)
                ax.scatter(x, y, marker=m, color=color, label=name, s=25)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.axvline(1.0, color="r", lw=0.6)
        ax.set_xlabel("c0")
        ax.set_ylabel("lambda")
        ax.set_title(f"alpha = {alpha:g}" if math.isfinite(alpha) else "alpha")
        ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
