"""SVG figures of orbits, trajectories and minimax values."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# stable element ids and no timestamp, so reruns give identical files
matplotlib.rcParams["svg.hashsalt"] = "magflow"
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def _sphere_axes(ax, view):
    th = np.linspace(0, 2 * np.pi, 200)
    ax.plot(np.cos(th), np.sin(th), color="0.3", lw=0.8)
    for lat in np.radians([-60, -30, 0, 30, 60]):
        r = np.cos(lat)
        if view == "z":
            ax.plot(r * np.cos(th), r * np.sin(th), color="0.85", lw=0.5)
        else:
            ax.plot([-r, r], [np.sin(lat)] * 2, color="0.85", lw=0.5)
    ax.set_aspect("equal")
    ax.set_xlim(-1.1, 1.1)
    ax.set_ylim(-1.1, 1.1)
    ax.set_xticks([])
    ax.set_yticks([])


def _sphere_views(curves, title, path, labels=None):
    """Two orthographic views (from +z and from +x) of curves on the sphere."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, view in zip(axes, ("z", "x")):
        _sphere_axes(ax, view)
        for i, Q in enumerate(curves):
            if view == "z":
                front = Q[:, 2] >= 0
                u, v = Q[:, 0], Q[:, 1]
            else:
                front = Q[:, 0] >= 0
                u, v = Q[:, 1], Q[:, 2]
            lab = labels[i] if labels else None
            ax.plot(np.where(front, u, np.nan), np.where(front, v, np.nan), lw=1.2, label=lab)
            ax.plot(np.where(front, np.nan, u), np.where(front, np.nan, v), lw=0.8, ls=":", color="C%d" % i)
        ax.set_title("view from +%s" % view, fontsize=9)
    if labels:
        axes[0].legend(fontsize=7, loc="lower left")
    fig.suptitle(title, fontsize=10)
    _save(fig, path)


def _plane(curves, title, path, labels=None):
    fig, ax = plt.subplots(figsize=(5, 5))
    for i, Q in enumerate(curves):
        ax.plot(Q[:, 0], Q[:, 1], lw=1.2, label=labels[i] if labels else None)
    ax.set_aspect("equal")
    ax.set_xlabel("x (lift)")
    ax.set_ylabel("y (lift)")
    ax.grid(True, lw=0.3)
    if labels:
        ax.legend(fontsize=7)
    ax.set_title(title, fontsize=10)
    _save(fig, path)


def plot_curves(surface, curves, title, path, labels=None):
    curves = [np.asarray(c, dtype=float) for c in curves]
    if surface.is_sphere:
        _sphere_views(curves, title, path, labels)
    else:
        _plane(curves, title, path, labels)


def plot_loop(surface, loop, title, path):
    X = loop.samples
    if not surface.is_sphere:
        X = np.vstack([X, X[:1] + np.asarray(loop.holonomy, dtype=float)])
    else:
        X = np.vstack([X, X[:1]])
    plot_curves(surface, [X], title, path)


def plot_trajectory(surface, traj, title, path):
    plot_curves(surface, [traj.q], title, path)


def plot_energy(traj, path):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(traj.times, traj.energy - traj.energy[0], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("H(t) - H(0)")
    ax.ticklabel_format(axis="y", style="sci", scilimits=(0, 0))
    fig.tight_layout()
    _save(fig, path)


def plot_minimax(ks, cs, selected, path):
    ks = np.asarray(ks)
    cs = np.asarray(cs)
    sel = np.asarray(selected, dtype=bool)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, cs, "-", color="0.4", lw=1)
    ax.plot(ks[sel], cs[sel], "o", color="C0", label="selected")
    ax.plot(ks[~sel], cs[~sel], "x", color="C3", label="not selected")
    ax.set_xlabel("k")
    ax.set_ylabel("c(k)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
