"""Matplotlib figures written next to the CSV/JSON outputs.

Figures are saved as SVG with a fixed id salt and no date stamp so that
repeated runs produce byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "svg.hashsalt": "multifilter",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _window_colors(n):
    return plt.cm.viridis(np.linspace(0.0, 0.9, max(n, 1)))


def plot_processes(ax, processes, Q, change_points=(), title=None):
    """``|G|`` per window, the threshold as a dashed line and detections as diamonds."""
    colors = _window_colors(len(processes))
    for color, p in zip(colors, processes):
        ax.plot(p.t, np.abs(p.G), color=color, lw=0.7, label=f"h={p.h:g}")
    ax.axhline(Q, color="k", ls="--", lw=0.8)
    by_h = {p.h: color for color, p in zip(colors, processes)}
    for c in change_points:
        ax.plot([c.time], [c.value], marker="D", ms=5, color=by_h.get(c.h, "k"), mec="k")
    ax.set_ylabel("|G|")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=6, frameon=False, ncol=2)


def plot_profile(ax, profile, T, truth=None, color="C0", label=None):
    """Estimated step profile (dashed) with an optional true profile (solid)."""
    for a, b, v in profile.segments(T):
        if v is not None:
            ax.plot([a, b], [v, v], color=color, ls="--", lw=1.2)
    if truth is not None:
        for a, b, v in truth:
            ax.plot([a, b], [v, v], color="k", lw=0.8)
    if label:
        ax.set_ylabel(label)


def pipeline_figure(result, path, truth=None):
    """Rate and variance stages: processes on top, step profiles below.

    ``truth`` optionally maps ``"rate"``/``"variance"`` to lists of
    ``(start, end, value)`` segments.
    """
    T = result.config["T"]
    truth = truth or {}
    fig, axes = plt.subplots(2, 2, figsize=(10, 6), sharex=True)
    for col, (name, stage) in enumerate((("rate", result.rate), ("variance", result.variance))):
        plot_processes(axes[0, col], stage.processes, stage.test.Q, stage.change_points,
                       title=f"{name}: M={stage.test.M:.2f}, Q={stage.test.Q:.2f}")
        plot_profile(axes[1, col], stage.profile, T, truth.get(name),
                     color="C0" if name == "rate" else "C3", label=name)
        axes[1, col].set_xlabel("time")
    fig.tight_layout()
    save(fig, path)


def heatmap_figure(rows, x, y, value, path, title=None):
    """Heat map of ``value`` over the ``x`` by ``y`` parameter grid."""
    xs = sorted({r[x] for r in rows})
    ys = sorted({r[y] for r in rows})
    grid = np.full((len(ys), len(xs)), np.nan)
    for r in rows:
        grid[ys.index(r[y]), xs.index(r[x])] = r[value]
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="magma", vmin=0.0)
    ax.set_xticks(range(len(xs)), [f"{v:g}" for v in xs])
    ax.set_yticks(range(len(ys)), [f"{v:g}" for v in ys])
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    for (i, j), v in np.ndenumerate(grid):
        if np.isfinite(v):
            ax.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=7, color="w")
    fig.colorbar(im, ax=ax, label=value)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    save(fig, path)


def detection_figure(rows, path):
    """Detection rate per parameter cell, homogeneous vs inhomogeneous rate."""
    cells = sorted({(r["mu"], r["sd"]) for r in rows if r["factor"] == "all"})
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for offset, design, color in ((-0.15, "homogeneous", "C3"), (0.15, "inhomogeneous", "C0")):
        vals = [next(r for r in rows if (r["mu"], r["sd"]) == c and r["design"] == design
                     and r["factor"] == "all") for c in cells]
        ax.errorbar(np.arange(len(cells)) + offset, [v["rate"] for v in vals],
                    yerr=[v["se"] for v in vals], fmt="o", color=color, label=design)
    ax.set_xticks(range(len(cells)), [f"mu={m:g}\nsd={s:g}" for m, s in cells])
    ax.set_ylabel("correctly detected")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False)
    fig.tight_layout()
    save(fig, path)


def limit_figure(panels, path):
    """Coupled ``|L|``/``|L~|`` realisations and covariance curves per parameter set."""
    fig, axes = plt.subplots(2, len(panels), figsize=(5 * len(panels), 6), squeeze=False)
    for j, panel in enumerate(panels):
        ax = axes[0, j]
        ax.plot(panel["t"], np.abs(panel["L"]), color="C3", lw=0.7, label="|L|")
        ax.plot(panel["t"], np.abs(panel["L_tilde"]), color="C0", lw=0.7, label="|L~|")
        ax.axhline(panel["Q"], color="k", ls="--", lw=0.8)
        ax.axhline(panel["Q_tilde"], color="k", ls=":", lw=0.8)
        ax.set_title(panel["name"])
        ax.legend(frameon=False, fontsize=7)
        ax = axes[1, j]
        ax.plot(panel["offsets"], panel["cov_L"], color="C3", label="L")
        ax.plot(panel["offsets"], panel["cov_L_tilde"], color="C0", label="L~")
        ax.set_xlabel("lag v")
        ax.set_ylabel("covariance at c")
        ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    save(fig, path)
