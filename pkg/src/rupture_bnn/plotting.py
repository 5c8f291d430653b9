"""Matplotlib renderings of the report tables.

Each function takes the same rows/tables that are written as CSV and saves
one PNG. Figures are written without timestamp metadata so repeated runs
produce identical files.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_prior_posterior(tables, path):
    """One panel per parameter group: histogram of posterior means vs prior pdf."""
    with plt.rc_context(STYLE):
        ncols = 2
        nrows = -(-len(tables) // ncols)
        fig, axes = plt.subplots(nrows, ncols, figsize=(7, 2.6 * nrows), squeeze=False)
        for ax, t in zip(axes.flat, tables):
            width = t.bin_centers[1] - t.bin_centers[0]
            ax.bar(t.bin_centers, t.density, width=width, alpha=0.6, label="posterior mean")
            ax.plot(t.bin_centers, t.prior_density, "k-", lw=1.2, label="prior N(0,1)")
            ax.set_title(t.group)
            ax.set_ylabel("density")
        for ax in list(axes.flat)[len(tables):]:
            ax.axis("off")
        axes.flat[0].legend(loc="upper right")
        fig.tight_layout()
        _save(fig, path)


def plot_weight_maps(summary, path, feature_names=None):
    """Heatmaps of weight means (top row) and stddevs (bottom row) per layer."""
    n = len(summary.means)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, n, figsize=(3.6 * n, 6), squeeze=False)
        for i in range(n):
            for row, (mats, label, cmap) in enumerate(((summary.means, "mean", "RdBu_r"),
                                                        (summary.stddevs, "std", "viridis"))):
                ax = axes[row, i]
                m = mats[i].T  # hidden units on the vertical axis
                if cmap == "RdBu_r":
                    lim = np.abs(m).max() or 1.0
                    im = ax.imshow(m, cmap=cmap, vmin=-lim, vmax=lim, aspect="auto")
                else:
                    im = ax.imshow(m, cmap=cmap, aspect="auto")
                ax.set_title(f"w{i} {label}")
                if i == 0 and feature_names is not None:
                    ax.set_xticks(range(len(feature_names)))
                    ax.set_xticklabels(feature_names, rotation=60, ha="right")
                fig.colorbar(im, ax=ax)
        fig.tight_layout()
        _save(fig, path)


def plot_score_histogram(rows, path):
    centers = np.array([r.bin_center for r in rows])
    counts = np.array([r.count for r in rows])
    stds = np.array([np.nan if r.mean_std is None else r.mean_std for r in rows])
    width = centers[1] - centers[0]
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 2.8))
        a.bar(centers, counts, width=width * 0.9)
        a.set_xlabel("mean prediction score")
        a.set_ylabel("examples")
        b.bar(centers, stds, width=width * 0.9, color="tab:orange")
        b.set_xlabel("mean prediction score")
        b.set_ylabel("mean std of scores")
        fig.tight_layout()
        _save(fig, path)


def plot_importance(rows, path):
    names = [r.feature_name for r in rows]
    y = np.arange(len(rows))
    unc_p = [np.nan if r.uncertainty_propagated is None else r.uncertainty_propagated for r in rows]
    unc_a = [np.nan if r.uncertainty_arrested is None else r.uncertainty_arrested for r in rows]
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7.5, 3), sharey=True)
        a.barh(y, [r.f1_drop for r in rows], xerr=[r.shuffled_f1_std for r in rows])
        a.set_yticks(y)
        a.set_yticklabels(names)
        a.invert_yaxis()
        a.set_xlabel("weighted F1 drop")
        b.barh(y - 0.2, unc_p, height=0.4, label="propagated")
        b.barh(y + 0.2, unc_a, height=0.4, label="arrested")
        b.set_xlabel("mean std of scores")
        b.legend()
        fig.tight_layout()
        _save(fig, path)
