"""Figures written straight to files (Agg backend, no display needed)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import gaussian_kde  # noqa: E402

# PNG metadata without a software/version stamp keeps reruns byte-stable
_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _grid(n, ncols=4, size=2.6):
    ncols = min(ncols, n)
    nrows = int(np.ceil(n / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(size * ncols, 0.8 * size * nrows),
                             squeeze=False)
    for ax in axes.flat[n:]:
        ax.set_visible(False)
    return fig, axes.flat


def _density(ax, x, label=None, color=None):
    x = np.asarray(x, dtype=float)
    if x.size > 2 and np.ptp(x) > 0:
        grid = np.linspace(x.min(), x.max(), 200)
        ax.plot(grid, gaussian_kde(x)(grid), label=label, color=color, lw=1.2)
    else:
        ax.axvline(x.mean(), label=label, color=color, lw=1.2)


def plot_posterior_densities(chains, parameters, path, truth=None):
    """Kernel density of each parameter, one curve per model."""
    fig, axes = _grid(len(parameters))
    for ax, name in zip(axes, parameters):
        for k, (model, chain) in enumerate(chains.items()):
            if name in chain.names:
                _density(ax, chain.column(name), label=model, color=f"C{k}")
        if truth and name in truth:
            ax.axvline(truth[name], color="k", ls="--", lw=0.8)
        ax.set_title(name, fontsize=9)
        ax.tick_params(labelsize=7)
        ax.set_yticks([])
    axes[0].legend(fontsize=6, frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_traces(chain, parameters, path):
    fig, axes = plt.subplots(len(parameters), 1, figsize=(7, 1.2 * len(parameters) + 0.4),
                             sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], parameters):
        ax.plot(chain.iterations, chain.column(name), lw=0.5, color="#333333")
        ax.set_ylabel(name, fontsize=8, rotation=0, ha="right")
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_study(aggregates, path):
    """Replicate-averaged posterior means with mean HPD half-widths, against the truth."""
    models = list(aggregates)
    names = []
    for rows in aggregates.values():
        names += [r.name for r in rows if r.name not in names]
    x = np.arange(len(names))
    width = 0.8 / max(1, len(models))
    fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(names) + 1), 3.2))
    for k, model in enumerate(models):
        rows = {r.name: r for r in aggregates[model]}
        idx = [j for j, n in enumerate(names) if n in rows]
        mean = np.array([rows[names[j]].mean for j in idx])
        half = np.array([rows[names[j]].hpd_length / 2 for j in idx])
        ax.errorbar(x[idx] + (k - (len(models) - 1) / 2) * width, mean, yerr=half, fmt="o",
                    ms=3, lw=0.8, capsize=2, label=model, color=f"C{k}")
    truth = {r.name: r.truth for rows in aggregates.values() for r in rows
             if r.truth is not None}
    for xi, n in zip(x, names):
        t = truth.get(n)
        if t is not None:
            ax.plot([xi - 0.4, xi + 0.4], [t, t], color="k", lw=1)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, fontsize=7)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_scores(scores, path):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(6, 2.6))
    labels = [s.model for s in scores]
    a1.bar(labels, [s.dic for s in scores], color="#777777")
    a1.set_title("DIC", fontsize=9)
    a2.bar(labels, [s.lpml for s in scores], color="#777777")
    a2.set_title("LPML", fontsize=9)
    for ax in (a1, a2):
        ax.tick_params(labelsize=6)
        vals = [p.get_height() for p in ax.patches]
        span = max(vals) - min(vals)
        pad = max(span, 1.0)
        ax.set_ylim(min(vals) - pad, max(vals) + pad)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path
