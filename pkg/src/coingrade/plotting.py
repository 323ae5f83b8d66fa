"""Report figures. Always rendered off-screen with the Agg backend."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}

# no timestamps or version strings in the PNG, so reruns are byte-identical
PNG_METADATA = {"Software": None}


def figure(width=4.5, height=None):
    golden = (np.sqrt(5) - 1.0) / 2.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def save(fig, path):
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, format="png", metadata=PNG_METADATA)
    plt.close(fig)


def plot_confusion(report, path, title="Confusion matrix"):
    grades = report.grades
    cm = np.asarray(report.confusion, dtype=float)
    size = 2.0 + 0.32 * len(grades)
    fig, ax = figure(size, size * 0.85)
    with plt.rc_context(STYLE):
        im = ax.imshow(cm, cmap="Blues", origin="upper")
        ax.set_xticks(range(len(grades)), [str(g) for g in grades], rotation=90)
        ax.set_yticks(range(len(grades)), [str(g) for g in grades])
        ax.set_xlabel("predicted grade")
        ax.set_ylabel("true grade")
        ax.set_title(title)
        vmax = cm.max() if cm.size else 0
        for i in range(cm.shape[0]):
            for j in range(cm.shape[1]):
                if cm[i, j]:
                    ax.text(j, i, f"{int(cm[i, j])}", ha="center", va="center", fontsize=6,
                            color="white" if cm[i, j] > 0.6 * vmax else "black")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    save(fig, path)


def plot_tolerance(columns: dict, path):
    """Grouped bars of exact/+-1/+-2/+-3 accuracy, one group per model."""
    fig, ax = figure(4.5)
    tols = [0, 1, 2, 3]
    width = 0.8 / max(1, len(columns))
    with plt.rc_context(STYLE):
        for k, (name, rep) in enumerate(columns.items()):
            vals = [rep.tol_accuracy[t] for t in tols]
            ax.bar(np.arange(4) + k * width, vals, width, label=name)
        ax.set_xticks(np.arange(4) + width * (len(columns) - 1) / 2,
                      ["exact", "±1", "±2", "±3"])
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("accuracy")
        ax.legend(frameon=False)
    save(fig, path)


def plot_bias(bias, path):
    fig, ax = figure(4.5)
    keys = sorted(bias.histogram)
    with plt.rc_context(STYLE):
        ax.bar(keys, [bias.histogram[k] for k in keys], color="0.4")
        ax.axvline(0, color="k", lw=0.8)
        ax.axvline(bias.mean_signed_error, color="C3", lw=1.0, ls="--",
                   label=f"mean {bias.mean_signed_error:+.2f}")
        ax.set_xlabel("predicted - true grade")
        ax.set_ylabel("coins")
        ax.legend(frameon=False)
    save(fig, path)


def plot_history(history: dict, path):
    fig, ax = figure(4.5)
    with plt.rc_context(STYLE):
        ep = np.arange(1, len(history["loss"]) + 1)
        ax.plot(ep, history["loss"], label="train loss")
        if history.get("val_loss"):
            ax.plot(ep, history["val_loss"], label="validation loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax.set_yscale("log")
        ax.legend(frameon=False)
    save(fig, path)
