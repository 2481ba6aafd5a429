"""Figures written next to training reports."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def plot_training_curves(report, path):
    """Loss per epoch, with the validation score on a twin axis when present."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        epochs = range(1, len(report["loss_curve"]) + 1)
        ax.plot(epochs, report["loss_curve"], color="tab:blue", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        if report.get("val_curve"):
            ax2 = ax.twinx()
            name = "val mIoU" if report["task"] == "segmentation" else "val accuracy"
            ax2.plot(epochs, report["val_curve"], color="tab:orange", label=name)
            ax2.set_ylabel(name)
            ax2.set_ylim(0, 1.02)
            best = report.get("best_epoch")
            if best is not None:
                ax2.axvline(best + 1, color="0.6", lw=0.8, ls="--")
        fig.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path
