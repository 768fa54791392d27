"""Matplotlib report figures written next to the CSV/JSON outputs."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def radius_figure(r_o, r_e, path):
    """Embedded vs original log radius per frame direction, with a least-squares line."""
    d = r_o.shape[1]
    fig, axes = plt.subplots(1, d, figsize=(4 * d, 3.6), squeeze=False)
    for l, ax in enumerate(axes[0]):
        x, y = r_o[:, l], r_e[:, l]
        ax.scatter(x, y, s=4, alpha=0.5)
        if np.ptp(x) > 0:
            slope, icpt = np.polyfit(x, y, 1)
            xs = np.array([x.min(), x.max()])
            ax.plot(xs, slope * xs + icpt, color="k", lw=1)
            r = np.corrcoef(x, y)[0, 1] if np.ptp(y) > 0 else 0.0
            ax.set_title(f"direction {l + 1}: r = {r:.3f}")
        ax.set_xlabel("original log radius (centred)")
        ax.set_ylabel("embedded log radius")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def loss_figure(diagnostics, path):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ce = diagnostics.get("ce_loss", [])
    a1.plot(np.arange(1, len(ce) + 1), ce)
    a1.set_xlabel("epoch")
    a1.set_ylabel("edge cross-entropy")
    kl = diagnostics.get("frame_kl", [])
    a2.plot(np.arange(len(kl)), kl, color="C1")
    a2.set_xlabel("epoch")
    a2.set_ylabel("frame KL")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_figures(result, directory):
    """Render the radius-correlation and loss figures; returns the written paths."""
    os.makedirs(directory, exist_ok=True)
    diag = result.diagnostics
    return [
        radius_figure(np.asarray(diag["r_o"]), np.asarray(diag["r_e"]),
                      os.path.join(directory, "radius_correlation.png")),
        loss_figure(diag, os.path.join(directory, "losses.png")),
    ]
