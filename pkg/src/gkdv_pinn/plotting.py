"""Figure rendering for run directories (matplotlib, file output only)."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def slice_table(x, times, exact, predicted) -> tuple[list, np.ndarray]:
    """Columnar layout: x, then exact and predicted values per report time."""
    header = ["x"]
    cols = [np.asarray(x)]
    for t, ue, up in zip(times, exact, predicted):
        header += [f"exact_t{t:g}", f"pred_t{t:g}"]
        cols += [np.asarray(ue), np.asarray(up)]
    return header, np.column_stack(cols)


def write_columns(path, header, data):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def read_columns(path) -> tuple[list, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    return header, data


def render_slices(path, x, times, exact, predicted, title=""):
    """One panel per time: exact curve and network prediction."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(times), figsize=(3.2 * len(times), 2.8), sharey=True, squeeze=False)
        for ax, t, ue, up in zip(axes[0], times, exact, predicted):
            ax.plot(x, ue, color="0.2", lw=1.6, label="exact")
            ax.plot(x, up, color="tab:red", lw=1.0, ls="--", label="PINN")
            ax.set_title(f"t = {t:g}")
            ax.set_xlabel("x")
        axes[0][0].set_ylabel("u")
        axes[0][0].legend(loc="upper left")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_history(path, history, gamma1, gamma2, title=""):
    """Loss components and tracked constants against the iteration count."""
    it = history.column("iter")
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.0))
        a1.semilogy(it, history.column("loss_evol"), label="evol")
        a1.semilogy(it, history.column("loss_pde"), label="PDE")
        a1.semilogy(it, history.best_envelope(gamma1, gamma2), color="k", lw=0.8, label="best total")
        a1.set_xlabel("iteration")
        a1.set_ylabel("loss")
        a1.legend()
        for name in ("A", "A_tilde", "L", "error_Y"):
            col = history.column(name)
            if np.all(np.isfinite(col)) and np.all(col > 0):
                a2.semilogy(it, col, label=name)
        a2.set_xlabel("iteration")
        a2.legend()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_trajectory(path, x, times, values, exact=None, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        for i, t in enumerate(times):
            line, = ax.plot(x, values[i], lw=1.2, label=f"t = {t:g}")
            if exact is not None:
                ax.plot(x, exact[i], color=line.get_color(), lw=0.8, ls=":")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend()
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
