"""Figure rendering for command outputs.

Every CLI command drops PNG figures next to its delimited output so a run
directory is self-describing: spectra, scan trends, loss curves, solution
overlays. All rendering goes through the Agg backend; nothing here opens a
window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_erank_scan",
    "save_spectra",
    "save_toy_figures",
    "save_train_figures",
    "save_solution_1d",
    "save_solution_2d",
    "save_theorem_gaps",
]

_DPI = 130


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_erank_scan(axis: str, values, eranks, path):
    """erank against the scanned quantity, log2-log2 like the scan figures."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(values, eranks, "o-", color="tab:blue")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel({"mp": "number of PoU cells $M_p$",
                   "rm": "initialization range $R_m$",
                   "m": "hidden neurons $M$"}[axis])
    ax.set_ylabel("erank(G)")
    ax.grid(True, which="both", alpha=0.3)
    _finish(fig, path)


def save_spectra(labeled_eigs, path, xlabel="index", title=None):
    """Eigenvalue distributions on a log scale, one curve per label."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, eig in labeled_eigs:
        eig = np.asarray(eig)
        floor = max(eig.max(), 1e-300) * 1e-20
        ax.semilogy(np.arange(1, eig.size + 1), np.maximum(eig, floor), label=str(label))
    ax.set_xlabel(xlabel)
    ax.set_ylabel("eigenvalue")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_toy_figures(result, out_dir):
    """Loss curve, per-mode error curves and the spectrum for a toy run."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(result.losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"erank = {result.erank:.2f}")
    ax.grid(True, alpha=0.3)
    _finish(fig, out_dir / "loss.png")

    fig, ax = plt.subplots(figsize=(5.5, 4))
    n = result.mode_sq.shape[1]
    for i in range(n):
        ax.semilogy(result.mode_sq[:, i], color=plt.cm.viridis(i / max(n - 1, 1)), lw=0.7)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mode squared error")
    ax.grid(True, alpha=0.3)
    _finish(fig, out_dir / "modes.png")

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(np.arange(1, result.lambdas.size + 1), result.lambdas, "o", ms=3)
    ax.set_xlabel("index")
    ax.set_ylabel("$\\lambda_i$")
    ax.set_title(f"erank = {result.erank:.2f}")
    ax.grid(True, alpha=0.3)
    _finish(fig, out_dir / "spectrum.png")


def save_train_figures(record, out_dir):
    """Loss curve with metric markers plus initial/final kernel spectra."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(record.losses, lw=0.9)
    sched = sorted(record.metrics)
    ax.semilogy(sched, [record.losses[e] for e in sched], "o", color="tab:orange",
                label="kernel snapshots")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _finish(fig, out_dir / "loss.png")

    labeled = [
        (f"epoch {snap.epoch} (erank {snap.erank:.2f})", snap.eigenvalues)
        for snap in record.snapshots
    ]
    save_spectra(labeled, out_dir / "kernel_spectra.png", title="kernel spectrum")


def save_solution_1d(x, u_pred, u_exact, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(x, u_exact, "k-", lw=1.2, label="exact")
    axes[0].plot(x, u_pred, "--", color="tab:red", lw=1.0, label="prediction")
    axes[0].set_xlabel("x")
    axes[0].legend(fontsize=8)
    axes[0].grid(True, alpha=0.3)
    axes[1].semilogy(x, np.abs(u_pred - u_exact) + 1e-300)
    axes[1].set_xlabel("x")
    axes[1].set_ylabel("|error|")
    axes[1].grid(True, alpha=0.3)
    _finish(fig, path)


def save_solution_2d(x, u_pred, u_exact, path):
    n = int(round(np.sqrt(x.shape[0])))
    xs = x[:, 0].reshape(n, n)
    ys = x[:, 1].reshape(n, n)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for ax, field, title in (
        (axes[0], u_exact, "exact"),
        (axes[1], u_pred, "prediction"),
        (axes[2], np.abs(u_pred - u_exact), "|error|"),
    ):
        im = ax.pcolormesh(xs, ys, field.reshape(n, n), shading="auto")
        ax.set_title(title, fontsize=9)
        fig.colorbar(im, ax=ax)
    _finish(fig, path)


def save_theorem_gaps(gaps, bound, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(np.arange(len(gaps)), gaps, "o", label="spectral gap")
    ax.axhline(bound, color="tab:red", ls="--", label="bound")
    ax.set_xlabel("trial")
    ax.set_ylabel(r"$(\sum_j |\lambda_j^L - \lambda_j^R|^2)^{1/2}$")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)
