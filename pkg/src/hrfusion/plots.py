"""Optional PNG figures rendered next to the CSV outputs. The CSV files stay authoritative."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import ExperimentSpec, IterationTrace, MseTable, SpectraDump  # noqa: E402


def plot_mse(table: MseTable, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    algos = list(dict.fromkeys(r.algorithm for r in table.rows))
    for name in algos:
        rows = [r for r in table.rows if r.algorithm == name]
        ax.semilogy([r.snr_db for r in rows], [r.mse_rad2 for r in rows], "o-", label=name)
    crb_rows = [r for r in table.rows if r.algorithm == algos[0] and np.isfinite(r.crb_rad2)]
    if crb_rows:
        ax.semilogy([r.snr_db for r in crb_rows], [r.crb_rad2 for r in crb_rows], "k--", label="CRB")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("MSE (rad$^2$)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spectra(dump: SpectraDump, path: str) -> None:
    deg = np.rad2deg(dump.thetas)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    top.plot(deg, dump.db(dump.music), label="naive MUSIC")
    top.plot(deg, dump.db(dump.h), label="$h^{-1}$")
    top.set_ylabel("dB")
    top.legend()
    for k, g in enumerate(dump.g, start=1):
        bottom.plot(deg, dump.db(g), lw=0.8, label=f"$g_{{{k}}}^{{-1}}$")
    for u in np.rad2deg(dump.user_angles):
        bottom.axvline(u, color="gray", ls=":", lw=0.6)
    bottom.set_xlabel("angle (deg)")
    bottom.set_ylabel("dB")
    for ax in (top, bottom):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trace(trace: IterationTrace, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, arr in trace.targets.items():
        its = np.arange(1, len(arr) + 1)
        for m in range(arr.shape[1]):
            ax.plot(its, arr[:, m], marker=".", label=f"{name} target {m}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean estimate (deg)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_all(spec: ExperimentSpec, table: MseTable, spectra=None, trace=None) -> list[str]:
    out = spec.output_dir
    os.makedirs(out, exist_ok=True)
    paths = [os.path.join(out, "results.png")]
    plot_mse(table, paths[0])
    if spectra is not None:
        paths.append(os.path.join(out, "spectra.png"))
        plot_spectra(spectra, paths[-1])
    if trace is not None:
        paths.append(os.path.join(out, "iteration_trace.png"))
        plot_trace(trace, paths[-1])
    return paths
