"""Figure rendering for the CLI report path.

Every command can drop PNG summaries next to its series and snapshot files;
rendering is file-only (Agg backend), no interactive windows.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .epspath import PathReport
from .grid import Field
from .heatflow import TrajectoryRecord
from .monotone import ChainReport

__all__ = ["render_flow", "render_chain", "render_path", "render_verify"]


def _plot_field(ax, field: Field, label: str | None = None) -> None:
    g = field.grid
    if g.dim == 1:
        ax.plot(g.coordinates(0), field.values, lw=1.2, label=label)
        ax.set_xlabel("x")
    else:
        im = ax.imshow(
            field.mesh(),
            origin="lower",
            extent=(0, g.axis_length[0], 0, g.axis_length[1]),
            aspect="auto",
        )
        ax.figure.colorbar(im, ax=ax, shrink=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel("y")


def render_flow(outdir: str | os.PathLike, record: TrajectoryRecord, final_u: Field) -> list[Path]:
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    t = record.column("t")

    ax = axes[0, 0]
    ax.semilogy(t, np.maximum(record.column("residual_linf"), 1e-300), label="residual $L^\\infty$")
    dudt = record.column("dudt_l2")
    mask = np.isfinite(dudt)
    ax.semilogy(t[mask], np.maximum(dudt[mask], 1e-300), label="$\\|u_t\\|_{L^2}$")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("steady-state detection", fontsize=9)

    ax = axes[0, 1]
    energy = record.column("energy")
    if np.all(np.isfinite(energy)):
        ax.plot(t, energy)
        ax.set_title("energy", fontsize=9)
    else:
        ax.set_visible(False)
    ax.set_xlabel("t")

    ax = axes[1, 0]
    ax.plot(t, record.column("min_u"), label="min u")
    ax.plot(t, record.column("max_u"), label="max u")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("range of u", fontsize=9)

    ax = axes[1, 1]
    _plot_field(ax, final_u)
    ax.set_title("final state", fontsize=9)

    fig.tight_layout()
    path = Path(outdir) / "fig_flow.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]


def render_chain(outdir: str | os.PathLike, chain: ChainReport) -> list[Path]:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    gaps = np.array(chain.gap_history)
    ax1.semilogy(np.arange(gaps.size), np.maximum(gaps, 1e-300), marker="o", ms=3)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("sup gap")
    ax1.set_title("chain gap history", fontsize=9)

    last = chain.sub_final.n_steps
    _plot_field(ax2, chain.sub_final.slice(last), label="sub chain")
    if chain.sub_final.grid.dim == 1:
        _plot_field(ax2, chain.super_final.slice(last), label="super chain")
        ax2.legend(fontsize=8)
    ax2.set_title("final iterates at t = T", fontsize=9)

    fig.tight_layout()
    path = Path(outdir) / "fig_chain.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]


def render_path(outdir: str | os.PathLike, path_report: PathReport) -> list[Path]:
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    eps = np.array(path_report.eps_values)

    ax = axes[0]
    if path_report.gaps:
        ax.loglog(eps[: len(path_report.gaps)], path_report.gaps, marker="o", ms=3)
    ax.set_xlabel("eps")
    ax.set_ylabel("$L^2$ gap to next")
    ax.set_title("consecutive gaps", fontsize=9)

    ax = axes[1]
    triples = np.array([b.astuple() for b in path_report.bounds])
    if triples.size:
        ax.semilogx(eps[: len(path_report.bounds)], triples[:, 0], marker="o", ms=3, label="$\\int u^2$")
        ax.semilogx(eps[: len(path_report.bounds)], triples[:, 1], marker="s", ms=3, label="$\\int |\\nabla u|^2$")
        ax.semilogx(eps[: len(path_report.bounds)], triples[:, 2], marker="^", ms=3, label="dissipation")
        ax.legend(fontsize=8)
    ax.set_xlabel("eps")
    ax.set_title("uniform-bound monitor", fontsize=9)

    ax = axes[2]
    if path_report.limit_field is not None:
        _plot_field(ax, path_report.limit_field)
    ax.set_title("limit candidate", fontsize=9)

    fig.tight_layout()
    out = Path(outdir) / "fig_epspath.png"
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return [out]


def render_verify(
    outdir: str | os.PathLike, hs: np.ndarray, errors: np.ndarray, observed_order: float
) -> list[Path]:
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    ax.loglog(hs, errors, marker="o", ms=4, label="measured $L^\\infty$ error")
    ref = errors[0] * (hs / hs[0]) ** 2
    ax.loglog(hs, ref, "--", lw=1, label="order-2 reference")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(f"manufactured solution, observed order {observed_order:.2f}", fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(outdir) / "fig_mms.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]
