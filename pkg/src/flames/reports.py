"""Report rendering: each verification, benchmark, recall, and run report is
written as delimited text (CSV/JSON) with a matplotlib figure saved next to
it.  Figures are byte-stable under a fixed seed (Agg backend, pinned
metadata)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .analysis import BoundReport
from .model import Diagnostics

_SAVEFIG = {"dpi": 110, "metadata": {"Software": "flames"}}


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def render_norm_figure(report: BoundReport, path: Path) -> Path:
    trace = report.details.get("sample_trace", {})
    fig, ax = plt.subplots(figsize=(6, 4))
    if trace.get("t"):
        ax.plot(trace["t"], trace["measured"], lw=1.2, label="state norm")
        ax.plot(trace["t"], trace["envelope"], "k--", lw=1.2, label="envelope")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("norm")
    ax.set_title(
        f"state-norm envelope: {report.trials} trials, "
        f"{report.violations} violations"
    )
    ax.legend()
    return _finish(fig, path)


def render_taylor_figure(report: BoundReport, path: Path) -> Path:
    curves = report.details.get("curves", [])
    fig, ax = plt.subplots(figsize=(6, 4))
    norms = sorted({c["norm"] for c in curves})
    for norm in norms:
        rows = [c for c in curves if c["norm"] == norm]
        orders = [c["order"] for c in rows]
        ax.semilogy(
            orders, [c["bound"] for c in rows], "--", label=f"bound, |X|={norm}"
        )
        ax.semilogy(orders, [max(c["worst_measured"], 1e-18) for c in rows], "o-",
                    ms=3, label=f"worst measured, |X|={norm}")
    ax.set_xlabel("series order n")
    ax.set_ylabel("spectral-norm error")
    ax.set_title(
        f"series truncation error vs bound ({report.violations} violations)"
    )
    ax.legend(fontsize=7)
    return _finish(fig, path)


def render_lyapunov_figure(report: BoundReport, path: Path) -> Path:
    residuals = report.details.get("relative_residuals", [])
    fig, ax = plt.subplots(figsize=(6, 4))
    if residuals:
        ax.semilogy(range(len(residuals)), residuals, ".", ms=3)
    ax.axhline(1e-8, color="k", ls="--", lw=1, label="1e-8 limit")
    ax.set_xlabel("trial")
    ax.set_ylabel("relative residual")
    ax.set_title(f"Lyapunov solve residuals ({report.violations} violations)")
    ax.legend()
    return _finish(fig, path)


def render_ultimate_figure(report: BoundReport, path: Path) -> Path:
    trace = report.details.get("sample_trace", {})
    fig, ax = plt.subplots(figsize=(6, 4))
    if trace.get("t"):
        ax.plot(trace["t"], trace["radius"], lw=1.2, label="||x(t)||")
        if trace.get("radius_sign"):
            ax.axhline(
                trace["radius_sign"], color="k", ls="--", lw=1, label="dissipation radius"
            )
        if trace.get("radius_invariant"):
            ax.axhline(
                trace["radius_invariant"], color="r", ls=":", lw=1, label="invariant ball"
            )
    ax.set_xlabel("time [s]")
    ax.set_ylabel("state radius")
    ax.set_title(
        f"ultimate bound: {report.violations} sign violations, "
        f"{report.details.get('exits_after_entry', 0)} exits after entry"
    )
    ax.legend()
    return _finish(fig, path)


def render_bench_figure(rows: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ops = sorted({r["op"] for r in rows})
    for op in ops:
        pts = [(r["N"], r["median_ns"]) for r in rows if r["op"] == op]
        pts.sort()
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=op)
    ax.set_xlabel("state dimension N")
    ax.set_ylabel("median time per matvec [ns]")
    ax.set_title("matvec cost scaling")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _finish(fig, path)


def render_recall_figure(rows: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    delays = [r["delay"] for r in rows]
    for key, style in (
        ("acc_kernel", "o-"),
        ("acc_lif", "s-"),
        ("control_kernel", "o:"),
        ("control_lif", "s:"),
    ):
        if rows and key in rows[0]:
            ax.plot(delays, [r[key] for r in rows], style, label=key)
    ax.axhline(0.5, color="k", lw=0.8, alpha=0.5)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("cue-to-readout delay [ticks]")
    ax.set_ylabel("test accuracy")
    ax.set_title("delayed recall: adaptive kernel vs single-tau integrator")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def render_diagnostics_figure(diag: Diagnostics, path: Path) -> Path:
    n = max(1, len(diag.traces))
    fig, axes = plt.subplots(n, 1, figsize=(6, 2.6 * n), squeeze=False)
    for ax, trace in zip(axes[:, 0], diag.traces):
        if trace.times:
            ax.plot(trace.times, trace.state_norms, lw=1.0, label="state norm")
            bounds = np.asarray(trace.bounds)
            if np.all(np.isfinite(bounds)):
                ax.plot(trace.times, bounds, "k--", lw=1.0, label="envelope")
        ax.set_ylabel(f"block {trace.block}")
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel("time [s]")
    fig.suptitle(
        f"per-block state norms ({diag.mode} mode"
        + (", decay disabled" if diag.f_identity else "")
        + ")"
    )
    return _finish(fig, path)


def render_report_figure(report: BoundReport, path: Path) -> Path:
    renderer = {
        "norm_bound": render_norm_figure,
        "taylor_bound": render_taylor_figure,
        "lyapunov": render_lyapunov_figure,
        "ultimate_bound": render_ultimate_figure,
    }.get(report.name)
    if renderer is None:
        raise ValueError(f"no figure renderer for report {report.name!r}")
    return renderer(report, path)
