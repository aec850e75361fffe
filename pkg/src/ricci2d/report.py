"""Figure rendering: every CLI command saves PNGs next to its CSVs.

All plots are non-interactive (Agg) and deterministic given the data.
Log-scale panels drop nonpositive values instead of clipping them, so an
exactly flat run renders as an empty decay panel rather than a lie.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .analysis import DecayReport, DiagnosticSeries  # noqa: E402
from .geometry import ApertureReport  # noqa: E402
from .grid import ScalarField  # noqa: E402


def _loglog_positive(ax, x, y, label):
    mask = y > 0.0
    if np.any(mask):
        ax.loglog(x[mask], y[mask], label=label)


def save_series_figure(series: DiagnosticSeries, path) -> None:
    """Four panels: curvature range, decay quantities, F/G/J, area and
    companion sup."""
    t = series.t
    fig, axes = plt.subplots(2, 2, figsize=(11, 8))

    ax = axes[0, 0]
    ax.plot(t, series.column("sup_R"), label="sup R")
    ax.plot(t, series.column("inf_R"), label="inf R")
    ax.set_xlabel("t")
    ax.set_title("curvature range")
    ax.legend()

    ax = axes[0, 1]
    shifted = 1.0 + t
    for name in ("sup_gradf2", "sup_H", "sup_gradR2", "sup_hess2R"):
        _loglog_positive(ax, shifted, series.column(name), name)
    ax.set_xlabel("1 + t")
    ax.set_title("decay quantities")
    if ax.lines:
        ax.legend()

    ax = axes[1, 0]
    for name in ("sup_F", "sup_G", "sup_J"):
        ax.plot(t, series.column(name), label=name)
    ax.set_xlabel("t")
    ax.set_title("monitored combinations")
    ax.legend()

    ax = axes[1, 1]
    ax.plot(t, series.column("area"), label="area")
    sup_w = series.column("sup_w")
    if np.any(sup_w > 0.0):
        ax.plot(t, sup_w, label="sup |w|")
    ax.set_xlabel("t")
    ax.set_title("area / heat companion")
    ax.legend()

    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_decay_figure(series: DiagnosticSeries, reports, path) -> None:
    """Each quantity against its fitted envelope C/(1+t)^p, log-log."""
    t = series.t
    shifted = 1.0 + t
    fig, ax = plt.subplots(figsize=(7, 5))
    for rep in reports:
        q = series.column(rep.quantity)
        _loglog_positive(ax, shifted, q, f"{rep.quantity} (p={rep.p:g})")
        if rep.envelope_C > 0.0:
            ax.loglog(shifted, rep.envelope_C / shifted ** rep.p,
                      linestyle="--", linewidth=0.8)
    ax.set_xlabel("1 + t")
    ax.set_title("decay envelopes (dashed: C/(1+t)^p)")
    if ax.lines:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_aperture_figure(report: ApertureReport, path) -> None:
    """L(boundary of B_r) against 2 pi r with the fitted slope and the
    flat reference."""
    x = 2.0 * math.pi * np.asarray(report.radii)
    y = np.asarray(report.lengths)
    coeffs = np.polyfit(x, y, 1)
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(x, y, "o", label="measured")
    xs = np.linspace(0.0, x.max() * 1.05, 50)
    ax.plot(xs, np.polyval(coeffs, xs), "-",
            label=f"fit, slope = {report.estimate:.4f}")
    ax.plot(xs, xs, ":", label="flat (slope 1)")
    ax.set_xlabel("2 pi r (geodesic)")
    ax.set_ylabel("circle length L")
    ax.set_title("aperture fit")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_conjecture_figure(times, k_fits, residuals, path) -> None:
    times = np.asarray(times)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(times, np.asarray(k_fits))
    ax1.set_xlabel("t")
    ax1.set_ylabel("fitted k")
    ax1.set_title("profile parameter trajectory")
    ax2.plot(times, np.asarray(residuals))
    ax2.set_xlabel("t")
    ax2.set_ylabel("sup |v - model|")
    ax2.set_title("model residual")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_field_figure(field: ScalarField, title: str, path) -> None:
    spec = field.spec
    extent = (spec.x0, spec.x0 + (spec.nx - 1) * spec.h,
              spec.y0, spec.y0 + (spec.ny - 1) * spec.h)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(field.data, origin="lower", extent=extent,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_residual_figure(grid_ns, residuals, path) -> None:
    """PDE residual against node count, log-log, with a second-order guide."""
    ns = np.asarray(grid_ns, dtype=float)
    res = np.asarray(residuals, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 5))
    mask = res > 0.0
    if np.any(mask):
        ax.loglog(ns[mask], res[mask], "o-", label="residual")
        guide = res[mask][0] * (ns[mask][0] / ns[mask]) ** 2
        ax.loglog(ns[mask], guide, ":", label="second order")
        ax.legend()
    ax.set_xlabel("nodes per side")
    ax.set_ylabel("sup residual")
    ax.set_title("PDE residual convergence")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
