"""The plotting module renders residual curves and Hölder scatters as static SVG files."""

import logging
from pathlib import Path
import typing as t

import matplotlib


matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .fileio import atomicfile  # noqa: E402
from .fubini import HolderReport  # noqa: E402
from .types import StrPath  # noqa: E402
from .wentzell import ResidualCurve  # noqa: E402


log = logging.getLogger(__name__)

FIGSIZE = (6.4, 4.2)
# Fixed ids and no timestamp so the same data renders to the same bytes.
SVG_RC = {"svg.hashsalt": "iwlab", "svg.fonttype": "none"}
SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig: t.Any, file: StrPath) -> Path:
    path = Path(file)
    try:
        with atomicfile(path, "w", encoding="utf-8") as fp:
            fig.savefig(fp, format="svg", metadata=SVG_METADATA)
    finally:
        plt.close(fig)
    log.debug("Wrote %s", path)
    return path


def plot_residual_curves(
    curves: t.Sequence[ResidualCurve], file: StrPath, *, title: t.Optional[str] = None
) -> Path:
    """Plot the RMS sup residual of each curve against the step on log-log axes, with a reference
    line of slope ½ through each curve's coarsest point."""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        for curve in curves:
            steps = curve.steps
            rms = [entry.rms_sup for entry in curve.entries]
            fit = curve.fit() if len(steps) >= 4 and any(rms) else None
            label = f"{curve.scenario} {curve.identity}"
            if fit is not None and not fit.all_exact:
                label += f" (slope {fit.slope:.2f})"
            shown = [(s, r) for s, r in zip(steps, rms) if r > 0]
            if not shown:
                continue
            xs, ys = zip(*shown)
            ax.plot(xs, ys, marker="o", label=label)
            ax.plot(
                xs, [ys[0] * (x / xs[0]) ** 0.5 for x in xs], linestyle=":", color="grey",
                linewidth=0.8,
            )

        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("Δt")
        ax.set_ylabel("RMS sup residual")
        if title:
            ax.set_title(title)
        if ax.lines:
            ax.legend(fontsize="small")
        fig.tight_layout()
        return _save(fig, file)


def plot_holder_scatter(
    report: HolderReport, file: StrPath, *, title: t.Optional[str] = None
) -> Path:
    """Plot the largest field increment against the separation on log-log axes, with the line of
    the target exponent."""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        shown = [(h, inc) for h, inc in report.scatter if inc > 0]
        if shown:
            hs, incs = zip(*shown)
            ax.plot(hs, incs, marker="o", linestyle="none", label=f"λ̂ = {report.exponent:.3f}")
            ax.plot(
                hs, [incs[0] * (h / hs[0]) ** report.target for h in hs], linestyle=":",
                color="grey", label=f"λ = {report.target:g}",
            )
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.legend(fontsize="small")
        ax.set_xlabel("|x - y|")
        ax.set_ylabel("sup_t |m_t(x) - m_t(y)|")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, file)
