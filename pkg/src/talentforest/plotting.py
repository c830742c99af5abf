"""Figures written next to the tabular reports.

Everything renders through an explicit ``Figure`` (no pyplot state) and is
saved with a fixed SVG hash salt and no date stamp, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import io

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .importance import ImportanceReport
from .metrics import EvaluationReport, roc_curve

STYLE = {
    "svg.hashsalt": "talentforest",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.linestyle": ":",
    "grid.alpha": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _svg(fig: Figure) -> str:
    buf = io.StringIO()
    with mpl.rc_context(STYLE):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def importance_dotplot(report: ImportanceReport) -> str:
    """Two-panel dot plot (accuracy and Gini decrease) as SVG text.

    Features run down the vertical axis from most to least important,
    each panel sorted by its own measure.
    """
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(8, 0.45 * len(report.names) + 1.4))
        panels = (("Mean decrease in accuracy", report.mda),
                  ("Mean decrease in Gini", report.mdg))
        for n, (title, values) in enumerate(panels):
            ax = fig.add_subplot(1, 2, n + 1)
            order = sorted(range(len(values)), key=lambda i: (-values[i], i))
            ypos = np.arange(len(order))[::-1]
            ax.scatter([values[i] for i in order], ypos, s=28, facecolors="none",
                       edgecolors="k", zorder=3)
            ax.set_yticks(ypos)
            ax.set_yticklabels([report.names[i] for i in order])
            ax.set_title(title)
            ax.set_xlabel(title)
        fig.tight_layout()
    return _svg(fig)


def roc_plot(report: EvaluationReport, truth) -> str:
    """One-vs-rest ROC curve per class from pooled held-out vote fractions."""
    truth = np.asarray(truth)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(5, 5))
        ax = fig.add_subplot(1, 1, 1)
        ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
        for c, metrics in enumerate(report.classes):
            if metrics.auc is None:
                continue
            fpr, tpr = roc_curve(report.vote_fractions[:, c], truth == c)
            ax.plot(fpr, tpr, lw=1.2, label=f"{metrics.label} (AUC {metrics.auc:.3f})")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
    return _svg(fig)
