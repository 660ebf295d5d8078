"""Deterministic SVG line plots."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed salt and text-as-text keep the SVG byte-identical between runs
_RC = {"svg.hashsalt": "memsyn", "svg.fonttype": "none", "font.family": "DejaVu Sans"}

Series = tuple[Sequence[float], Sequence[float], str]


def emit_svg(series: Sequence[Series], path, logx: bool = False, xlabel: str = "",
             ylabel: str = "", title: str = "") -> Path:
    """Write one line per ``(x, y, label)`` series with a legend.

    Each series is drawn as a single line whose SVG group id is
    ``series-<k>``. Raises ``ValueError`` on an empty series list.
    """
    if not series:
        raise ValueError("nothing to plot: empty series list")
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        try:
            for k, (x, y, label) in enumerate(series):
                if len(x) != len(y):
                    raise ValueError(f"series {label!r}: x and y lengths differ")
                ax.plot(x, y, marker="o", label=label, gid=f"series-{k}")
            if logx:
                ax.set_xscale("log")
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.grid(True, alpha=0.3)
            ax.legend()
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
