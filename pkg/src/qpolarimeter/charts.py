"""Density-matrix bar charts: PNG via matplotlib and an ASCII fallback.

Both renderers show Re(rho) and Im(rho) as 4x4 bar grids over the
{HH, HV, VH, VV} axes with a fixed height scale of +/-0.5, so frames of
different states are visually comparable.
"""

from __future__ import annotations

import numpy as np

from .quantum import DensityMatrix

__all__ = ["BASIS_TICKS", "ascii_density", "save_density_chart"]

BASIS_TICKS = ("HH", "HV", "VH", "VV")
_ZLIM = 0.5


def ascii_density(rho: DensityMatrix, width: int = 7) -> str:
    """Two labelled 4x4 grids of signed matrix entries, fixed-point."""
    m = rho.matrix
    blocks = []
    for name, part in (("Re(rho)", m.real), ("Im(rho)", m.imag)):
        lines = [name, "      " + "".join(t.rjust(width) for t in BASIS_TICKS)]
        for i, row_label in enumerate(BASIS_TICKS):
            cells = "".join(f"{part[i, j]:+.3f}".rjust(width) for j in range(4))
            lines.append(f"  {row_label:>3} {cells}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def save_density_chart(rho: DensityMatrix, path: str, title: str | None = None) -> None:
    """Write a two-panel 3D bar chart (Re, Im) to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    m = rho.matrix
    xs, ys = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    xs, ys = xs.reshape(-1), ys.reshape(-1)
    fig = plt.figure(figsize=(9, 4))
    for k, (name, part) in enumerate((("Re(rho)", m.real), ("Im(rho)", m.imag)), start=1):
        ax = fig.add_subplot(1, 2, k, projection="3d")
        heights = part.reshape(-1)
        colors = np.where(heights >= 0, "#3465a4", "#cc3344")
        ax.bar3d(xs - 0.35, ys - 0.35, np.zeros_like(heights), 0.7, 0.7, heights, color=colors, shade=True)
        ax.set_zlim(-_ZLIM, _ZLIM)
        ax.set_xticks(range(4), BASIS_TICKS)
        ax.set_yticks(range(4), BASIS_TICKS)
        ax.set_title(name)
    if title:
        fig.suptitle(title)
    fig.subplots_adjust(left=0.02, right=0.98, wspace=0.1)
    fig.savefig(path, dpi=120)
    plt.close(fig)
