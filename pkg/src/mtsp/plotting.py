"""Figure rendering for run reports.

Everything draws through the Agg backend into files, so reports work on
headless machines.  The fitness figure follows the best-so-far convention
of the series rows: g never decreases, h and f may oscillate.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import colormaps
from matplotlib.patches import Rectangle

from .evolution import SeriesRow

SEED_MARK = -1  # cell label used for seed tiles in object figures


def save_fitness_figure(rows: list[SeriesRow], path: str) -> None:
    """Three stacked panels: best-so-far g, h and f against the generation."""
    if not rows:
        raise ValueError("no series rows to plot")
    gens = [r.generation for r in rows]
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for ax, name, series in zip(
        axes,
        ("g", "h", "f"),
        ([r.g for r in rows], [r.h for r in rows], [r.f for r in rows]),
    ):
        ax.plot(gens, series, lw=1.2)
        ax.set_ylabel(name)
        ax.set_ylim(-0.05, 1.05)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("generation")
    axes[0].set_title("fitness components of the best individual so far")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def object_cell_types(outcome) -> dict[tuple[int, ...], int]:
    """Map each cell of the final object to its genome type, SEED_MARK for
    seed cells.  Orientation is dropped; the figure colors by type.

    Trace steps carry lattice (wrapped) positions while outcome.cells are
    unwrapped, so placements are unwrapped here step by step: each placed
    cell touches an earlier one, which fixes its absolute coordinates even
    when growth crossed the periodic boundary."""
    extent = outcome.trace.extent
    dims = len(outcome.cells[0])
    center = (extent // 2,) * dims
    deltas = [tuple(sgn if k == ax else 0 for k in range(dims))
              for ax in range(dims) for sgn in (1, -1)]
    unwrapped: dict[tuple[int, ...], tuple[int, ...]] = {}
    types: dict[tuple[int, ...], int] = {}
    for off, _ in outcome.seed_final.cells:
        absolute = tuple(c + o for c, o in zip(center, off))
        unwrapped[tuple(v % extent for v in absolute)] = absolute
        types[absolute] = SEED_MARK
    for s in outcome.trace.steps:
        for dl in deltas:
            near = tuple((p - d) % extent for p, d in zip(s.pos, dl))
            if near in unwrapped:
                cell = tuple(u + d for u, d in zip(unwrapped[near], dl))
                break
        else:
            cell = s.pos  # unreachable for accretion traces; keep total
        unwrapped[s.pos] = cell
        types[cell] = s.type_idx
    return types


def _type_colors(n_types: int):
    cmap = colormaps["tab20"]
    return [cmap(i % 20) for i in range(max(n_types, 1))]


def save_object_figure(cell_types: dict[tuple[int, ...], int], path: str,
                       title: str = "final object") -> None:
    """Render the assembled object colored by tile type.

    2D cells become unit squares; 3D cells are drawn as voxels.  Seed cells
    (SEED_MARK) are black.
    """
    if not cell_types:
        raise ValueError("empty object")
    dims = len(next(iter(cell_types)))
    n_types = max((t for t in cell_types.values() if t >= 0), default=0) + 1
    colors = _type_colors(n_types)

    if dims == 2:
        fig, ax = plt.subplots(figsize=(6, 6))
        for (x, y), t in cell_types.items():
            face = "black" if t == SEED_MARK else colors[t]
            ax.add_patch(Rectangle((x, y), 1, 1, facecolor=face,
                                   edgecolor="white", lw=0.8))
        xs = [c[0] for c in cell_types]
        ys = [c[1] for c in cell_types]
        ax.set_xlim(min(xs) - 1, max(xs) + 2)
        ax.set_ylim(min(ys) - 1, max(ys) + 2)
        ax.set_aspect("equal")
        ax.set_title(title)
    else:
        import numpy as np

        xs = [c[0] for c in cell_types]
        ys = [c[1] for c in cell_types]
        zs = [c[2] for c in cell_types]
        lo = (min(xs), min(ys), min(zs))
        span = tuple(max(v) - lo[k] + 1 for k, v in enumerate((xs, ys, zs)))
        filled = np.zeros(span, dtype=bool)
        face = np.zeros(span + (4,))
        for (x, y, z), t in cell_types.items():
            i = (x - lo[0], y - lo[1], z - lo[2])
            filled[i] = True
            face[i] = (0, 0, 0, 1) if t == SEED_MARK else colors[t]
        fig = plt.figure(figsize=(7, 7))
        ax = fig.add_subplot(projection="3d")
        ax.voxels(filled, facecolors=face, edgecolor="white", linewidth=0.3)
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
