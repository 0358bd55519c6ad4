"""SVG figures: persistence diagrams and two-dimensional validity-domain overlays."""

import math
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .datasets import PointCloud  # noqa: E402
from .hull import FacetSystem, hull_margin  # noqa: E402
from .log import debug  # noqa: E402
from .ocsvm import OneClassSvmModel, decision  # noqa: E402
from .relax import Box, Expr, evaluate_many  # noqa: E402
from .tda import PersistenceDiagram  # noqa: E402

GRID_POINTS = 241

matplotlib.rcParams["svg.hashsalt"] = "validity-domain"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path: str):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    debug(f'Wrote figure "{path}".')


def plot_persistence_diagram(path: str, diagram: PersistenceDiagram, title: str = ""):
    """
    Scatter of (birth, death) per homology dimension, with the diagonal.

    Essential classes are drawn on a dashed line labelled as infinite death.
    """
    finite = [p.death for p in diagram.pairs if p.is_finite] + [p.birth for p in diagram.pairs]
    top = max(finite) if finite else 1.0
    top = top if top > 0 else 1.0
    infinity = 1.1 * top
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot([0.0, infinity], [0.0, infinity], color="0.6", linewidth=0.8)
    ax.axhline(infinity, color="0.6", linestyle="--", linewidth=0.8)
    for dim, marker, color in ((0, "^", "tab:blue"), (1, "o", "tab:orange")):
        pairs = diagram.of_dim(dim)
        if not pairs:
            continue
        births = np.array([p.birth for p in pairs])
        deaths = np.array([p.death if p.is_finite else infinity for p in pairs])
        ax.scatter(births, deaths, s=14, marker=marker, color=color, label=f"H{dim}")
    ax.set_xlim(-0.02 * infinity, 1.05 * infinity)
    ax.set_ylim(-0.02 * infinity, 1.05 * infinity)
    ax.set_xlabel("birth")
    ax.set_ylabel("death")
    ax.text(0.02 * infinity, 1.01 * infinity, "inf", fontsize=8, color="0.4")
    ax.legend(loc="lower right")
    if title:
        ax.set_title(title)
    _save(fig, path)


def _margin_grid(validity: Union[FacetSystem, OneClassSvmModel], X: np.ndarray) -> np.ndarray:
    """Signed membership, positive inside."""
    if isinstance(validity, OneClassSvmModel):
        return decision(validity, X)
    return -hull_margin(validity, X)


def plot_validity_overlay(
    path: str,
    cloud: PointCloud,
    box: Box,
    validity: Optional[Union[FacetSystem, OneClassSvmModel]] = None,
    objective: Optional[Expr] = None,
    x_star=None,
    title: str = "",
):
    """
    Training points, validity boundary and optimum over the objective's contours.

    Parameters
    ----------
    path : str
        SVG destination.
    cloud : PointCloud
        Two-dimensional training points.
    box : Box
        Plotted region.
    validity : FacetSystem or OneClassSvmModel, optional
        Its zero level set is drawn.
    objective : Expr, optional
        Drawn as filled contours.
    x_star : array, optional
        Marked with a star.
    title : str
        Figure title.
    """
    if cloud.dim != 2 or box.dim != 2:
        debug("Skipping the validity overlay: only two-dimensional problems are plotted.")
        return
    xs = np.linspace(box.lo[0], box.hi[0], GRID_POINTS)
    ys = np.linspace(box.lo[1], box.hi[1], GRID_POINTS)
    XX, YY = np.meshgrid(xs, ys)
    grid = np.column_stack([XX.ravel(), YY.ravel()])
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    if objective is not None:
        values = evaluate_many(objective, grid).reshape(XX.shape)
        filled = ax.contourf(XX, YY, values, levels=20, cmap="viridis", alpha=0.8)
        fig.colorbar(filled, ax=ax)
    ax.scatter(cloud.points[:, 0], cloud.points[:, 1], s=4, color="k", alpha=0.6, label="training points")
    if validity is not None:
        margins = _margin_grid(validity, grid).reshape(XX.shape)
        if margins.min() < 0.0 < margins.max():
            ax.contour(XX, YY, margins, levels=[0.0], colors="tab:red", linewidths=1.5)
    if x_star is not None and all(math.isfinite(v) for v in x_star):
        ax.scatter([x_star[0]], [x_star[1]], s=120, marker="*", color="tab:red", edgecolors="w", label="optimum")
    ax.set_xlim(box.lo[0], box.hi[0])
    ax.set_ylim(box.lo[1], box.hi[1])
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)
