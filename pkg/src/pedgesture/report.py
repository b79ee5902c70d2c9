"""Derived views of analysis reports: a comparison table and embedding scatter plots."""

from __future__ import annotations

import io
import json

import numpy as np

from .clustering import ClassGaussian, Embedding2D, ellipse_from_covariance
from .labels import GestureClass

CLASS_COLORS = {
    GestureClass.STOP: "#d62728",
    GestureClass.GO: "#2ca02c",
    GestureClass.THANK_GREET: "#1f77b4",
    GestureClass.NO_GESTURE: "#7f7f7f",
}
TABLE_TOP = 5


def comparison_table(reports) -> str:
    """Markdown table, one row per report, in the order given."""
    lines = [
        "| subset | accuracy | silhouette | no_gesture recall | top features |",
        "|---|---|---|---|---|",
    ]
    for r in reports:
        top = ", ".join(name for name, _ in r.top_features[:TABLE_TOP])
        lines.append(
            f"| {r.subset} | {r.accuracy:.4f} | {r.silhouette:.4f} | "
            f"{r.recall(GestureClass.NO_GESTURE):.4f} | {top} |"
        )
    return "\n".join(lines) + "\n"


def comparison_document(reports) -> dict:
    return {
        "schema": "pedgesture.comparison",
        "schema_version": 1,
        "manifest_hash": reports[0].manifest_hash if reports else "",
        "rows": [
            {
                "subset": r.subset,
                "accuracy": r.accuracy,
                "silhouette": r.silhouette,
                "top_features": [name for name, _ in r.top_features[:TABLE_TOP]],
                "seeds": r.seeds,
            }
            for r in reports
        ],
    }


def embedding_from_csv(text: str) -> Embedding2D:
    ids, pts, labels = [], [], []
    # leading '#' lines carry provenance
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    if not lines or lines[0] != "id,x,y,label":
        raise ValueError("embedding file must start with the header id,x,y,label")
    for line in lines[1:]:
        i, x, y, lab = line.split(",")
        ids.append(i)
        pts.append((float(x), float(y)))
        labels.append(int(GestureClass.parse(lab)))
    return Embedding2D(np.asarray(pts, dtype=float).reshape(-1, 2), ids, np.asarray(labels))


def gaussians_from_json(text: str) -> list[ClassGaussian]:
    doc = json.loads(text)
    out = []
    for g in doc["classes"]:
        cov = np.asarray(g["covariance"], dtype=float)
        axes, angle = ellipse_from_covariance(cov)
        out.append(ClassGaussian(GestureClass.parse(g["label"]), np.asarray(g["mean"], dtype=float),
                                 cov, axes, angle, int(g["count"])))
    return out


def scatter_svg(embedding: Embedding2D, gaussians, title: str = "") -> tuple[str, list]:
    """Scatter of the embedding with one 2-sigma ellipse per class.

    Returns the SVG text and the ellipse patches, in ``gaussians`` order. The
    output is byte-stable: no timestamp and a fixed id salt.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Ellipse

    with matplotlib.rc_context({"svg.hashsalt": "pedgesture", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 5))
        labels = np.asarray(embedding.labels)
        for cls in GestureClass:
            sel = labels == int(cls)
            if sel.any():
                ax.scatter(embedding.points[sel, 0], embedding.points[sel, 1], s=12,
                           color=CLASS_COLORS[cls], label=cls.display, alpha=0.8)
        patches = []
        for g in gaussians:
            e = Ellipse(g.center, width=2 * g.semi_axes[0], height=2 * g.semi_axes[1],
                        angle=g.angle_deg, fill=False, lw=1.5, color=CLASS_COLORS[g.label],
                        gid=f"ellipse-{g.label.slug}")
            ax.add_patch(e)
            patches.append(e)
        ax.set_title(title)
        ax.set_xlabel("t-SNE 1")
        ax.set_ylabel("t-SNE 2")
        ax.legend(loc="best", fontsize=8)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue(), patches
