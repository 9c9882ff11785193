"""Render training and evaluation figures next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _series(rows, attr):
    xs, ys = [], []
    for r in rows:
        value = getattr(r, attr)
        if value is not None:
            xs.append(r.epoch)
            ys.append(value)
    return xs, ys


def render_run_figures(rows, outdir) -> list:
    """Write label-quality, loss, and retrieval curves as PNG files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for attr, label in (("ari_v", "visible ARI"), ("ari_r", "infrared ARI"),
                        ("match_acc", "match accuracy")):
        xs, ys = _series(rows, attr)
        if xs:
            ax.plot(xs, ys, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("score")
    ax.set_title("Pseudo-label quality per epoch")
    ax.legend()
    path = outdir / "label_quality.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for attr, label in (("l_ms", "L_MS"), ("l_mi", "L_MI"),
                        ("l_nrl", "L_NRL"), ("l_total", "L_total")):
        xs, ys = _series(rows, attr)
        if xs:
            ax.plot(xs, ys, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Training losses per epoch")
    ax.legend()
    path = outdir / "losses.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for attr, label in (("rank1", "Rank-1"), ("map_score", "mAP")):
        xs, ys = _series(rows, attr)
        if xs:
            ax.plot(xs, ys, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("score")
    ax.set_title("Cross-modality retrieval per epoch")
    ax.legend()
    path = outdir / "retrieval.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def render_ablation_figure(results, outdir) -> Path:
    """Grouped bar chart of final Rank-1/mAP per ablation row."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = [entry for entry, _, _ in results]
    rank1 = [final.rank1 or 0.0 for _, _, final in results]
    maps = [final.map_score or 0.0 for _, _, final in results]
    x = range(len(names))
    fig, ax = plt.subplots(figsize=(max(6, len(names) * 1.2), 4))
    ax.bar([i - 0.2 for i in x], rank1, width=0.4, label="Rank-1")
    ax.bar([i + 0.2 for i in x], maps, width=0.4, label="mAP")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("score")
    ax.set_title("Ablation grid, final-epoch retrieval")
    ax.legend()
    path = outdir / "ablation.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_cmc_figure(rank_k: dict, outdir) -> Path:
    """CMC curve from a rank->fraction mapping."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ks = sorted(rank_k)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [rank_k[k] for k in ks], marker="o")
    ax.set_xlabel("rank k")
    ax.set_ylabel("matching rate")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Cumulative matching characteristic")
    path = outdir / "cmc.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
