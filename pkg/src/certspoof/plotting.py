"""Report figures: metric curves over budgets and image panels.

Rendering is deterministic for a fixed matplotlib version: the Agg
backend, fixed figure sizes and no timestamps, so golden-file comparisons
of emitted PNGs are byte-stable.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import MetricsSummary

__all__ = ["plot_metric_vs_epsilon", "plot_radius_vs_epsilon", "plot_attack_panels"]

_STYLES = {
    "ghostcert": dict(color="#1f77b4", marker="o"),
    "shadow_bounded": dict(color="#2ca02c", marker="s"),
    "shadow": dict(color="#d62728",),
}


def _grouped(summaries: list[MetricsSummary]) -> dict[str, list[MetricsSummary]]:
    groups: dict[str, list[MetricsSummary]] = {}
    for s in summaries:
        groups.setdefault(s.attack_kind, []).append(s)
    for group in groups.values():
        group.sort(key=lambda s: (s.eps_reference is None, s.eps_reference or 0.0))
    return groups


def _save(fig, path) -> None:
    fig.savefig(path, dpi=120, metadata={"Software": "certspoof"})
    plt.close(fig)


def plot_metric_vs_epsilon(summaries: list[MetricsSummary], path,
                           metric: str = "asr", title: str | None = None) -> None:
    """One line per budgeted attack; unbounded shadow becomes a flat
    reference line at its single value."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    budgets = sorted({s.eps_reference for s in summaries if s.eps_reference is not None})
    for kind, group in _grouped(summaries).items():
        style = _STYLES.get(kind, {})
        if kind == "shadow":
            for s in group:
                ax.axhline(getattr(s, metric), linestyle=":", label=f"{kind} (unbounded)",
                           **{k: v for k, v in style.items() if k != "marker"})
        else:
            xs = [s.eps_reference for s in group if s.eps_reference is not None]
            ys = [getattr(s, metric) for s in group if s.eps_reference is not None]
            ax.plot(xs, ys, label=kind, **style)
    ax.set_xlabel("budget (224x224x3 reference scale)")
    ax.set_ylabel(metric.replace("_", " "))
    if metric in ("asr", "dos", "asr_strict"):
        ax.set_ylim(-0.02, 1.02)
    if budgets:
        ax.set_xticks(budgets)
    ax.set_title(title or metric)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_radius_vs_epsilon(summaries: list[MetricsSummary], path,
                           title: str | None = None) -> None:
    """Mean spoofing radius per budget with the mean source certified
    radius as a dashed reference line."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    source_levels = [s.mean_source_radius for s in summaries]
    for kind, group in _grouped(summaries).items():
        style = _STYLES.get(kind, {})
        pts = [(s.eps_reference, s.mean_spoofing_radius) for s in group
               if s.eps_reference is not None and s.mean_spoofing_radius is not None]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=kind, **style)
        elif group and group[0].eps_reference is None and group[0].mean_spoofing_radius is not None:
            ax.axhline(group[0].mean_spoofing_radius, linestyle=":",
                       label=f"{kind} (unbounded)",
                       **{k: v for k, v in style.items() if k != "marker"})
    if source_levels:
        ax.axhline(float(np.mean(source_levels)), color="#ff7f0e", linestyle="--",
                   label="source certified radius")
    ax.set_xlabel("budget (224x224x3 reference scale)")
    ax.set_ylabel("mean spoofing radius")
    ax.set_title(title or "spoofing radius")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def _show_image(ax, image: np.ndarray, caption: str) -> None:
    image = np.clip(image, 0.0, 1.0)
    if image.shape[2] == 1:
        ax.imshow(image[:, :, 0], cmap="gray", vmin=0.0, vmax=1.0)
    else:
        ax.imshow(image)
    ax.set_title(caption, fontsize=8)
    ax.axis("off")


def plot_attack_panels(x: np.ndarray, adversarial: np.ndarray, delta: np.ndarray,
                       path, amplification: float = 5.0,
                       captions: tuple[str, str] | None = None) -> None:
    """Side-by-side source / adversarial / amplified-perturbation panels.

    The perturbation panel shows 0.5 + amplification * delta, with the
    factor stated in its caption since raw low-budget perturbations are
    invisible.
    """
    fig, axes = plt.subplots(1, 3, figsize=(6.6, 2.5))
    src_caption, adv_caption = captions or ("source", "adversarial")
    _show_image(axes[0], x, src_caption)
    _show_image(axes[1], adversarial, adv_caption)
    _show_image(axes[2], 0.5 + amplification * delta,
                f"perturbation (x{amplification:g})")
    fig.tight_layout()
    _save(fig, path)
