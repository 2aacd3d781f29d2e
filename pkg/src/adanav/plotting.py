"""Static figures rendered from the harness CSVs (Agg backend, PNG files)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import NEVER, curve_name, read_csv, smoothed  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}
# PNG metadata otherwise embeds the matplotlib version
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def correlation_figure(csv_path: Path, out: Path) -> Path:
    rows = read_csv(csv_path)
    kernels = list(dict.fromkeys(r["kernel"] for r in rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        for name in kernels:
            sub = [r for r in rows if r["kernel"] == name]
            H = [float(r["entropy_nats"]) for r in sub]
            gap = [float(r["spectral_gap"]) for r in sub]
            ax.scatter(H, gap, s=10, label=name)
        ax.set_xlabel("policy entropy (nats)")
        ax.set_ylabel("spectral gap")
        ax.legend()
        return _save(fig, out)


def learning_curves_figure(directory: Path, manifest: dict, out: Path) -> Path:
    window = manifest["window"]
    labels = list(dict.fromkeys(r["label"] for r in manifest["runs"]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        for label in labels:
            curves = []
            for r in manifest["runs"]:
                if r["label"] != label:
                    continue
                rows = read_csv(directory / curve_name(label, r["seed"]))
                if rows:
                    curves.append(smoothed([float(x["episode_return"]) for x in rows], window))
            if not curves:
                continue
            n = min(len(c) for c in curves)
            stack = np.vstack([c[:n] for c in curves])
            x = np.arange(n)
            (line,) = ax.plot(x, stack.mean(axis=0), lw=1.2, label=label)
            ax.fill_between(x, stack.min(axis=0), stack.max(axis=0), color=line.get_color(), alpha=0.15)
        ax.set_xlabel("episode")
        ax.set_ylabel(f"return ({window}-episode moving average)")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(fontsize=7)
        return _save(fig, out)


def samples_figure(summary_csv: Path, out: Path) -> Path:
    """Median samples-to-threshold per configuration; runs that never got there show the full budget, hatched."""
    rows = read_csv(summary_csv)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for i, r in enumerate(rows):
            runs = max(int(r["n_runs"]), 1)
            budget = float(r["total_samples"]) / runs
            never = r["samples_to_threshold_median"] == NEVER
            height = budget if never else float(r["samples_to_threshold_median"])
            ax.bar(i, height, color="0.85" if never else f"C{i % 10}", hatch="//" if never else None,
                   edgecolor="0.3")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels([r["label"] for r in rows], rotation=20, ha="right")
        ax.set_ylabel("samples to threshold (median)")
        return _save(fig, out)
