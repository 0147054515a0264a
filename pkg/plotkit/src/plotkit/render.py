"""Figure rendering. Output format (SVG or PNG) follows the file extension.

SVG output is deterministic: text stays text (no font paths), the hash salt
is pinned, and no creation date is embedded. Each data series carries a
`series-<label>` group id so downstream checks can find it structurally.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .csvio import read_curves, read_grid

_RC = {"svg.fonttype": "none", "svg.hashsalt": "plotkit"}


def _save(fig, out_image) -> Path:
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out.suffix.lower() == ".svg" else None
    fig.savefig(out, metadata=metadata)
    plt.close(fig)
    return out


def render_error_curves(curves_csv, out_image) -> Path:
    """One line per policy (mean over seeds) with a stddev band; fresh steps
    are marked on each line."""
    curve_set = read_curves(curves_csv)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for s in curve_set.series:
            mark_idx = [s.steps.index(st) for st in s.fresh_steps]
            (line,) = ax.plot(s.steps, s.mean, label=s.policy, marker="o",
                              markersize=3.5, markevery=mark_idx)
            line.set_gid(f"series-{s.policy}")
            band = ax.fill_between(s.steps, s.mean - s.std, s.mean + s.std,
                                   alpha=0.2, color=line.get_color())
            band.set_gid(f"band-{s.policy}")
        ax.set_xlabel("denoising step")
        ax.set_ylabel("caching error (L2)")
        ax.set_title("per-step caching error (markers: fresh steps)")
        ax.legend(title="policy")
        fig.tight_layout()
        return _save(fig, out_image)


def render_ablation_grid(grid_csv, out_image) -> Path:
    """Two panels: terminal error vs cycle length (one line per ratio) and
    terminal error vs cache ratio (one line per cycle length)."""
    cells = read_grid(grid_csv)
    ratios = sorted({c.ratio for c in cells})
    cycles = sorted({c.cycle for c in cells})
    with plt.rc_context(_RC):
        fig, (ax_n, ax_r) = plt.subplots(1, 2, figsize=(10.0, 4.2))
        for ratio in ratios:
            sub = sorted((c.cycle, c.terminal_error) for c in cells if c.ratio == ratio)
            (line,) = ax_n.plot([x for x, _ in sub], [y for _, y in sub],
                                marker="o", label=f"R={ratio:g}")
            line.set_gid(f"series-R={ratio:g}")
        ax_n.set_xlabel("cycle length N")
        ax_n.set_ylabel("terminal error (L2)")
        ax_n.legend()
        for cycle in cycles:
            sub = sorted((c.ratio, c.terminal_error) for c in cells if c.cycle == cycle)
            (line,) = ax_r.plot([x for x, _ in sub], [y for _, y in sub],
                                marker="o", label=f"N={cycle}")
            line.set_gid(f"series-N={cycle}")
        ax_r.set_xlabel("cache ratio R")
        ax_r.set_ylabel("terminal error (L2)")
        ax_r.legend()
        fig.tight_layout()
        return _save(fig, out_image)
