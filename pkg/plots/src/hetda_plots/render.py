"""Render training-run artifacts to PNG figures.

A run directory is consumed purely through its file contracts:

* ``traces.csv``     -- header ``iter,l_sdl,l_adv,l_c``, one row per iteration
* ``embeddings.csv`` -- header ``dim1,dim2,label,split``
* ``metrics.txt``    -- ``key: value`` lines (optional; supplies the
  stabilization marker via ``converged_iter``)

Nothing model-related is recomputed here; this module is a pure renderer.
Output is always PNG, written atomically (temp file + rename) so a failed
render never leaves a partial image behind. Rendering is deterministic:
fixed figure geometry, no timestamps or software tags in the PNG metadata,
and color/marker assignment by sorted label/split order.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

TRACES_HEADER = "iter,l_sdl,l_adv,l_c"
EMBEDDINGS_HEADER = "dim1,dim2,label,split"

# fixed markers for the splits the trainer emits; anything else gets a
# deterministic fallback from _EXTRA_MARKERS in sorted-name order
_SPLIT_MARKERS = {"labeled": "o", "unlabeled": ".", "test": "x"}
_EXTRA_MARKERS = ("s", "D", "^", "v", "P", "*")


class RenderError(Exception):
    """Bad or missing input artifact; message always names the file."""


def _read_lines(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise RenderError(f"{path}: not found")
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_float(path: str, line_no: int, tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise RenderError(f"{path}: line {line_no}: not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise RenderError(f"{path}: line {line_no}: non-finite value {tok!r}")
    return v


def load_traces(path: str) -> dict[str, list[float]]:
    lines = _read_lines(path)
    if not lines or lines[0] != TRACES_HEADER:
        raise RenderError(f"{path}: expected header {TRACES_HEADER!r}")
    out: dict[str, list[float]] = {"iter": [], "l_sdl": [], "l_adv": [], "l_c": []}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        toks = line.split(",")
        if len(toks) != 4:
            raise RenderError(f"{path}: line {i}: expected 4 fields, got {len(toks)}")
        try:
            out["iter"].append(int(toks[0]))
        except ValueError:
            raise RenderError(f"{path}: line {i}: bad iteration index {toks[0]!r}") from None
        for key, tok in zip(("l_sdl", "l_adv", "l_c"), toks[1:]):
            out[key].append(_parse_float(path, i, tok))
    if not out["iter"]:
        raise RenderError(f"{path}: no data rows")
    return out


def load_embeddings(path: str) -> list[tuple[float, float, int, str]]:
    lines = _read_lines(path)
    if not lines or lines[0] != EMBEDDINGS_HEADER:
        raise RenderError(f"{path}: expected header {EMBEDDINGS_HEADER!r}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        toks = line.split(",")
        if len(toks) != 4:
            raise RenderError(f"{path}: line {i}: expected 4 fields, got {len(toks)}")
        x = _parse_float(path, i, toks[0])
        y = _parse_float(path, i, toks[1])
        try:
            label = int(toks[2])
        except ValueError:
            raise RenderError(f"{path}: line {i}: bad label {toks[2]!r}") from None
        split = toks[3].strip()
        if not split:
            raise RenderError(f"{path}: line {i}: empty split name")
        rows.append((x, y, label, split))
    if not rows:
        raise RenderError(f"{path}: no data rows")
    return rows


def load_metrics(path: str) -> dict[str, str]:
    """Lenient ``key: value`` parse; the file is optional context."""
    if not os.path.isfile(path):
        return {}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if ":" in line:
                k, v = line.split(":", 1)
                out[k.strip()] = v.strip()
    return out


def _atomic_save(fig, out_image: str) -> None:
    tmp = out_image + ".part"
    try:
        # metadata None-entries strip the default Software tag so output
        # bytes do not depend on the matplotlib version string
        fig.savefig(tmp, format="png", dpi=150, metadata={"Software": None})
        os.replace(tmp, out_image)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    finally:
        plt.close(fig)


def plot_convergence(run_dir: str, out_image: str) -> None:
    """Three loss traces on a shared iteration axis.

    Uses a log y-scale when every traced value is positive, and marks the
    stabilization iteration if metrics.txt records one.
    """
    traces = load_traces(os.path.join(run_dir, "traces.csv"))
    metrics = load_metrics(os.path.join(run_dir, "metrics.txt"))

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for key, color in (("l_sdl", "tab:blue"), ("l_adv", "tab:orange"), ("l_c", "tab:green")):
        ax.plot(traces["iter"], traces[key], label=key, color=color, linewidth=1.2)
    if all(min(traces[k]) > 0 for k in ("l_sdl", "l_adv", "l_c")):
        ax.set_yscale("log")
    converged = metrics.get("converged_iter", "none")
    if converged not in ("", "none", "None"):
        try:
            it = int(converged)
        except ValueError:
            it = None
        if it is not None:
            ax.axvline(it, color="gray", linestyle="--", linewidth=1.0)
            ax.annotate(
                f"stabilized @ {it}",
                xy=(it, 1.0),
                xycoords=("data", "axes fraction"),
                xytext=(4, -12),
                textcoords="offset points",
                fontsize=8,
                color="gray",
            )
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(loc="best")
    ax.set_title("training losses")
    fig.tight_layout()
    _atomic_save(fig, out_image)


def legend_groups(rows) -> list[tuple[int, str]]:
    """The (label, split) pairs that actually occur, in legend order."""
    return sorted({(label, split) for _, _, label, split in rows})


def plot_embedding(run_dir: str, out_image: str) -> None:
    """2-D embedding scatter: color by class label, marker by split."""
    rows = load_embeddings(os.path.join(run_dir, "embeddings.csv"))
    labels = sorted({r[2] for r in rows})
    splits = sorted({r[3] for r in rows})
    cmap = plt.get_cmap("tab10")
    colors = {lab: cmap(i % 10) for i, lab in enumerate(labels)}
    extra = iter(_EXTRA_MARKERS)
    markers = {s: _SPLIT_MARKERS.get(s) or next(extra) for s in splits}

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for lab, split in legend_groups(rows):
        pts = np.array([(x, y) for x, y, l, s in rows if l == lab and s == split])
        ax.scatter(
            pts[:, 0],
            pts[:, 1],
            s=14,
            color=colors[lab],
            marker=markers[split],
            label=f"class {lab} ({split})",
            alpha=0.8,
            linewidths=0.5,
        )
    ax.set_xlabel("dim1")
    ax.set_ylabel("dim2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("target embeddings")
    fig.tight_layout()
    _atomic_save(fig, out_image)
