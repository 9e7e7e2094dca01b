"""Run-directory file contract.

A training run emits a self-describing directory:

* ``config.txt``    -- ``key: value`` snapshot; feeding it back through
  ``--config`` reproduces the run byte-for-byte,
* ``traces.csv``    -- header ``iter,l_sdl,l_adv,l_c``, one row per outer
  iteration, raw losses,
* ``metrics.txt``   -- ``key: value`` evaluation summary,
* ``embeddings.csv``-- header ``dim1,dim2,label,split``, 2-D projections
  of target embeddings for downstream plotting.

Floats are written with shortest round-trip repr so identical runs
produce identical bytes.
"""

from __future__ import annotations

import os
from dataclasses import fields

from .errors import ContractError, DataFormatError
from .trainer import StopRule, TrainConfig, Traces

TRACES_HEADER = "iter,l_sdl,l_adv,l_c"
EMBEDDINGS_HEADER = "dim1,dim2,label,split"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def config_to_text(cfg: TrainConfig, extra: dict | None = None) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "stop":
            lines.append(f"stop_window: {v.window if v else 'none'}")
            lines.append(f"stop_tol: {_fmt(v.tol) if v else 'none'}")
        else:
            lines.append(f"{f.name}: {_fmt(v)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {_fmt(v)}")
    return "\n".join(lines) + "\n"


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise DataFormatError(f"expected 'key: value', got {line!r}", i)
        k, v = line.split(":", 1)
        out[k.strip()] = v.strip()
    return out


_BOOL = {"true": True, "false": False}


def config_from_mapping(mapping: dict[str, str], base: TrainConfig | None = None) -> TrainConfig:
    """Build a config from parsed key/value strings on top of ``base``.

    Unknown keys are ignored (config snapshots carry extra context such
    as data paths); malformed values raise."""
    cfg = base or TrainConfig()
    kwargs = {}
    window = mapping.get("stop_window")
    tol = mapping.get("stop_tol")
    if window is not None or tol is not None:
        if (window or "none").lower() == "none":
            kwargs["stop"] = None
        else:
            cur = cfg.stop or StopRule()
            kwargs["stop"] = StopRule(
                int(window) if window else cur.window,
                float(tol) if tol and tol.lower() != "none" else cur.tol,
            )
    for f in fields(cfg):
        if f.name == "stop" or f.name not in mapping:
            continue
        raw = mapping[f.name]
        try:
            if f.name == "bandwidths":
                kwargs[f.name] = tuple(float(t) for t in raw.split(",") if t.strip())
            elif f.name == "latent_dim":
                kwargs[f.name] = None if raw.lower() == "none" else int(raw)
            elif f.name in ("median_rescale", "fresh_batches"):
                if raw.lower() not in _BOOL:
                    raise ValueError(raw)
                kwargs[f.name] = _BOOL[raw.lower()]
            elif isinstance(getattr(cfg, f.name), bool):
                kwargs[f.name] = _BOOL[raw.lower()]
            elif isinstance(getattr(cfg, f.name), int):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        except (ValueError, KeyError):
            raise ContractError(f"bad config value {f.name} = {raw!r}") from None
    from dataclasses import replace

    return replace(cfg, **kwargs)


def write_traces(path, traces: Traces) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACES_HEADER + "\n")
        for it, a, b, c in zip(traces.iters, traces.l_sdl, traces.l_adv, traces.l_c):
            fh.write(f"{it},{repr(a)},{repr(b)},{repr(c)}\n")


def write_metrics(path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in metrics.items():
            fh.write(f"{k}: {_fmt(v)}\n")


def write_embeddings(path, rows) -> None:
    """Rows are (dim1, dim2, label, split) tuples."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(EMBEDDINGS_HEADER + "\n")
        for d1, d2, label, split in rows:
            fh.write(f"{repr(float(d1))},{repr(float(d2))},{int(label)},{split}\n")


def write_run_dir(
    out_dir,
    cfg: TrainConfig,
    traces: Traces,
    metrics: dict,
    embeddings=None,
    config_extra: dict | None = None,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg, config_extra))
    write_traces(os.path.join(out_dir, "traces.csv"), traces)
    write_metrics(os.path.join(out_dir, "metrics.txt"), metrics)
    if embeddings is not None:
        write_embeddings(os.path.join(out_dir, "embeddings.csv"), embeddings)
