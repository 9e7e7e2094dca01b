"""Command-line front end.

Subcommands: ``train`` (one adaptation run, emits a run directory),
``gridsearch`` (beta/gamma selection), ``ablate`` (component knock-outs),
``synth`` (write a synthetic two-domain task to CSV).

Exit codes: 0 success, 1 usage, 2 data problem, 3 numeric failure. All
diagnostics are a single machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import runio, trainer
from .classifier import class_probabilities
from .datasets import (
    AdaptationTask,
    SplitSpec,
    SyntheticSpec,
    load_dense,
    load_sparse,
    make_synthetic,
    save_dense,
    split_target,
    standardize_task,
)
from .errors import (
    ContractError,
    DataFormatError,
    DegeneracyError,
    HetdaError,
    NumericError,
    ShapeError,
)
from .metrics import auc, pca_2d
from .trainer import StopRule, TrainConfig


class UsageError(HetdaError):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class", argparse.ArgumentDefaultsHelpFormatter)
        super().__init__(*args, **kwargs)

    def error(self, message):  # single line, exit code 1
        self.exit(1, f"{self.prog}: usage-error: {message}\n")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--source", required=True, help="labeled source CSV")
    p.add_argument("--target", required=True, help="labeled target CSV")
    p.add_argument("--data-format", choices=("dense", "sparse"), default="dense", help="CSV layout")
    p.add_argument("--target-labeled-per-class", type=int, default=10, help="labeled target budget")
    p.add_argument("--test-fraction", type=float, default=0.5, help="held-out target fraction")
    p.add_argument(
        "--standardize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="per-feature, per-domain standardization (default on)",
    )
    p.add_argument("--out", default="run", help="output directory")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--config", help="key: value config file; explicit flags win")
    p.add_argument("--beta", type=float, help=f"alignment loss weight (default {d.beta})")
    p.add_argument("--gamma", type=float, help=f"adversarial loss weight (default {d.gamma})")
    p.add_argument(
        "--k",
        type=int,
        dest="latent_dim",
        help="shared code dimension (default min of the feature dims, capped at 128)",
    )
    p.add_argument(
        "--nd", type=int, dest="n_dict", help=f"dictionary steps per iteration (default {d.n_dict})"
    )
    p.add_argument(
        "--na", type=int, dest="n_adv", help=f"adversarial rounds per iteration (default {d.n_adv})"
    )
    p.add_argument(
        "--nc", type=int, dest="n_cls", help=f"classifier steps per iteration (default {d.n_cls})"
    )
    p.add_argument("--lr-sdl", type=float, dest="lr_sdl", help=f"default {d.lr_sdl}")
    p.add_argument("--lr-adv-min", type=float, dest="lr_adv_min", help=f"default {d.lr_adv_min}")
    p.add_argument("--lr-adv-max", type=float, dest="lr_adv_max", help=f"default {d.lr_adv_max}")
    p.add_argument("--lr-cls", type=float, dest="lr_cls", help=f"default {d.lr_cls}")
    p.add_argument("--batch-src", type=int, dest="batch_src", help=f"default {d.batch_src}")
    p.add_argument(
        "--batch-labeled", type=int, dest="batch_labeled", help=f"default {d.batch_labeled}"
    )
    p.add_argument(
        "--batch-unlabeled", type=int, dest="batch_unlabeled", help=f"default {d.batch_unlabeled}"
    )
    p.add_argument(
        "--max-iters", type=int, dest="max_outer_iters", help=f"default {d.max_outer_iters}"
    )
    p.add_argument("--seed", type=int, help=f"default {d.seed}")
    p.add_argument("--embed-dim", type=int, dest="embed_dim", help=f"default {d.embed_dim}")
    p.add_argument("--kernel-dim", type=int, dest="kernel_dim", help=f"default {d.kernel_dim}")
    p.add_argument(
        "--depth",
        type=int,
        dest="feature_depth",
        help=f"feature net hidden layers (default {d.feature_depth})",
    )
    p.add_argument(
        "--kernel-depth", type=int, dest="kernel_depth", help=f"default {d.kernel_depth}"
    )
    p.add_argument(
        "--bandwidths",
        help=f"comma-separated kernel bandwidths (default {','.join(str(b) for b in d.bandwidths)})",
    )
    p.add_argument(
        "--median-rescale",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="rescale bandwidths by the median pairwise distance (default on)",
    )
    p.add_argument(
        "--fresh-batches",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="resample minibatches before each phase (default off)",
    )
    p.add_argument("--stop-window", type=int, help=f"default {StopRule().window}")
    p.add_argument("--stop-tol", type=float, help=f"default {StopRule().tol}")
    p.add_argument("--no-stop", action="store_true", help="disable early stopping")
    p.add_argument("--log-every", type=int, default=0, help="stderr loss line every N iterations")


_CFG_FLAGS = (
    "beta",
    "gamma",
    "latent_dim",
    "n_dict",
    "n_adv",
    "n_cls",
    "lr_sdl",
    "lr_adv_min",
    "lr_adv_max",
    "lr_cls",
    "batch_src",
    "batch_labeled",
    "batch_unlabeled",
    "max_outer_iters",
    "seed",
    "embed_dim",
    "kernel_dim",
    "feature_depth",
    "kernel_depth",
    "median_rescale",
    "fresh_batches",
)


def _build_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = runio.config_from_mapping(runio.parse_key_values(fh.read()), cfg)
    overrides = {}
    for name in _CFG_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "bandwidths", None):
        try:
            overrides["bandwidths"] = tuple(float(t) for t in args.bandwidths.split(",") if t.strip())
        except ValueError:
            raise UsageError(f"bad --bandwidths value {args.bandwidths!r}") from None
    cfg = replace(cfg, **overrides)
    if args.no_stop:
        cfg = replace(cfg, stop=None)
    elif args.stop_window is not None or args.stop_tol is not None:
        cur = cfg.stop or StopRule()
        cfg = replace(
            cfg,
            stop=StopRule(
                args.stop_window if args.stop_window is not None else cur.window,
                args.stop_tol if args.stop_tol is not None else cur.tol,
            ),
        )
    cfg.validate()
    return cfg


def _load_task(args, cfg: TrainConfig) -> AdaptationTask:
    load = load_dense if args.data_format == "dense" else load_sparse
    source = load(args.source)
    target = load(args.target)
    labeled, unlabeled, test = split_target(
        target,
        SplitSpec(args.target_labeled_per_class, cfg.seed),
        test_fraction=args.test_fraction,
    )
    task = AdaptationTask(source, labeled, unlabeled, test)
    if args.standardize:
        task = standardize_task(task)
    return task


def _config_extra(args) -> dict:
    return {
        "source_path": args.source,
        "target_path": args.target,
        "data_format": args.data_format,
        "target_labeled_per_class": args.target_labeled_per_class,
        "test_fraction": args.test_fraction,
        "standardize": bool(args.standardize),
    }


def _progress(every: int):
    if every <= 0:
        return None

    def cb(it, l_sdl, l_adv, l_c):
        if it % every == 0:
            print(f"iter {it}: l_sdl={l_sdl:.6f} l_adv={l_adv:.6f} l_c={l_c:.6f}", file=sys.stderr)

    return cb


def cmd_train(args) -> int:
    cfg = _build_config(args)
    task = _load_task(args, cfg)
    state = trainer.train(
        task.source,
        task.target_labeled,
        task.target_unlabeled,
        cfg,
        progress=_progress(args.log_every),
    )
    pred, scores = trainer.predict_target(state, task.target_test.features)
    accuracy = float(np.mean(pred == task.target_test.labels))

    metrics: dict = {
        "accuracy": accuracy,
        "test_size": task.target_test.size,
    }
    if state.num_classes == 2:
        metrics["auc"] = auc(class_probabilities(scores)[1], task.target_test.labels)
    metrics["converged_iter"] = state.converged_iter if state.converged_iter is not None else "none"
    metrics["final_l_sdl"] = state.traces.l_sdl[-1] if state.traces.l_sdl else "none"
    metrics["final_l_adv"] = state.traces.l_adv[-1] if state.traces.l_adv else "none"
    metrics["final_l_c"] = state.traces.l_c[-1] if state.traces.l_c else "none"

    embeddings = None
    if not args.no_embeddings:
        parts = [task.target_labeled, task.target_unlabeled, task.target_test]
        emb = np.concatenate([trainer.embed_target(state, p.features) for p in parts], axis=1)
        proj = pca_2d(emb)
        pseudo, _ = trainer.predict_target(state, task.target_unlabeled.features)
        labels = np.concatenate([task.target_labeled.labels, pseudo, task.target_test.labels])
        splits = (
            ["labeled"] * task.target_labeled.size
            + ["unlabeled"] * task.target_unlabeled.size
            + ["test"] * task.target_test.size
        )
        embeddings = [
            (proj[0, j], proj[1, j], int(labels[j]), splits[j]) for j in range(proj.shape[1])
        ]

    runio.write_run_dir(args.out, cfg, state.traces, metrics, embeddings, _config_extra(args))
    conv = state.converged_iter if state.converged_iter is not None else "no"
    print(f"accuracy {accuracy:.4f} on {task.target_test.size} test samples (converged: {conv})")
    print(f"run directory: {args.out}")
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _build_config(args)
    task = _load_task(args, cfg)

    def parse_grid(text, name):
        try:
            vals = tuple(float(t) for t in text.split(",") if t.strip())
        except ValueError:
            raise UsageError(f"bad {name} value {text!r}") from None
        if not vals:
            raise UsageError(f"empty {name}")
        return vals

    beta_grid = (
        parse_grid(args.beta_grid, "--beta-grid") if args.beta_grid else trainer.DEFAULT_BETA_GRID
    )
    gamma_grid = (
        parse_grid(args.gamma_grid, "--gamma-grid")
        if args.gamma_grid
        else trainer.DEFAULT_GAMMA_GRID
    )
    result = trainer.grid_search(
        task, cfg, beta_grid, gamma_grid, scorer=args.scorer, jobs=args.jobs
    )
    import os

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "results.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("beta,gamma,score\n")
        for cell in result.sorted_cells():
            fh.write(f"{repr(cell.beta)},{repr(cell.gamma)},{repr(cell.score)}\n")
    print(f"best: beta={result.best_beta!r} gamma={result.best_gamma!r}")
    print(f"results: {path}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _build_config(args)
    task = _load_task(args, cfg)
    modes = [m.strip().lower() for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise UsageError("empty --modes")
    for m in modes:
        if m not in trainer.ABLATION_MODES:
            raise UsageError(
                f"unknown mode {m!r} (options: {', '.join(trainer.ABLATION_MODES)})"
            )
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")

    import os

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ablation.csv")
    rows = []
    for mode in modes:
        accs = []
        for r in range(args.repeats):
            res = trainer.ablate(mode, task, replace(cfg, seed=cfg.seed + r))
            accs.append(res.accuracy)
        arr = np.asarray(accs)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        rows.append((mode, mean, std, len(arr)))
        print(f"{mode}: accuracy {mean:.4f} +/- {std:.4f} over {len(arr)} run(s)")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mode,mean_accuracy,std_accuracy,runs\n")
        for mode, mean, std, n in rows:
            fh.write(f"{mode},{repr(mean)},{repr(std)},{n}\n")
    print(f"results: {path}")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        classes=args.classes,
        latent_dim=args.latent_dim,
        dim_src=args.dim_src,
        dim_tgt=args.dim_tgt,
        per_class=args.per_class,
        noise=args.noise,
        shift=args.shift,
        seed=args.seed,
    )
    source, target = make_synthetic(spec)
    save_dense(source, args.out_source)
    save_dense(target, args.out_target)
    print(f"wrote {args.out_source} ({source.size} rows) and {args.out_target} ({target.size} rows)")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="hetda", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="run one adaptation training")
    _add_data_flags(p_train)
    _add_train_flags(p_train)
    p_train.add_argument("--no-embeddings", action="store_true", help="skip embeddings.csv")
    p_train.set_defaults(func=cmd_train)

    p_grid = sub.add_parser("gridsearch", help="beta/gamma grid search")
    _add_data_flags(p_grid)
    _add_train_flags(p_grid)
    p_grid.add_argument("--beta-grid", help="comma-separated beta values")
    p_grid.add_argument("--gamma-grid", help="comma-separated gamma values")
    p_grid.add_argument("--scorer", choices=("reverse", "holdout"), default="reverse")
    p_grid.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p_grid.set_defaults(func=cmd_gridsearch)

    p_abl = sub.add_parser("ablate", help="component knock-out comparison")
    _add_data_flags(p_abl)
    _add_train_flags(p_abl)
    p_abl.add_argument("--modes", default="full,nosdl,noadv,sequential")
    p_abl.add_argument("--repeats", type=int, default=1)
    p_abl.set_defaults(func=cmd_ablate)

    p_syn = sub.add_parser("synth", help="generate a synthetic task")
    p_syn.add_argument("--classes", type=int, default=3, help="number of classes")
    p_syn.add_argument("--latent-dim", type=int, default=6, help="shared latent dimension")
    p_syn.add_argument("--dim-src", type=int, default=20, help="source feature dimension")
    p_syn.add_argument("--dim-tgt", type=int, default=12, help="target feature dimension")
    p_syn.add_argument("--per-class", type=int, default=200, help="samples per class per domain")
    p_syn.add_argument("--noise", type=float, default=0.3, help="observation noise scale")
    p_syn.add_argument("--shift", type=float, default=0.0, help="target latent mean shift")
    p_syn.add_argument("--seed", type=int, default=7, help="generator seed")
    p_syn.add_argument("--out-source", default="synthetic_source.csv", help="source CSV path")
    p_syn.add_argument("--out-target", default="synthetic_target.csv", help="target CSV path")
    p_syn.set_defaults(func=cmd_synth)
    return parser


def _oneline(e: Exception) -> str:
    return " ".join(str(e).split())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.func(args)
    except UsageError as e:
        print(f"hetda: usage-error: {_oneline(e)}", file=sys.stderr)
        return 1
    except (DataFormatError, ContractError, ShapeError) as e:
        print(f"hetda: data-error: {_oneline(e)}", file=sys.stderr)
        return 2
    except (NumericError, DegeneracyError) as e:
        print(f"hetda: numeric-error: {_oneline(e)}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"hetda: data-error: {_oneline(e)}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
