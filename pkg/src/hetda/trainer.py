"""Joint training loop and the experiment protocols built on it.

One outer iteration samples minibatches (source, labeled target,
unlabeled target), then runs three phases on them:

1. ``n_dict`` alignment steps on the dictionary loss, each followed by
   the constraint projections (clip dictionary/shared-map columns,
   re-orthonormalize projections/encoders);
2. ``n_adv`` adversarial rounds: gradient *ascent* on the kernel net,
   descent on the feature net, shared map and encoders;
3. ``n_cls`` classifier steps on the hinge loss.

``beta`` and ``gamma`` scale the gradients of phases 1 and 2 (the loss
weights of the joint objective); the traces always record the raw,
unweighted losses. Whenever a constrained matrix is touched outside
phase 1 it is re-projected immediately, so the feasibility invariants
hold at the end of every outer iteration. The dictionary and reference
projections are only ever updated in phase 1 (their gradients under the
other two losses are identically zero).
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import classifier as cls_mod
from . import dictlearn
from . import kernels
from .datasets import AdaptationTask, DomainDataset, SplitSpec, split_target
from .errors import ContractError, HetdaError, NumericError
from .numerics import (
    Activation,
    Rng,
    mlp_forward,
    mlp_init,
    mlp_scale_grads,
    mlp_step,
    sgd_step,
)

DEFAULT_BETA_GRID = (1e-2, 1e-3, 1e-4, 1e-5)
DEFAULT_GAMMA_GRID = (1e-2, 1e-1, 1.0, 10.0)
ABLATION_MODES = ("full", "nosdl", "noadv", "sequential") + tuple(f"depth{h}" for h in range(1, 6))


@dataclass(frozen=True)
class StopRule:
    """Trailing-window stabilization: converged when, for every traced
    loss, the stddev of the last ``window`` values is at most ``tol``
    times the loss's full observed range (floored at 1e-12)."""

    window: int = 200
    tol: float = 0.1

    def validate(self) -> None:
        if self.window < 2:
            raise ContractError("stop window must be >= 2")
        if self.tol <= 0:
            raise ContractError("stop tolerance must be > 0")


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 1.0
    gamma: float = 1.0
    latent_dim: int | None = None  # default min(m_src, m_tgt, 128)
    embed_dim: int = 64
    kernel_dim: int = 32
    feature_depth: int = 2  # hidden layers in the feature net
    kernel_depth: int = 1  # hidden layers in the kernel net
    batch_src: int = 64
    batch_labeled: int = 16
    batch_unlabeled: int = 64
    n_dict: int = 1
    n_adv: int = 1
    n_cls: int = 1
    lr_sdl: float = 1e-3
    lr_adv_min: float = 1e-3
    lr_adv_max: float = 1e-3
    lr_cls: float = 1e-3
    max_outer_iters: int = 1500
    seed: int = 42
    stop: StopRule | None = field(default_factory=StopRule)
    bandwidths: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    median_rescale: bool = True
    fresh_batches: bool = False  # resample minibatches before each phase

    def validate(self) -> None:
        if self.beta < 0 or self.gamma < 0:
            raise ContractError("beta and gamma must be >= 0")
        if self.n_dict < 0 or self.n_adv < 0 or self.n_cls < 0:
            raise ContractError("phase step counts must be >= 0")
        if self.n_dict + self.n_adv + self.n_cls < 1:
            raise ContractError("at least one phase must run")
        if min(self.lr_sdl, self.lr_adv_min, self.lr_adv_max, self.lr_cls) < 0:
            raise ContractError("learning rates must be >= 0")
        if self.batch_src < 2:
            raise ContractError("batch_src must be >= 2 (unbiased MMD needs pairs)")
        if self.batch_labeled < 1 or self.batch_unlabeled < 0:
            raise ContractError("batch_labeled >= 1 and batch_unlabeled >= 0 required")
        if self.batch_labeled + self.batch_unlabeled < 2:
            raise ContractError("combined target batch must be >= 2")
        if self.max_outer_iters < 0:
            raise ContractError("max_outer_iters must be >= 0")
        if self.embed_dim < 1 or self.kernel_dim < 1:
            raise ContractError("embedding dims must be >= 1")
        if self.feature_depth < 0 or self.kernel_depth < 0:
            raise ContractError("depths must be >= 0")
        if self.stop is not None:
            self.stop.validate()
        kernels.KernelSpec(tuple(self.bandwidths)).validate()

    def kernel_spec(self) -> kernels.KernelSpec:
        return kernels.KernelSpec(tuple(self.bandwidths), self.median_rescale)


@dataclass
class Traces:
    iters: list[int] = field(default_factory=list)
    l_sdl: list[float] = field(default_factory=list)
    l_adv: list[float] = field(default_factory=list)
    l_c: list[float] = field(default_factory=list)

    def append(self, it: int, l_sdl: float, l_adv: float, l_c: float) -> None:
        self.iters.append(it)
        self.l_sdl.append(l_sdl)
        self.l_adv.append(l_adv)
        self.l_c.append(l_c)

    def series(self) -> list[list[float]]:
        return [self.l_sdl, self.l_adv, self.l_c]


@dataclass
class ModelState:
    sdl: dictlearn.SdlParams
    nets: kernels.AdvNets
    head: cls_mod.ClassifierHead
    traces: Traces
    num_classes: int
    converged_iter: int | None = None


def check_converged(traces: Traces, rule: StopRule) -> bool:
    rule.validate()
    if not traces.iters:
        raise ContractError("empty traces")
    for series in traces.series():
        if len(series) < rule.window:
            return False
        arr = np.asarray(series)
        spread = max(float(arr.max() - arr.min()), 1e-12)
        if float(np.std(arr[-rule.window :])) > rule.tol * spread:
            return False
    return True


def init_state(cfg: TrainConfig, m_src: int, m_tgt: int, num_classes: int) -> ModelState:
    """Fresh parameters drawn from the config seed (stream 0)."""
    cfg.validate()
    k = cfg.latent_dim if cfg.latent_dim is not None else min(m_src, m_tgt, 128)
    rng = Rng(cfg.seed).split(0)
    sdl = dictlearn.init_params(rng, k, m_src, m_tgt)
    feature_net = mlp_init(rng, [k] + [cfg.embed_dim] * cfg.feature_depth + [cfg.embed_dim])
    kernel_net = mlp_init(rng, [cfg.embed_dim] * (cfg.kernel_depth + 1) + [cfg.kernel_dim])
    head_net = mlp_init(rng, [cfg.embed_dim, num_classes], Activation.IDENTITY)
    nets = kernels.AdvNets(feature_net, kernel_net)
    nets.validate()
    head = cls_mod.ClassifierHead(head_net, num_classes)
    head.validate()
    return ModelState(sdl, nets, head, Traces(), num_classes)


def _check_task_inputs(source, target_labeled, target_unlabeled, cfg):
    for ds in (source, target_labeled, target_unlabeled):
        ds.validate()
    if source.labels is None or target_labeled.labels is None:
        raise ContractError("source and labeled target must carry labels")
    src_classes = set(np.unique(source.labels).tolist())
    tgt_classes = set(np.unique(target_labeled.labels).tolist())
    if src_classes != tgt_classes:
        raise ContractError(
            f"class sets differ: source {sorted(src_classes)} vs target {sorted(tgt_classes)}"
        )
    if target_unlabeled.dim != target_labeled.dim:
        raise ContractError("target splits disagree on feature dim")
    if cfg.batch_src > source.size:
        raise ContractError(f"batch_src {cfg.batch_src} exceeds source size {source.size}")
    if cfg.batch_labeled > target_labeled.size:
        raise ContractError(
            f"batch_labeled {cfg.batch_labeled} exceeds labeled target size {target_labeled.size}"
        )
    if cfg.batch_unlabeled > target_unlabeled.size:
        raise ContractError(
            f"batch_unlabeled {cfg.batch_unlabeled} exceeds unlabeled target size "
            f"{target_unlabeled.size}"
        )


def train(
    source: DomainDataset,
    target_labeled: DomainDataset,
    target_unlabeled: DomainDataset,
    cfg: TrainConfig,
    init: ModelState | None = None,
    progress=None,
) -> ModelState:
    """Run the alternating loop until the stop rule fires or the
    iteration budget is exhausted. ``init`` warm-starts from an existing
    state (its parameters are not mutated); ``progress`` is an optional
    ``f(iteration, l_sdl, l_adv, l_c)`` callback."""
    cfg.validate()
    _check_task_inputs(source, target_labeled, target_unlabeled, cfg)
    num_classes = max(source.class_count, target_labeled.class_count)

    if init is None:
        state = init_state(cfg, source.dim, target_labeled.dim, num_classes)
    else:
        if init.sdl.m_src != source.dim or init.sdl.m_tgt != target_labeled.dim:
            raise ContractError("warm-start state does not match data dims")
        state = ModelState(init.sdl, init.nets, init.head, Traces(), init.num_classes)

    sdl = state.sdl
    feature_net = state.nets.feature_net
    kernel_net = state.nets.kernel_net
    head = state.head
    kspec = cfg.kernel_spec()
    rng = Rng(cfg.seed).split(1)
    traces = state.traces
    converged_iter = None

    x_src_all, y_src_all = source.features, source.labels
    x_lab_all, y_lab_all = target_labeled.features, target_labeled.labels
    x_unl_all = target_unlabeled.features

    def sample():
        i_s = rng.choice(source.size, cfg.batch_src)
        i_l = rng.choice(target_labeled.size, cfg.batch_labeled)
        xb_s, yb_s = x_src_all[:, i_s], y_src_all[i_s]
        xb_l, yb_l = x_lab_all[:, i_l], y_lab_all[i_l]
        if cfg.batch_unlabeled > 0:
            i_u = rng.choice(target_unlabeled.size, cfg.batch_unlabeled)
            xb_t = np.concatenate([xb_l, x_unl_all[:, i_u]], axis=1)
        else:
            xb_t = xb_l
        return xb_s, yb_s, xb_l, yb_l, xb_t

    for it in range(1, cfg.max_outer_iters + 1):
        xb_s, yb_s, xb_l, yb_l, xb_t = sample()

        # phase 1: dictionary alignment under constraints
        scale_sdl = cfg.lr_sdl * cfg.beta
        for _ in range(cfg.n_dict):
            g = dictlearn.recon_grads(sdl, xb_s, xb_t)
            sdl = dictlearn.SdlParams(
                proj_src=sgd_step(sdl.proj_src, g.proj_src, scale_sdl),
                proj_tgt=sgd_step(sdl.proj_tgt, g.proj_tgt, scale_sdl),
                dictionary=sgd_step(sdl.dictionary, g.dictionary, scale_sdl),
                shared_map=sgd_step(sdl.shared_map, g.shared_map, scale_sdl),
                enc_src=sgd_step(sdl.enc_src, g.enc_src, scale_sdl),
                enc_tgt=sgd_step(sdl.enc_tgt, g.enc_tgt, scale_sdl),
            )
            sdl = dictlearn.project(sdl)

        if cfg.fresh_batches and cfg.n_adv > 0:
            xb_s, yb_s, xb_l, yb_l, xb_t = sample()

        # phase 2: adversarial kernel matching (max over kernel net,
        # min over everything upstream), gamma-weighted on both sides.
        # No constraint projection here: the clip/orth steps belong to
        # the dictionary phase alone, which is what re-anchors the
        # shared map and encoders each iteration. Skipping that phase
        # (n_dict=0) deliberately leaves them free to drift.
        for _ in range(cfg.n_adv):
            g = kernels.adv_grads(
                kernels.AdvNets(feature_net, kernel_net), sdl, xb_s, xb_t, kspec
            )
            kernel_net = mlp_step(
                kernel_net, mlp_scale_grads(g.kernel_net, -cfg.gamma), cfg.lr_adv_max
            )
            feature_net = mlp_step(
                feature_net, mlp_scale_grads(g.feature_net, cfg.gamma), cfg.lr_adv_min
            )
            scale_adv = cfg.lr_adv_min * cfg.gamma
            sdl = replace(
                sdl,
                shared_map=sgd_step(sdl.shared_map, g.shared_map, scale_adv),
                enc_src=sgd_step(sdl.enc_src, g.enc_src, scale_adv),
                enc_tgt=sgd_step(sdl.enc_tgt, g.enc_tgt, scale_adv),
            )

        if cfg.fresh_batches and cfg.n_cls > 0:
            xb_s, yb_s, xb_l, yb_l, xb_t = sample()

        # phase 3: shared hinge classifier (again no projection; see
        # the phase-2 note)
        for _ in range(cfg.n_cls):
            g = cls_mod.classifier_grads(head, feature_net, sdl, xb_s, yb_s, xb_l, yb_l)
            head = cls_mod.ClassifierHead(mlp_step(head.net, g.head, cfg.lr_cls), head.num_classes)
            feature_net = mlp_step(feature_net, g.feature_net, cfg.lr_cls)
            sdl = replace(
                sdl,
                shared_map=sgd_step(sdl.shared_map, g.shared_map, cfg.lr_cls),
                enc_src=sgd_step(sdl.enc_src, g.enc_src, cfg.lr_cls),
                enc_tgt=sgd_step(sdl.enc_tgt, g.enc_tgt, cfg.lr_cls),
            )

        # raw (unweighted) losses on this iteration's batches
        l_sdl = dictlearn.recon_loss(sdl, xb_s, xb_t)
        r_src, r_tgt = dictlearn.represent(sdl, xb_s, xb_t)
        nets = kernels.AdvNets(feature_net, kernel_net)
        l_adv = kernels.adv_loss(nets, r_src, r_tgt, kspec)
        r_src_l = sdl.shared_map @ (sdl.enc_src @ xb_s)
        r_tgt_l = sdl.shared_map @ (sdl.enc_tgt @ xb_l)
        l_c = cls_mod.classifier_loss(head, feature_net, r_src_l, yb_s, r_tgt_l, yb_l)
        if not all(math.isfinite(v) for v in (l_sdl, l_adv, l_c)):
            raise NumericError(
                f"non-finite loss at iteration {it}: "
                f"l_sdl={l_sdl!r} l_adv={l_adv!r} l_c={l_c!r}"
            )
        traces.append(it, l_sdl, l_adv, l_c)
        if progress is not None:
            progress(it, l_sdl, l_adv, l_c)
        if cfg.stop is not None and check_converged(traces, cfg.stop):
            converged_iter = it
            break

    return ModelState(
        sdl,
        kernels.AdvNets(feature_net, kernel_net),
        head,
        traces,
        num_classes,
        converged_iter,
    )


# ---------------------------------------------------------------------------
# inference helpers


def represent_target(state: ModelState, x: np.ndarray) -> np.ndarray:
    return state.sdl.shared_map @ (state.sdl.enc_tgt @ x)


def represent_source(state: ModelState, x: np.ndarray) -> np.ndarray:
    return state.sdl.shared_map @ (state.sdl.enc_src @ x)


def predict_target(state: ModelState, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return cls_mod.predict(state.head, state.nets.feature_net, represent_target(state, x))


def embed_target(state: ModelState, x: np.ndarray) -> np.ndarray:
    """Shared-space embeddings (feature-net outputs) of target samples."""
    h, _ = mlp_forward(state.nets.feature_net, represent_target(state, x))
    return h


def accuracy_on(state: ModelState, ds: DomainDataset) -> float:
    if ds.labels is None:
        raise ContractError("accuracy needs labels")
    pred, _ = predict_target(state, ds.features)
    return float(np.mean(pred == ds.labels))


def target_only_baseline(task: AdaptationTask, cfg: TrainConfig) -> ModelState:
    """Supervised reference: the same classifier stack trained with both
    hinge branches fed by the labeled target pool and all alignment
    phases disabled. Measures what the labels alone buy.

    The code dimension is forced to the full target width so the frozen
    random encoder is a lossless isometry; anything less would handicap
    the baseline with an untrained projection rather than with label
    scarcity, which is the thing being measured."""
    pseudo_source = DomainDataset(
        task.target_labeled.features.copy(),
        task.target_labeled.labels.copy(),
        task.target_labeled.class_count,
        name="target-labeled-as-source",
    )
    base_cfg = _clamp_batches(
        replace(
            cfg,
            beta=0.0,
            gamma=0.0,
            n_dict=0,
            n_adv=0,
            n_cls=max(1, cfg.n_cls),
            latent_dim=task.target_labeled.dim,
        ),
        pseudo_source,
        task.target_labeled,
        task.target_unlabeled,
    )
    return train(pseudo_source, task.target_labeled, task.target_unlabeled, base_cfg)


# ---------------------------------------------------------------------------
# ablations


@dataclass
class AblateResult:
    mode: str
    accuracy: float
    state: ModelState


def ablate(mode: str, task: AdaptationTask, cfg: TrainConfig) -> AblateResult:
    """Train a variant and score it on the target test split.

    Modes: ``full`` (cfg untouched), ``nosdl`` (no dictionary phase,
    beta=0), ``noadv`` (no adversarial phase, gamma=0), ``sequential``
    (dictionary-only stage to convergence, then the other two phases),
    ``depth1``..``depth5`` (feature-net hidden layer count).
    """
    mode = mode.lower()
    if mode not in ABLATION_MODES:
        raise ContractError(f"unknown ablation mode {mode!r} (options: {', '.join(ABLATION_MODES)})")
    if mode == "full":
        state = train(task.source, task.target_labeled, task.target_unlabeled, cfg)
    elif mode == "nosdl":
        state = train(
            task.source,
            task.target_labeled,
            task.target_unlabeled,
            replace(cfg, n_dict=0, beta=0.0),
        )
    elif mode == "noadv":
        state = train(
            task.source,
            task.target_labeled,
            task.target_unlabeled,
            replace(cfg, n_adv=0, gamma=0.0),
        )
    elif mode == "sequential":
        stage1 = train(
            task.source,
            task.target_labeled,
            task.target_unlabeled,
            replace(cfg, n_adv=0, n_cls=0),
        )
        state = train(
            task.source,
            task.target_labeled,
            task.target_unlabeled,
            replace(cfg, n_dict=0),
            init=stage1,
        )
    else:
        depth = int(mode.removeprefix("depth"))
        state = train(
            task.source,
            task.target_labeled,
            task.target_unlabeled,
            replace(cfg, feature_depth=depth),
        )
    return AblateResult(mode, accuracy_on(state, task.target_test), state)


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridCell:
    beta: float
    gamma: float
    score: float


@dataclass
class GridResult:
    cells: list[GridCell]
    best_beta: float
    best_gamma: float

    def sorted_cells(self) -> list[GridCell]:
        return sorted(self.cells, key=lambda c: (-c.score, c.beta, c.gamma))


def _cell_seeds(seed: int, index: int) -> tuple[int, int]:
    """Two independent seeds for grid cell ``index``, derived through the
    splittable generator so parallel and serial runs agree."""
    gen = Rng(seed).split(index + 16).gen
    pair = gen.integers(0, 2**63, size=2)
    return int(pair[0]), int(pair[1])


def _strip_labels(ds: DomainDataset) -> DomainDataset:
    return DomainDataset(ds.features, None, ds.class_count, ds.name + "[stripped]")


def _clamp_batches(cfg: TrainConfig, source, labeled, unlabeled) -> TrainConfig:
    # protocol-internal retrainings run on smaller pools than the user's
    # task; shrink batches to fit rather than bounce the whole search
    return replace(
        cfg,
        batch_src=min(cfg.batch_src, source.size),
        batch_labeled=min(cfg.batch_labeled, labeled.size),
        batch_unlabeled=min(cfg.batch_unlabeled, unlabeled.size),
    )


def _score_cell(args) -> GridCell:
    task, cfg, beta, gamma, index, scorer, holdout = args
    seed_fwd, seed_rev = _cell_seeds(cfg.seed, index)
    cell_cfg = replace(cfg, beta=beta, gamma=gamma, seed=seed_fwd)
    try:
        if scorer == "holdout":
            fit_labeled, score_labeled = holdout
            fit_cfg = _clamp_batches(cell_cfg, task.source, fit_labeled, task.target_unlabeled)
            model = train(task.source, fit_labeled, task.target_unlabeled, fit_cfg)
            pred, _ = predict_target(model, score_labeled.features)
            score = float(np.mean(pred == score_labeled.labels))
        else:
            src_labeled, src_unlabeled, src_heldout = holdout
            forward = train(task.source, task.target_labeled, task.target_unlabeled, cell_cfg)
            pseudo, _ = predict_target(forward, task.target_unlabeled.features)
            reverse_source = DomainDataset(
                task.target_unlabeled.features,
                pseudo.astype(np.int64),
                forward.num_classes,
                name="pseudo-labeled-target",
            )
            reverse_cfg = _clamp_batches(
                replace(cell_cfg, seed=seed_rev), reverse_source, src_labeled, src_unlabeled
            )
            reverse = train(reverse_source, src_labeled, _strip_labels(src_unlabeled), reverse_cfg)
            pred, _ = predict_target(reverse, src_heldout.features)
            score = float(np.mean(pred == src_heldout.labels))
    except HetdaError as err:
        raise type(err)(f"grid cell (beta={beta!r}, gamma={gamma!r}): {err}") from err
    return GridCell(beta, gamma, score)


def grid_search(
    task: AdaptationTask,
    cfg: TrainConfig,
    beta_grid=DEFAULT_BETA_GRID,
    gamma_grid=DEFAULT_GAMMA_GRID,
    scorer: str = "reverse",
    jobs: int = 1,
) -> GridResult:
    """Score every (beta, gamma) cell and pick the best.

    The default scorer is reverse validation: train forward, pseudo-label
    the unlabeled target, train a reverse model from pseudo-labeled
    target back to the source, and score it on held-out labeled source
    samples (no target test labels are ever consulted). ``holdout``
    instead splits the labeled target pool in half and scores directly,
    which is cheaper but burns labels. Ties break toward the lowest
    beta, then the lowest gamma.
    """
    if scorer not in ("reverse", "holdout"):
        raise ContractError(f"unknown scorer {scorer!r}")
    if jobs < 1:
        raise ContractError("jobs must be >= 1")
    beta_grid = tuple(beta_grid)
    gamma_grid = tuple(gamma_grid)
    if not beta_grid or not gamma_grid:
        raise ContractError("empty grid")

    if scorer == "holdout":
        per_class = int(np.bincount(task.target_labeled.labels).min())
        if per_class < 2:
            raise ContractError("holdout scorer needs >= 2 labeled target samples per class")
        fit, _, score_half = split_target(
            task.target_labeled, SplitSpec(per_class // 2, cfg.seed), test_fraction=0.999
        )
        shared = (fit, score_half)
    else:
        per_class = int(np.bincount(task.source.labels).min())
        lpc = int(np.bincount(task.target_labeled.labels).min())
        if per_class < lpc + 2:
            raise ContractError("source too small for reverse validation")
        shared = split_target(task.source, SplitSpec(lpc, cfg.seed))

    work = [
        (task, cfg, beta, gamma, i, scorer, shared)
        for i, (beta, gamma) in enumerate((b, g) for b in beta_grid for g in gamma_grid)
    ]
    if jobs == 1:
        cells = [_score_cell(w) for w in work]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_score_cell, work))
    best = min(cells, key=lambda c: (-c.score, c.beta, c.gamma))
    return GridResult(cells, best.beta, best.gamma)
