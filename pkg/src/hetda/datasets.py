"""Dataset containers, file loaders, target splitting, and a synthetic
two-domain generator.

Everything downstream works on samples-as-columns matrices; the loaders
read the usual samples-as-rows files and transpose once at the edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, DataFormatError, DegeneracyError, ShapeError
from .numerics import Rng

SPHERE_RADIUS = 4.0
# The target domain draws its latent noise at this multiple of the base
# scale. The asymmetry is the point of the benchmark: the source is
# clean and plentiful, so it pins down the class geometry precisely,
# while the target's clusters genuinely overlap. A handful of target
# labels then places class boundaries noticeably worse than the Bayes
# rule allows, and adaptation has real room to help.
TARGET_NOISE_FACTOR = 3.0


@dataclass
class DomainDataset:
    features: np.ndarray  # (m, n) float64, samples in columns
    labels: np.ndarray | None  # (n,) int64, None when unlabeled
    class_count: int
    name: str = ""

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def size(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise ShapeError("features must be 2-D (dims x samples)")
        if not np.all(np.isfinite(self.features)):
            raise ContractError(f"non-finite features in dataset {self.name!r}")
        if self.labels is not None:
            if self.labels.ndim != 1 or len(self.labels) != self.size:
                raise ShapeError("labels must align with sample columns")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
                raise ContractError("labels outside [0, class_count)")


@dataclass(frozen=True)
class SplitSpec:
    labeled_per_class: int
    seed: int


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 3
    latent_dim: int = 6
    dim_src: int = 20
    dim_tgt: int = 12
    per_class: int = 200
    noise: float = 0.3
    shift: float = 0.0
    seed: int = 7
    # Optional direct seeds for the mixing matrices; passing the same
    # value for both (with equal dims) forces identical mixers.
    mixer_seed_src: int | None = None
    mixer_seed_tgt: int | None = None


# ---------------------------------------------------------------------------
# file formats


def _parse_float(tok: str, line_no: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DataFormatError(f"not a number: {tok!r}", line_no) from None
    if not math.isfinite(v):
        raise DataFormatError(f"non-finite value: {tok!r}", line_no)
    return v


def _parse_label(tok: str, line_no: int) -> int:
    v = _parse_float(tok, line_no)
    if not float(v).is_integer() or v < 0:
        raise DataFormatError(f"label must be a non-negative integer, got {tok!r}", line_no)
    return int(v)


def load_dense(path, has_labels: bool = True) -> DomainDataset:
    """Read a dense CSV: one sample per row, optional leading label.

    A header row is tolerated (and skipped) when its first field does
    not parse as a number. NaN/Inf values and ragged rows are rejected
    with the offending 1-based line number.
    """
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            toks = line.split(",")
            if line_no == 1:
                try:
                    float(toks[0])
                except ValueError:
                    continue  # header
            if has_labels:
                if len(toks) < 2:
                    raise DataFormatError("expected label plus features", line_no)
                labels.append(_parse_label(toks[0], line_no))
                feats = toks[1:]
            else:
                feats = toks
            vals = [_parse_float(t, line_no) for t in feats]
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataFormatError(f"row has {len(vals)} features, expected {width}", line_no)
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"no data rows in {path}")
    features = np.array(rows, dtype=np.float64).T
    lab = np.array(labels, dtype=np.int64) if has_labels else None
    class_count = int(lab.max()) + 1 if has_labels else 0
    return DomainDataset(features, lab, class_count, name=str(path))


def save_dense(ds: DomainDataset, path) -> None:
    """Write a dense CSV that :func:`load_dense` reads back bit-exactly
    (floats are emitted with shortest round-trip repr)."""
    with open(path, "w", encoding="utf-8") as fh:
        for j in range(ds.size):
            cells = [repr(float(v)) for v in ds.features[:, j]]
            if ds.labels is not None:
                cells.insert(0, str(int(ds.labels[j])))
            fh.write(",".join(cells) + "\n")


def load_sparse(path) -> DomainDataset:
    """Read a sparse file: ``label idx:val idx:val ...`` per line, with
    1-based strictly increasing indices. Width is the largest index seen."""
    entries: list[list[tuple[int, float]]] = []
    labels: list[int] = []
    width = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            toks = line.split()
            labels.append(_parse_label(toks[0], line_no))
            pairs: list[tuple[int, float]] = []
            prev = 0
            for tok in toks[1:]:
                if ":" not in tok:
                    raise DataFormatError(f"malformed index:value pair {tok!r}", line_no)
                idx_s, val_s = tok.split(":", 1)
                try:
                    idx = int(idx_s)
                except ValueError:
                    raise DataFormatError(f"non-integer index {idx_s!r}", line_no) from None
                if idx < 1:
                    raise DataFormatError(f"indices are 1-based, got {idx}", line_no)
                if idx <= prev:
                    raise DataFormatError(
                        f"indices must be strictly increasing, got {idx} after {prev}", line_no
                    )
                prev = idx
                pairs.append((idx, _parse_float(val_s, line_no)))
            width = max(width, prev)
            entries.append(pairs)
    if not entries:
        raise DataFormatError(f"no data rows in {path}")
    features = np.zeros((width, len(entries)))
    for j, pairs in enumerate(entries):
        for idx, val in pairs:
            features[idx - 1, j] = val
    lab = np.array(labels, dtype=np.int64)
    return DomainDataset(features, lab, int(lab.max()) + 1, name=str(path))


# ---------------------------------------------------------------------------
# splitting and standardization


def split_target(
    ds: DomainDataset, spec: SplitSpec, test_fraction: float = 0.5
) -> tuple[DomainDataset, DomainDataset, DomainDataset]:
    """Stratified split into (labeled, unlabeled, test).

    Exactly ``labeled_per_class`` samples per class keep their labels;
    the remainder is shuffled and divided into an unlabeled part (labels
    stripped) and a test part holding ``test_fraction`` of it.
    """
    if ds.labels is None:
        raise ContractError("split_target needs a labeled dataset")
    if spec.labeled_per_class < 1:
        raise ContractError("labeled_per_class must be >= 1")
    if not 0.0 < test_fraction < 1.0:
        raise ContractError("test_fraction must be in (0, 1)")
    rng = Rng(spec.seed)
    labeled_idx: list[np.ndarray] = []
    rest_idx: list[np.ndarray] = []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        if len(members) < spec.labeled_per_class + 1:
            raise ContractError(
                f"class {c} has {len(members)} samples, needs >= {spec.labeled_per_class + 1}"
            )
        perm = rng.permutation(len(members))
        labeled_idx.append(members[perm[: spec.labeled_per_class]])
        rest_idx.append(members[perm[spec.labeled_per_class :]])
    labeled = np.sort(np.concatenate(labeled_idx))
    rest = np.concatenate(rest_idx)
    shuffle = rng.permutation(len(rest))
    n_test = int(round(test_fraction * len(rest)))
    test = np.sort(rest[shuffle[:n_test]])
    unlabeled = np.sort(rest[shuffle[n_test:]])

    def take(idx: np.ndarray, keep_labels: bool, tag: str) -> DomainDataset:
        lab = ds.labels[idx].copy() if keep_labels else None
        return DomainDataset(ds.features[:, idx].copy(), lab, ds.class_count, f"{ds.name}[{tag}]")

    return take(labeled, True, "labeled"), take(unlabeled, False, "unlabeled"), take(test, True, "test")


def feature_stats(mats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and stddev over concatenated sample columns;
    features with (near-)zero spread get stddev 1 so they pass through."""
    x = np.concatenate(mats, axis=1)
    mean = x.mean(axis=1)
    std = x.std(axis=1)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def apply_stats(ds: DomainDataset, mean: np.ndarray, std: np.ndarray) -> DomainDataset:
    feats = (ds.features - mean[:, None]) / std[:, None]
    return replace(ds, features=feats)


@dataclass
class AdaptationTask:
    """A ready-to-train bundle: labeled source plus the three target splits."""

    source: DomainDataset
    target_labeled: DomainDataset
    target_unlabeled: DomainDataset
    target_test: DomainDataset


def standardize_task(task: AdaptationTask) -> AdaptationTask:
    """Per-feature standardization, fit separately per domain.

    Source stats come from the source pool; target stats from labeled
    plus unlabeled target (the test split is transformed with those same
    stats but never contributes to them).
    """
    s_mean, s_std = feature_stats([task.source.features])
    t_mean, t_std = feature_stats([task.target_labeled.features, task.target_unlabeled.features])
    return AdaptationTask(
        source=apply_stats(task.source, s_mean, s_std),
        target_labeled=apply_stats(task.target_labeled, t_mean, t_std),
        target_unlabeled=apply_stats(task.target_unlabeled, t_mean, t_std),
        target_test=apply_stats(task.target_test, t_mean, t_std),
    )


# ---------------------------------------------------------------------------
# synthetic two-domain tasks


def _mixer(rng: Rng, dim: int, latent: int) -> np.ndarray:
    for _ in range(8):
        m = rng.normal((dim, latent)) / math.sqrt(latent)
        if np.linalg.matrix_rank(m) == latent:
            return m
    raise DegeneracyError("could not draw a full-column-rank mixing matrix")


def _sphere_means(rng: Rng, latent_dim: int, classes: int) -> np.ndarray:
    """Class means on the radius-4 sphere with a minimum pairwise gap.

    A plain uniform draw makes task difficulty swing wildly from seed to
    seed (two means can land almost on top of each other, or all of them
    nearly antipodal). Rejection keeps the smallest pairwise distance
    inside a band around the typical distance of independent radius-4
    vectors, so seeded benchmarks measure the learner, not the luck of
    the mean placement.
    """
    lo, hi = 1.25 * SPHERE_RADIUS, 1.5 * SPHERE_RADIUS
    best = None
    best_err = math.inf
    for _ in range(64):
        raw = rng.normal((latent_dim, classes))
        norms = np.maximum(np.linalg.norm(raw, axis=0), 1e-12)
        means = SPHERE_RADIUS * raw / norms
        gap = min(
            float(np.linalg.norm(means[:, i] - means[:, j]))
            for i in range(classes)
            for j in range(i + 1, classes)
        )
        if lo <= gap <= hi:
            return means
        err = max(lo - gap, gap - hi)
        if err < best_err:
            best, best_err = means, err
    return best  # many classes crowd the sphere: settle for the closest fit


def make_synthetic(spec: SyntheticSpec) -> tuple[DomainDataset, DomainDataset]:
    """Two domains over a shared latent class structure.

    Class means sit on a sphere of radius 4 in latent space; each domain
    observes latent points through its own full-column-rank mixing
    matrix, so the feature spaces differ in dimension and basis. The
    domains are deliberately unequal in quality: both draw isotropic
    latent noise, the source at scale ``noise`` and the target at
    ``TARGET_NOISE_FACTOR * noise``, so target clusters genuinely
    overlap where source clusters are sharp. When ``shift`` is positive
    the target additionally applies a per-class mean shift along the
    first latent axis with zero-sum class weights — a
    conditional-distribution divergence that survives per-feature
    standardization.
    """
    c, z = spec.classes, spec.latent_dim
    if c < 2:
        raise ContractError("need at least two classes")
    if z < 1 or min(spec.dim_src, spec.dim_tgt) < z:
        raise ContractError("need latent_dim >= 1 and feature dims >= latent_dim")
    if spec.per_class < 1 or spec.noise < 0 or spec.shift < 0:
        raise ContractError("per_class >= 1, noise >= 0, shift >= 0 required")

    base = Rng(spec.seed)
    means_rng, noise_s_rng, noise_t_rng = base.split(0), base.split(1), base.split(2)
    mix_s_rng = base.split(3) if spec.mixer_seed_src is None else Rng(spec.mixer_seed_src)
    mix_t_rng = base.split(4) if spec.mixer_seed_tgt is None else Rng(spec.mixer_seed_tgt)

    means = _sphere_means(means_rng, z, c)

    mixer_src = _mixer(mix_s_rng, spec.dim_src, z)
    mixer_tgt = _mixer(mix_t_rng, spec.dim_tgt, z)

    def domain(mixer, noise_rng, scales: np.ndarray, shifted: bool, name: str) -> DomainDataset:
        blocks = []
        labels = []
        for cls in range(c):
            latent = means[:, [cls]] + scales[:, None] * noise_rng.normal((z, spec.per_class))
            if shifted:
                w = (2 * cls - (c - 1)) / (c - 1)
                latent[0, :] += spec.shift * w
            blocks.append(mixer @ latent)
            labels.extend([cls] * spec.per_class)
        return DomainDataset(
            np.concatenate(blocks, axis=1), np.array(labels, dtype=np.int64), c, name
        )

    source = domain(mixer_src, noise_s_rng, np.full(z, spec.noise), False, "synthetic-src")
    target = domain(
        mixer_tgt, noise_t_rng, np.full(z, TARGET_NOISE_FACTOR * spec.noise), True, "synthetic-tgt"
    )
    return source, target
