"""Coarse-to-fine training and inference over the residual pyramid.

Training is strictly feedforward: the coarsest level starts from the
codebook seed, every level fits its feature extractors, selectors and
residual regressor against "clean minus current prediction" targets, and
the corrected prediction is upscaled into the next finer level. Inference
replays the same per-level recursion with the stored models.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import codebook as cb
from . import gbrt, rft, sfg
from .errors import IncompatibleModelError, InvalidConfigError, InvalidInputError, ShapeMismatchError
from .imaging import as_image, build_pyramid, compose_prediction, psnr, upscale
from .parallel import ordered_map
from .saab import (
    FeatureStack,
    SaabKernels,
    apply_saab,
    extract_patches_at,
    fit_saab,
    neighborhood_features,
    neighborhood_meta,
)

FORMAT_VERSION = "gusl-model-v1"

LDCT_WINDOW = 5
DIFF_WINDOW = 7

_FEATURE_DTYPE = np.float32
_PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class TrainConfig:
    level_count: int = 4
    bins: int = 16
    split: float = 0.8
    seed: int = 0
    # per-level pixel-row sampling fraction, index 0 = finest level;
    # None -> 25% at the finest level, 100% at every coarser one
    pixel_subsample: tuple[float, ...] | None = None
    codebook_k: int = 1024
    clip: bool = True
    saab_patch_cap: int = 100_000
    aux_gbrt: gbrt.GbrtParams = field(default_factory=lambda: gbrt.AUXILIARY_DEFAULTS)
    residual_gbrt: gbrt.GbrtParams = field(default_factory=lambda: gbrt.RESIDUAL_DEFAULTS)
    lnt_fit_on_leaf_rows: bool = False
    codebook_target_ndct: bool = False

    def validate(self) -> None:
        if self.level_count < 2:
            raise InvalidConfigError(f"level_count must be >= 2, got {self.level_count}")
        if self.bins < 2:
            raise InvalidConfigError(f"bins must be >= 2, got {self.bins}")
        if not 0.0 < self.split < 1.0:
            raise InvalidConfigError(f"split must be in (0,1), got {self.split}")
        if self.codebook_k < 1:
            raise InvalidConfigError(f"codebook_k must be >= 1, got {self.codebook_k}")
        if self.saab_patch_cap < max(LDCT_WINDOW, DIFF_WINDOW) ** 2:
            raise InvalidConfigError("saab_patch_cap too small to fit a bank")
        for f in self.subsample_fractions():
            if not 0.0 < f <= 1.0:
                raise InvalidConfigError(f"pixel_subsample fractions must be in (0,1], got {f}")
        self.aux_gbrt.validate()
        self.residual_gbrt.validate()

    def subsample_fractions(self) -> tuple[float, ...]:
        if self.pixel_subsample is None:
            return (0.25,) + (1.0,) * (self.level_count - 1)
        fr = tuple(self.pixel_subsample)
        if len(fr) != self.level_count:
            raise InvalidConfigError(
                f"pixel_subsample needs {self.level_count} entries, got {len(fr)}"
            )
        return fr


@dataclass
class LevelModel:
    level: int  # 1 = finest
    saab_ldct: SaabKernels
    saab_diff: SaabKernels
    selected: np.ndarray
    sfg: sfg.SfgModel
    regressor: gbrt.GbrtModel
    sfg_degenerate: bool = False


@dataclass
class LevelDiagnostics:
    level: int
    raw_losses: np.ndarray
    rank_train: np.ndarray
    rank_val: np.ndarray
    joint_score: np.ndarray
    threshold: int
    selected: np.ndarray
    selected_losses: np.ndarray
    lnt_losses: np.ndarray
    training_rows: int


@dataclass
class TrainDiagnostics:
    levels: list[LevelDiagnostics] = field(default_factory=list)
    train_psnr: list[float] = field(default_factory=list)  # final prediction per pair


@dataclass
class GuslModel:
    config: TrainConfig
    codebook: cb.Codebook
    levels: list[LevelModel]  # ordered coarsest -> finest
    version: str = FORMAT_VERSION
    diagnostics: TrainDiagnostics | None = field(default=None, compare=False)


def level_stacks(l_img: np.ndarray, p_prime: np.ndarray, lm: LevelModel) -> list[FeatureStack]:
    """The two per-level sources: LDCT channels + raw pixel, and the
    difference-map channels + raw pixel."""
    diff = l_img - p_prime
    s_l = np.concatenate([apply_saab(l_img, lm.saab_ldct), l_img[None]], axis=0)
    s_d = np.concatenate([apply_saab(diff, lm.saab_diff), diff[None]], axis=0)
    return [
        FeatureStack(source="ldct", data=s_l, raw_channel=s_l.shape[0] - 1),
        FeatureStack(source="diff", data=s_d, raw_channel=s_d.shape[0] - 1),
    ]


def _level_meta(lm: LevelModel):
    return neighborhood_meta(
        [
            ("ldct", lm.saab_ldct.channels + 1, lm.saab_ldct.channels),
            ("diff", lm.saab_diff.channels + 1, lm.saab_diff.channels),
        ]
    )


def _regressor_input(features: np.ndarray, lm: LevelModel) -> np.ndarray:
    selected = np.asarray(features[:, lm.selected], dtype=np.float64)
    if lm.sfg.projections:
        generated = sfg.generate(selected, lm.sfg).values
        return np.concatenate([selected, generated], axis=1)
    return selected


def level_residual(lm: LevelModel, l_img: np.ndarray, p_prime: np.ndarray) -> np.ndarray:
    """Per-pixel residual estimate for one level, chunked over pixels so the
    full NC matrix is never materialized."""
    stacks = level_stacks(l_img, p_prime, lm)
    h, w = l_img.shape
    out = np.empty(h * w)
    for start in range(0, h * w, _PREDICT_CHUNK):
        idx = np.arange(start, min(start + _PREDICT_CHUNK, h * w))
        ys, xs = np.divmod(idx, w)
        feats = neighborhood_features(stacks, ys, xs, dtype=_FEATURE_DTYPE)
        out[idx] = gbrt.predict(lm.regressor, _regressor_input(feats, lm))
    return out.reshape(h, w)


def _grid_positions(h: int, w: int, cap: int, rng: np.random.Generator):
    """Seeded uniform pixel grid with at most ``cap`` positions."""
    total = h * w
    if total <= cap:
        idx = np.arange(total)
    else:
        stride = int(np.ceil(total / cap))
        idx = np.arange(int(rng.integers(stride)), total, stride)
    return np.divmod(idx, w)


def _sample_rows(h: int, w: int, fraction: float, rng: np.random.Generator):
    total = h * w
    m = max(1, int(round(fraction * total)))
    if m >= total:
        idx = np.arange(total)
    else:
        idx = np.sort(rng.choice(total, size=m, replace=False))
    return np.divmod(idx, w)


def _fit_level_saab(images: list[np.ndarray], window: int, cap: int, rng) -> SaabKernels:
    per_image = max(window * window, cap // len(images))
    chunks = []
    for img in images:
        ys, xs = _grid_positions(img.shape[0], img.shape[1], per_image, rng)
        chunks.append(extract_patches_at(img, ys, xs, window))
    return fit_saab(np.concatenate(chunks, axis=0), window)


def _retarget_codebook(book: cb.Codebook, l_patches: np.ndarray, n_patches: np.ndarray):
    """Variant: replace each centroid with the mean of the paired clean
    patches assigned to it (clusters still formed on degraded patches)."""
    assign = cb._pairwise_sq_dist(l_patches, book.centroids).argmin(axis=1)
    centroids = book.centroids.copy()
    for j in range(book.k):
        rows = np.flatnonzero(assign == j)
        if rows.size:
            centroids[j] = n_patches[rows].mean(axis=0)
    return cb.Codebook(centroids=centroids, patch=book.patch)


def train(pairs, cfg: TrainConfig | None = None) -> GuslModel:
    """Fit the full model from (degraded, clean) image pairs.

    Levels are processed coarsest-first; each level consumes the previous
    level's (upscaled) predictions, so the whole fit is a single feedforward
    pass. Deterministic for a fixed config seed.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    pairs = [(as_image(l), as_image(n)) for l, n in pairs]
    if not pairs:
        raise InvalidInputError("need at least one training pair")
    shape = pairs[0][0].shape
    for l_img, n_img in pairs:
        if l_img.shape != n_img.shape:
            raise ShapeMismatchError(f"pair dims differ: {l_img.shape} vs {n_img.shape}")
        if l_img.shape != shape:
            raise ShapeMismatchError(f"all pairs must share dims: {l_img.shape} vs {shape}")

    seeds = np.random.SeedSequence(cfg.seed)
    seed_codebook, *seed_levels = seeds.spawn(1 + cfg.level_count)

    l_pyrs = [build_pyramid(l, cfg.level_count) for l, _ in pairs]
    n_pyrs = [build_pyramid(n, cfg.level_count) for _, n in pairs]

    l_patches = np.concatenate([cb.image_patches(p[-1])[0] for p in l_pyrs], axis=0)
    k = min(cfg.codebook_k, l_patches.shape[0])
    book = cb.fit_codebook(l_patches, k, seed=int(seed_codebook.generate_state(1)[0]))
    if cfg.codebook_target_ndct:
        n_patches = np.concatenate([cb.image_patches(p[-1])[0] for p in n_pyrs], axis=0)
        book = _retarget_codebook(book, l_patches, n_patches)

    p_prime = [cb.quantize_predict(p[-1], book) for p in l_pyrs]

    fractions = cfg.subsample_fractions()
    diagnostics = TrainDiagnostics()
    level_models: list[LevelModel] = []
    for li in range(cfg.level_count - 1, -1, -1):  # 0-based, 0 = finest
        level_no = li + 1
        l_imgs = [p[li] for p in l_pyrs]
        n_imgs = [p[li] for p in n_pyrs]
        ss_sample, ss_joint, ss_gbrt = seed_levels[li].spawn(3)
        rng = np.random.default_rng(ss_sample)
        joint_seed = int(ss_joint.generate_state(1)[0])
        gbrt_seed = int(ss_gbrt.generate_state(1)[0])

        saab_ldct = _fit_level_saab(l_imgs, LDCT_WINDOW, cfg.saab_patch_cap, rng)
        diffs = [l - p for l, p in zip(l_imgs, p_prime)]
        saab_diff = _fit_level_saab(diffs, DIFF_WINDOW, cfg.saab_patch_cap, rng)

        stub = LevelModel(
            level=level_no,
            saab_ldct=saab_ldct,
            saab_diff=saab_diff,
            selected=np.empty(0, dtype=np.int64),
            sfg=sfg.SfgModel(),
            regressor=gbrt.GbrtModel(params=cfg.residual_gbrt, base_score=0.0),
        )
        feat_rows = []
        target_rows = []
        for l_img, n_img, p_img in zip(l_imgs, n_imgs, p_prime):
            ys, xs = _sample_rows(l_img.shape[0], l_img.shape[1], fractions[li], rng)
            stacks = level_stacks(l_img, p_img, stub)
            feat_rows.append(neighborhood_features(stacks, ys, xs, dtype=_FEATURE_DTYPE))
            target_rows.append((n_img - p_img)[ys, xs])
        features = np.concatenate(feat_rows, axis=0)
        targets = np.concatenate(target_rows, axis=0)
        del feat_rows, target_rows

        joint = rft.joint_rft(
            features, targets, bins=cfg.bins, split=cfg.split, seed=joint_seed
        )
        selected = joint.selected
        x_sel = np.asarray(features[:, selected], dtype=np.float64)

        sfg_model = sfg.fit_sfg(
            x_sel, targets, seed=gbrt_seed, params=cfg.aux_gbrt,
            fit_on_leaf_rows=cfg.lnt_fit_on_leaf_rows,
        )
        if sfg_model.degenerate:
            sfg_model = sfg.SfgModel(projections=[], source_dims=x_sel.shape[1])
            reg_input = x_sel
            lnt_losses = np.empty(0)
        else:
            generated = sfg.generate(x_sel, sfg_model).values
            reg_input = np.concatenate([x_sel, generated], axis=1)
            lnt_losses = rft.rft_losses(generated, targets, bins=cfg.bins)

        regressor = gbrt.fit(reg_input, targets, params=cfg.residual_gbrt, seed=gbrt_seed)

        lm = LevelModel(
            level=level_no,
            saab_ldct=saab_ldct,
            saab_diff=saab_diff,
            selected=np.asarray(selected, dtype=np.int64),
            sfg=sfg_model,
            regressor=regressor,
            sfg_degenerate=sfg_model.degenerate,
        )
        level_models.append(lm)
        diagnostics.levels.append(
            LevelDiagnostics(
                level=level_no,
                raw_losses=joint.losses_train,
                rank_train=joint.rank_train,
                rank_val=joint.rank_val,
                joint_score=joint.joint_score,
                threshold=joint.threshold,
                selected=lm.selected,
                selected_losses=joint.losses_train[selected],
                lnt_losses=lnt_losses,
                training_rows=targets.size,
            )
        )
        del features, targets, x_sel, reg_input

        preds = ordered_map(
            lambda args: compose_prediction(args[1], level_residual(lm, args[0], args[1]), clip=cfg.clip),
            list(zip(l_imgs, p_prime)),
        )
        if li > 0:
            next_dims = [p[li - 1].shape for p in l_pyrs]
            p_prime = [upscale(p, d[0], d[1]) for p, d in zip(preds, next_dims)]
        else:
            for p_final, (_, n_img) in zip(preds, pairs):
                err = float(np.mean((p_final - n_img) ** 2))
                diagnostics.train_psnr.append(
                    float("inf") if err == 0 else psnr(p_final, n_img)
                )

    return GuslModel(
        config=cfg,
        codebook=book,
        levels=level_models,
        diagnostics=diagnostics,
    )


def restore(model: GuslModel, ldct) -> np.ndarray:
    """Replay the per-level recursion with the stored models.

    Output dims equal input dims; with the default clip-on config every
    level's composition (and hence the output) stays in [0, 1].
    """
    if model.version != FORMAT_VERSION:
        raise IncompatibleModelError(
            f"model version {model.version!r} != supported {FORMAT_VERSION!r}"
        )
    ldct = as_image(ldct)
    cfg = model.config
    pyr = build_pyramid(ldct, cfg.level_count)
    p_prime = cb.quantize_predict(pyr[-1], model.codebook)
    pred = p_prime
    for lm in model.levels:  # coarsest -> finest
        li = lm.level - 1
        l_img = pyr[li]
        residual = level_residual(lm, l_img, p_prime)
        pred = compose_prediction(p_prime, residual, clip=cfg.clip)
        if li > 0:
            nh, nw = pyr[li - 1].shape
            p_prime = upscale(pred, nh, nw)
    return pred


@dataclass
class ComplexityReport:
    param_count: int
    macs_per_pixel: float
    breakdown: dict = field(default_factory=dict)


def report_complexity(model: GuslModel) -> ComplexityReport:
    """Parameter count and inference MACs per finest-level pixel.

    Counting rules (fixed):
      params: every Saab kernel entry counts 1; every LNT projection counts
      |subset| weights + 1 intercept; every tree node counts 2 (internal:
      split feature index + threshold, leaf: weight + its serialized layout
      slot); the codebook counts k * 16.
      MACs/pixel: per level, scaled by 4^-(level-1): each filter bank costs
      W^2 * C per pixel (raw channel is a copy, cost 0), each LNT projection
      costs |subset| multiply-adds, and each regressor tree costs its actual
      depth in threshold comparisons (1 MAC each); the codebook costs 16 * k
      distance MACs per coarsest-level pixel, scaled by that level's factor.
    """
    params = model.codebook.centroids.size
    macs = 0.0
    breakdown = {"codebook_params": int(params)}
    coarsest_scale = 4.0 ** -(model.config.level_count - 1)
    macs += 16.0 * model.codebook.k * coarsest_scale
    breakdown["codebook_macs"] = 16.0 * model.codebook.k * coarsest_scale
    for lm in model.levels:
        scale = 4.0 ** -(lm.level - 1)
        saab_params = lm.saab_ldct.kernels.size + lm.saab_diff.kernels.size
        lnt_params = sum(p.weights.size + 1 for p in lm.sfg.projections)
        tree_nodes = sum(t.node_count for t in lm.regressor.trees)
        params += saab_params + lnt_params + 2 * tree_nodes

        pu = (
            lm.saab_ldct.window ** 2 * lm.saab_ldct.channels
            + lm.saab_diff.window ** 2 * lm.saab_diff.channels
        )
        lnt = sum(p.subset.size for p in lm.sfg.projections)
        trees = sum(t.depth() for t in lm.regressor.trees)
        macs += scale * (pu + lnt + trees)
        breakdown[f"level{lm.level}_params"] = saab_params + lnt_params + 2 * tree_nodes
        breakdown[f"level{lm.level}_macs"] = scale * (pu + lnt + trees)
    return ComplexityReport(param_count=int(params), macs_per_pixel=float(macs), breakdown=breakdown)


def with_config(cfg: TrainConfig, **kwargs) -> TrainConfig:
    return replace(cfg, **kwargs)
