"""Batch runs behind the CLI: configuration, per-scene pipeline, report writers.

Every ``run_*`` function computes all results in memory first and writes files
only after every scene succeeded, so a failing run leaves no partial outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import gradcheck, losses
from .adapter import (
    AdapterWeights,
    CrossAttentionWeights,
    SpatialFeatureMap,
    binarize_masks,
    cross_attend,
    mask_pool,
    spatial_project,
)
from .concepts import ConceptSet, build_similarity_profile, build_tree, validate_tree
from .errors import MissingCounterpart, NumericalCheckFailed, StageError, ValidationError
from .fixtures import FixtureSpec, Scene, Xoshiro256, generate_scene
from .inference import (
    InferenceParams,
    PanopticResult,
    filter_proposals,
    hierarchical_classify,
    panoptic_merge,
    score_proposals,
    semantic_merge,
)
from .io import (
    list_panoptic_ids,
    load_tensor,
    read_concept_set,
    read_json,
    read_panoptic,
    read_tree,
    store_tensor,
    write_concept_set,
    write_csv,
    write_json,
    write_panoptic,
    write_tree,
)
from .matching import GroundTruthSet, LossWeights, assignment_cost_matrix, hungarian, iou_targets
from .metrics import IoUAccumulator, PQAccumulator, similarity_stats
from .modulation import ModulationParams, modulate
from .tensor import l2_normalize, sigmoid_map, tempered_softmax

log = logging.getLogger("ovps")

SCHEMA_VERSION = 1
POOL_MODES = ("soft", "binary")
SUM_NORMS = ("mse", "l2")


@dataclass(frozen=True)
class LossConfig:
    weights: LossWeights = LossWeights()
    valid_iou_threshold: float = 0.5
    match_tau: float = 0.01
    sum_norm: str = "mse"

    def __post_init__(self):
        if self.sum_norm not in SUM_NORMS:
            raise ValidationError(f"sum_norm must be one of {SUM_NORMS}, got {self.sum_norm!r}")


@dataclass
class RunConfig:
    """Resolved run configuration; relative paths are anchored at the config file."""

    scenes: list[Path]
    predicting_concepts: Path
    training_concepts: Path
    tree: Path | None = None
    adapter: Path | None = None
    cross_attention: Path | None = None
    pool_mode: str = "soft"
    modulation: ModulationParams = ModulationParams()
    inference: InferenceParams = InferenceParams()
    losses: LossConfig = LossConfig()
    output_dir: Path | None = None
    base_dir: Path | None = None

    def _rel(self, path: Path | None) -> str | None:
        if path is None:
            return None
        if self.base_dir is None:
            return str(path)
        return Path(os.path.relpath(path, self.base_dir)).as_posix()

    def semantic_dict(self) -> dict:
        """Every field that affects results, with defaults filled in.

        Paths are relative to the config file so a relocated corpus hashes the same.
        """
        return {
            "scenes": [self._rel(p) for p in self.scenes],
            "predicting_concepts": self._rel(self.predicting_concepts),
            "training_concepts": self._rel(self.training_concepts),
            "tree": self._rel(self.tree),
            "adapter": self._rel(self.adapter),
            "cross_attention": self._rel(self.cross_attention),
            "pool_mode": self.pool_mode,
            "modulation": dataclasses.asdict(self.modulation),
            "inference": dataclasses.asdict(self.inference),
            "losses": {
                **dataclasses.asdict(self.losses.weights),
                "valid_iou_threshold": self.losses.valid_iou_threshold,
                "match_tau": self.losses.match_tau,
                "sum_norm": self.losses.sum_norm,
            },
        }

    def config_hash(self) -> str:
        from .io import dumps_json

        return hashlib.sha256(dumps_json(self.semantic_dict()).encode()).hexdigest()


def _build(cls, section: dict | None, where: str):
    section = dict(section or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ValidationError(f"{where}: unknown keys {unknown}")
    for f in dataclasses.fields(cls):
        # JSON writes 10.0 as 10; keep float fields float so hashes and echoes agree
        if f.name in section and isinstance(f.default, float) and type(section[f.name]) is int:
            section[f.name] = float(section[f.name])
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    doc = read_json(path)
    base = path.parent

    def resolve(ref):
        if ref is None:
            return None
        p = Path(ref)
        return p if p.is_absolute() else base / p

    known = {"scenes", "scene_dir", "predicting_concepts", "training_concepts", "tree", "adapter",
             "cross_attention", "pool_mode", "modulation", "inference", "losses", "output_dir"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"{path}: unknown keys {unknown}")
    for key in ("predicting_concepts", "training_concepts"):
        if key not in doc:
            raise ValidationError(f"{path}: missing required key {key!r}")

    if "scenes" in doc:
        scenes = [resolve(s) for s in doc["scenes"]]
    elif "scene_dir" in doc:
        scene_dir = resolve(doc["scene_dir"])
        if not scene_dir.is_dir():
            raise ValidationError(f"missing scene directory: {scene_dir}")
        scenes = sorted(p for p in scene_dir.iterdir() if p.is_dir())
    else:
        scenes = []

    loss_doc = dict(doc.get("losses") or {})
    loss_keys = {f.name for f in dataclasses.fields(LossWeights)}
    weights = _build(LossWeights, {k: v for k, v in loss_doc.items() if k in loss_keys}, "losses")
    loss_cfg = _build(LossConfig, {k: v for k, v in loss_doc.items() if k not in loss_keys}, "losses")
    loss_cfg = dataclasses.replace(loss_cfg, weights=weights)

    pool_mode = doc.get("pool_mode", "soft")
    if pool_mode not in POOL_MODES:
        raise ValidationError(f"pool_mode must be one of {POOL_MODES}, got {pool_mode!r}")

    cfg = RunConfig(
        scenes=scenes,
        predicting_concepts=resolve(doc["predicting_concepts"]),
        training_concepts=resolve(doc["training_concepts"]),
        tree=resolve(doc.get("tree")),
        adapter=resolve(doc.get("adapter")),
        cross_attention=resolve(doc.get("cross_attention")),
        pool_mode=pool_mode,
        modulation=_build(ModulationParams, doc.get("modulation"), "modulation"),
        inference=_build(InferenceParams, doc.get("inference"), "inference"),
        losses=loss_cfg,
        output_dir=resolve(doc.get("output_dir")),
        base_dir=base,
    )
    validate_paths(cfg)
    return cfg


SCENE_REQUIRED = ("features.npy", "mask_logits.npy", "queries.npy", "iou_scores.npy")


def validate_paths(cfg: RunConfig) -> None:
    """Check that every referenced file exists before anything is computed."""
    missing = []
    for p in (cfg.predicting_concepts, cfg.training_concepts):
        if not p.is_file():
            missing.append(p)
        else:
            ref = read_json(p).get("embedding_file")
            if ref is None or not (p.parent / ref).is_file():
                missing.append(p.parent / str(ref))
    if cfg.tree is not None and not cfg.tree.is_file():
        missing.append(cfg.tree)
    if cfg.adapter is not None:
        missing += [cfg.adapter / f for f in ("v_proj.npy", "v_bias.npy", "c_proj.npy", "c_bias.npy")
                    if not (cfg.adapter / f).is_file()]
    if cfg.cross_attention is not None:
        missing += [cfg.cross_attention / f for f in ("w_q.npy", "w_k.npy", "w_v.npy", "w_o.npy")
                    if not (cfg.cross_attention / f).is_file()]
    for scene in cfg.scenes:
        if not scene.is_dir():
            missing.append(scene)
            continue
        missing += [scene / f for f in SCENE_REQUIRED if not (scene / f).is_file()]
    if missing:
        raise ValidationError("missing input file(s): " + ", ".join(str(m) for m in missing))


@dataclass
class SceneInputs:
    image_id: str
    features: np.ndarray
    mask_logits: np.ndarray
    queries: np.ndarray
    iou_scores: np.ndarray
    positional: np.ndarray | None = None
    gt_masks: np.ndarray | None = None
    gt_labels: np.ndarray | None = None
    image_labels: np.ndarray | None = None


def load_scene(directory: Path) -> SceneInputs:
    directory = Path(directory)

    def opt(name):
        p = directory / name
        return load_tensor(p) if p.is_file() else None

    return SceneInputs(
        image_id=directory.name,
        features=load_tensor(directory / "features.npy"),
        mask_logits=load_tensor(directory / "mask_logits.npy"),
        queries=load_tensor(directory / "queries.npy"),
        iou_scores=load_tensor(directory / "iou_scores.npy").ravel(),
        positional=opt("positional.npy"),
        gt_masks=opt("gt_masks.npy"),
        gt_labels=None if opt("gt_labels.npy") is None else opt("gt_labels.npy").astype(np.int64).ravel(),
        image_labels=None if opt("image_labels.npy") is None else opt("image_labels.npy").astype(np.int64).ravel(),
    )


def write_scene(directory: Path, scene: Scene, training: ConceptSet | None = None) -> None:
    """Serialize a synthetic scene in the layout :func:`load_scene` reads.

    ``gt_labels.npy`` indexes the training concept set (it feeds the losses);
    labels whose category is not in training are written as -1.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    store_tensor(directory / "features.npy", scene.features)
    store_tensor(directory / "mask_logits.npy", scene.mask_logits)
    store_tensor(directory / "queries.npy", scene.queries)
    store_tensor(directory / "iou_scores.npy", scene.iou_scores)
    store_tensor(directory / "gt_masks.npy", scene.gt_masks)
    training = training or scene.training
    names = [scene.predicting.names[i] for i in scene.gt_labels]
    train_idx = np.array([training.names.index(n) if n in training.names else -1 for n in names], dtype=np.int32)
    store_tensor(directory / "gt_labels.npy", train_idx)
    store_tensor(directory / "image_labels.npy", np.unique(train_idx[train_idx >= 0]).astype(np.int32))


@dataclass
class Resources:
    predicting: ConceptSet
    training: ConceptSet
    adapter: AdapterWeights | None
    cross: CrossAttentionWeights | None


def load_resources(cfg: RunConfig) -> Resources:
    adapter = cross = None
    if cfg.adapter is not None:
        adapter = AdapterWeights(*(load_tensor(cfg.adapter / f) for f in
                                   ("v_proj.npy", "v_bias.npy", "c_proj.npy", "c_bias.npy")))
    if cfg.cross_attention is not None:
        cross = CrossAttentionWeights(*(load_tensor(cfg.cross_attention / f) for f in
                                        ("w_q.npy", "w_k.npy", "w_v.npy", "w_o.npy")))
    return Resources(
        predicting=read_concept_set(cfg.predicting_concepts, role="predicting"),
        training=read_concept_set(cfg.training_concepts, role="training"),
        adapter=adapter,
        cross=cross,
    )


@dataclass
class SceneOutput:
    image_id: str
    panoptic: PanopticResult
    semantic: np.ndarray
    proposals: list[dict]
    modulated: np.ndarray
    kept_indices: list[int]
    seconds: float = 0.0


def _stage(image_id: str, stage: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # annotate any module error with where it happened
        raise StageError(image_id, stage, exc) from exc


def classify_scene(scene: SceneInputs, res: Resources, profile, cfg: RunConfig) -> SceneOutput:
    """Project, pool, (cross-attend), modulate, classify, filter and merge one scene."""
    t0 = time.perf_counter()
    iid = scene.image_id
    fmap = _stage(iid, "load", SpatialFeatureMap, scene.features, scene.positional)
    adapter = res.adapter or AdapterWeights.identity(fmap.features.shape[2])
    projected = _stage(iid, "spatial_project", spatial_project, fmap, adapter)
    if cfg.pool_mode == "binary":
        weights = _stage(iid, "mask_pool", binarize_masks, scene.mask_logits, cfg.inference.mask_bin_threshold)
    else:
        weights = _stage(iid, "mask_pool", sigmoid_map, scene.mask_logits)
    clip = _stage(iid, "mask_pool", mask_pool, projected, weights)
    queries = scene.queries
    if res.cross is not None:
        queries = _stage(iid, "cross_attend", cross_attend, queries, projected, res.cross)
    bundle = _stage(iid, "modulate", modulate, queries, clip, res.predicting, profile, cfg.modulation)
    scored = _stage(iid, "filter_proposals", score_proposals, scene.mask_logits, bundle.probs, bundle.labels,
                    scene.iou_scores, cfg.inference.scoring, bundle.modulated)
    kept = filter_proposals(scored, cfg.inference.score_threshold)
    pan = _stage(iid, "panoptic_merge", panoptic_merge, kept, res.predicting.is_thing, cfg.inference,
                 shape=scene.mask_logits.shape[1:])
    kept_set = {p.index for p in kept}
    proposals = [
        {"index": p.index, "label": p.label, "category": res.predicting.names[p.label],
         "score": p.score, "iou_score": p.iou_score, "kept": p.index in kept_set}
        for p in scored
    ]
    return SceneOutput(
        image_id=iid, panoptic=pan, semantic=semantic_merge(pan), proposals=proposals,
        modulated=bundle.modulated, kept_indices=[p.index for p in kept],
        seconds=time.perf_counter() - t0,
    )


def _map(fn, items: Sequence, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _loaded_scenes(cfg: RunConfig, threads: int) -> list[SceneInputs]:
    def load(path):
        try:
            return load_scene(path)
        except Exception as exc:
            raise StageError(Path(path).name, "load", exc) from exc

    return _map(load, cfg.scenes, threads)


def _params_echo(cfg: RunConfig) -> dict:
    w = cfg.losses.weights
    return {
        "modulation": dataclasses.asdict(cfg.modulation),
        "decoupled_supervision": {"w_match": w.w_match, "w_sum": w.w_sum},
        "inference": dataclasses.asdict(cfg.inference),
        "pool_mode": cfg.pool_mode,
        "cross_attention": cfg.cross_attention is not None,
    }


def run_classify(cfg: RunConfig, out_dir, threads: int = 1, record_timings: bool = False) -> dict:
    """Classify every scene and write panoptic/semantic results plus ``manifest.json``."""
    res = load_resources(cfg)
    profile = build_similarity_profile(res.predicting, res.training)
    scenes = _loaded_scenes(cfg, threads)
    outputs = _map(lambda s: classify_scene(s, res, profile, cfg), scenes, threads)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = []
    for o in outputs:
        write_panoptic(out, o.image_id, o.panoptic)
        store_tensor(out / f"{o.image_id}_semantic.npy", o.semantic)
        write_json(out / f"{o.image_id}_proposals.json", {"proposals": o.proposals})
        entry = {"id": o.image_id, "num_proposals": len(o.proposals),
                 "num_kept": len(o.kept_indices), "num_segments": len(o.panoptic.segments)}
        if record_timings:
            entry["seconds"] = o.seconds
        images.append(entry)
    manifest = {
        "schema": SCHEMA_VERSION,
        "command": "classify",
        "config_hash": cfg.config_hash(),
        "domain_similarity": profile.domain_similarity,
        "params": _params_echo(cfg),
        "images": images,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def run_hierarchy(cfg: RunConfig, out_dir, threads: int = 1) -> dict:
    """Root-to-leaf category paths for every kept proposal."""
    if cfg.tree is None:
        raise ValidationError("hierarchy needs a 'tree' entry in the config")
    tree = read_tree(cfg.tree)
    validate_tree(tree)
    res = load_resources(cfg)
    dims = {n.embedding.shape[0] for n in tree.nodes.values()}
    if dims != {res.predicting.dim}:
        raise ValidationError(f"tree embedding width {sorted(dims)} != concept width {res.predicting.dim}")
    profile = build_similarity_profile(res.predicting, res.training)
    scenes = _loaded_scenes(cfg, threads)

    def run(scene):
        o = classify_scene(scene, res, profile, cfg)
        paths = [{"index": k, "path": hierarchical_classify(o.modulated[k], tree)} for k in o.kept_indices]
        return {"id": o.image_id, "proposals": paths}

    doc = {"schema": SCHEMA_VERSION, "command": "hierarchy", "config_hash": cfg.config_hash(),
           "images": _map(run, scenes, threads)}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "hierarchy.json", doc)
    return doc


def run_eval(pred_dir, gt_dir, concepts: ConceptSet, out_dir, threads: int = 1,
             figures: bool = True) -> dict:
    """Aggregate PQ and mIoU over the images present in both directories."""
    pred_ids, gt_ids = set(list_panoptic_ids(pred_dir)), set(list_panoptic_ids(gt_dir))
    lonely = sorted(pred_ids ^ gt_ids)
    if lonely or not pred_ids:
        raise MissingCounterpart(
            "no counterpart for: " + (", ".join(lonely) if lonely else "(no panoptic files found)")
        )
    ids = sorted(pred_ids)
    n = len(concepts)

    def one(image_id):
        pred, gt = read_panoptic(pred_dir, image_id), read_panoptic(gt_dir, image_id)
        pq = PQAccumulator(n).add(pred, gt)
        iou = IoUAccumulator(n).add(semantic_merge(pred), semantic_merge(gt))
        return pq, iou

    parts = _map(one, ids, threads)
    pq_acc, iou_acc = PQAccumulator(n), IoUAccumulator(n)
    for pq, iou in parts:  # fixed order keeps float sums reproducible
        pq_acc.merge(pq)
        iou_acc.merge(iou)
    report = pq_acc.report(concepts.is_thing)
    miou, per_class = iou_acc.result()

    doc = {"schema": SCHEMA_VERSION, "command": "eval", "images": ids, **report.to_dict(),
           "miou": miou, "per_class_iou": [None if np.isnan(v) else float(v) for v in per_class]}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "eval_report.json", doc)
    write_csv(out / "eval_per_category.csv",
              ["category", "name", "is_thing", "pq", "sq", "rq", "tp", "fp", "fn", "iou"],
              [[c, concepts.names[c], int(concepts.is_thing[c]), v.pq, v.sq, v.rq, v.tp, v.fp, v.fn,
                "" if np.isnan(per_class[c]) else per_class[c]]
               for c, v in sorted(report.per_category.items())])
    if figures and report.per_category:
        from .plotting import plot_pq_by_category

        plot_pq_by_category(report, concepts.names, out / "eval_pq.png")
    return doc


def scene_losses(scene: SceneInputs, res: Resources, cfg: RunConfig) -> dict:
    """Hungarian-matched mask/class losses, IoU-head loss and the two image-level losses."""
    iid = scene.image_id
    if scene.gt_masks is None or scene.gt_labels is None:
        raise StageError(iid, "losses", ValidationError("scene has no gt_masks.npy / gt_labels.npy"))
    lc = cfg.losses
    w = lc.weights
    text = res.training.embeddings
    gts = _stage(iid, "losses", GroundTruthSet, scene.gt_masks, scene.gt_labels)
    # training-time classification: the predicting set is the training set, so E_m = E_q
    queries = scene.queries
    if res.cross is not None:
        fmap = SpatialFeatureMap(scene.features, scene.positional)
        projected = spatial_project(fmap, res.adapter or AdapterWeights.identity(fmap.features.shape[2]))
        queries = _stage(iid, "cross_attend", cross_attend, queries, projected, res.cross)
    emb = l2_normalize(queries)
    probs = tempered_softmax(np.clip(emb @ text.T, -1, 1), cfg.modulation.tau)
    mask_probs = sigmoid_map(scene.mask_logits)
    cost = _stage(iid, "matching", assignment_cost_matrix, probs, mask_probs, gts, w)
    assignment = _stage(iid, "matching", hungarian, cost)

    pairs = assignment.pairs
    dice = float(np.mean([losses.dice_loss(mask_probs[p], gts.masks[g]) for p, g in pairs])) if pairs else 0.0
    bce = float(np.mean([losses.bce_loss(mask_probs[p], gts.masks[g]) for p, g in pairs])) if pairs else 0.0
    ce = float(np.mean([losses.ce_classification_loss(probs[p], int(gts.category_ids[g]))
                        for p, g in pairs])) if pairs else 0.0
    binary = binarize_masks(scene.mask_logits, cfg.inference.mask_bin_threshold)
    targets = iou_targets(assignment, binary, gts)
    iou_l2 = losses.iou_l2_loss(scene.iou_scores, targets)

    valid = np.flatnonzero(scene.iou_scores >= lc.valid_iou_threshold)
    labels = scene.image_labels if scene.image_labels is not None else np.unique(gts.category_ids)
    if valid.size == 0:
        l_match = 1.0  # no valid prediction can match any label
    else:
        l_match = _stage(iid, "match_loss", losses.match_loss, emb[valid], text, labels.tolist(), lc.match_tau)
    l_sum = losses.sum_loss(scene.mask_logits, lc.sum_norm)

    total = (w.w_ce * ce + w.w_dice * dice + w.w_bce * bce + w.w_iou * iou_l2
             + w.w_match * l_match + w.w_sum * l_sum)
    return {
        "id": iid,
        "pairs": [list(p) for p in pairs],
        "dice": dice, "bce": bce, "ce": ce, "iou_l2": iou_l2,
        "match": l_match, "sum": l_sum, "total": total,
        "valid_predictions": int(valid.size),
    }


def run_losses(cfg: RunConfig, out_dir, threads: int = 1, gradcheck_seed: int | None = None,
               gradcheck_points: int = 10) -> dict:
    res = load_resources(cfg)
    scenes = _loaded_scenes(cfg, threads)
    per_image = _map(lambda s: scene_losses(s, res, cfg), scenes, threads)
    keys = ("dice", "bce", "ce", "iou_l2", "match", "sum", "total")
    mean = {k: float(np.mean([r[k] for r in per_image])) if per_image else 0.0 for k in keys}
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "losses",
        "config_hash": cfg.config_hash(),
        "weights": dataclasses.asdict(cfg.losses.weights),
        "mean": mean,
        "images": per_image,
    }
    failed = []
    if gradcheck_seed is not None:
        errors = {}
        for i, loss_id in enumerate(gradcheck.LOSSES):
            err = gradcheck.check_loss_random(loss_id, gradcheck_seed + i, gradcheck_points)
            errors[loss_id] = err
            if not err < gradcheck.TOLERANCE:
                failed.append(loss_id)
        doc["gradcheck"] = {"seed": gradcheck_seed, "points": gradcheck_points,
                            "tolerance": gradcheck.TOLERANCE, "max_rel_error": errors}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "losses.json", doc)
    if failed:
        raise NumericalCheckFailed(f"gradient check failed for: {', '.join(failed)}")
    return doc


def run_simstats(concepts_path, out_dir, figures: bool = True) -> dict:
    concepts = read_concept_set(concepts_path)
    stats = similarity_stats(concepts.embeddings)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema": SCHEMA_VERSION, "command": "simstats", "source": Path(concepts_path).name,
           "num_categories": len(concepts), **stats.to_dict()}
    write_json(out / "simstats.json", doc)
    write_csv(out / "simstats.csv", ["bin_low", "bin_high", "count"], stats.rows())
    if figures:
        from .plotting import plot_similarity_histogram

        plot_similarity_histogram(stats, out / "simstats.png", title=Path(concepts_path).stem)
    return doc


def synthetic_tree(concepts: ConceptSet):
    """Synthetic root -> thing/stuff -> categories, group embeddings = normalized member mean."""
    records = [{"id": 0, "name": "root", "parent": None, "synthetic": True}]
    groups = {"thing": [i for i, t in enumerate(concepts.is_thing) if t],
              "stuff": [i for i, t in enumerate(concepts.is_thing) if not t]}
    dim = concepts.dim
    next_id = 1
    group_rows = []
    for name, members in groups.items():
        if not members:
            continue
        v = concepts.embeddings[members].mean(axis=0)
        gid = next_id
        next_id += 1
        records.append({"id": gid, "name": name, "parent": 0})
        group_rows.append(v / np.linalg.norm(v))
        for m in members:
            records.append({"id": next_id, "name": concepts.names[m], "parent": gid})
            group_rows.append(concepts.embeddings[m])
            next_id += 1
    rows = [np.eye(dim)[0]] + group_rows
    return build_tree(records, np.stack(rows))


def run_genfix(out_dir, seed: int = 0, count: int = 2, spec: FixtureSpec | None = None) -> dict:
    """Write concept sets, scenes, ground truth, a category tree and a ready config."""
    base = spec or FixtureSpec(seed=seed)
    base = dataclasses.replace(base, seed=seed)
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)

    from .fixtures import _concepts_for

    training, predicting = _concepts_for(base, Xoshiro256(seed))
    write_concept_set(out / "predicting.json", predicting)
    write_concept_set(out / "training.json", training)
    write_tree(out / "tree.json", synthetic_tree(predicting))

    ids = []
    for i in range(count):
        scene_spec = dataclasses.replace(base, seed=seed + 1 + i)
        scene = generate_scene(scene_spec, concepts=(training, predicting), image_id=f"scene_{i:03d}")
        write_scene(out / "scenes" / scene.image_id, scene, training)
        write_panoptic(out / "gt", scene.image_id, scene.gt_panoptic)
        ids.append(scene.image_id)
    config = {
        "scene_dir": "scenes",
        "predicting_concepts": "predicting.json",
        "training_concepts": "training.json",
        "tree": "tree.json",
    }
    write_json(out / "config.json", config)
    doc = {"schema": SCHEMA_VERSION, "command": "genfix", "seed": seed,
           "spec": dataclasses.asdict(base), "scenes": ids}
    write_json(out / "fixtures.json", doc)
    return doc
