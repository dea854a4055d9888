"""Command line entry point.

Subcommands compose the library into reproducible file-to-file runs:
segment, exchange, scannet-c, affinity, metrics, ratio, loss, overlap,
and mix3d. Every run with a fixed seed writes byte-identical outputs.
Failures print a one-line JSON object to stderr; exit code 2 flags a
usage problem, 3 a data problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, exchange, formats, objective, segmentation
from ._version import VERSION
from .config import PipelineConfig, config_hash
from .errors import NoLabels, PcxError
from .geometry import PointCloud, estimate_normals


class UsageProblem(ValueError):
    """Bad flag values detected after argparse."""


def _load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    raw = formats.read_json(path)
    try:
        return PipelineConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageProblem(f"bad config {path}: {exc}") from exc


def _scene_segmentation(cloud: PointCloud, seg_path: Optional[str],
                        cfg: PipelineConfig) -> segmentation.SceneSegmentation:
    """Cluster ids from a sidecar, the PLY itself, or a fresh run."""
    if seg_path is not None:
        ids = formats.read_clusters(seg_path)
        if len(ids) != len(cloud):
            raise UsageProblem(
                f"{seg_path} holds {len(ids)} ids for a {len(cloud)}-point scene")
        return segmentation.segmentation_from_clusters(cloud, ids)
    if cloud.clusters is not None:
        return segmentation.segmentation_from_clusters(cloud, cloud.clusters)
    return segmentation.segment_scene(
        cloud, threshold=cfg.threshold, knn_k=cfg.knn_k,
        radius_cap=cfg.radius_cap, min_points=cfg.min_points)


def _mirror_optionals(new: PointCloud, template: PointCloud) -> PointCloud:
    """Keep only the optional fields the template scene carried."""
    return PointCloud(
        positions=new.positions,
        colors=new.colors,
        normals=new.normals if template.normals is not None else None,
        labels=new.labels if template.labels is not None else None,
        clusters=new.clusters if template.clusters is not None else None,
        scene_id=new.scene_id,
    )


def _cmd_segment(args) -> int:
    cfg = _load_config(args.config)
    cloud = formats.read_ply(args.input)
    if cloud.normals is None:
        normals, _ = estimate_normals(cloud, k=cfg.knn_k)
        cloud.normals = normals
    features = formats.read_features(args.features) if args.features else None
    alpha = args.alpha if args.alpha is not None else cfg.alpha_at(args.progress)
    seg = segmentation.segment_scene(
        cloud, features=features, alpha=alpha, threshold=cfg.threshold,
        knn_k=cfg.knn_k, radius_cap=cfg.radius_cap, min_points=cfg.min_points)
    formats.write_clusters(seg.cluster_of, args.out)
    formats.write_provenance(
        str(args.out) + ".provenance.json", seed=cfg.seed,
        config_hash=config_hash({**cfg.to_dict(), "alpha": alpha}))
    return 0


def _cmd_exchange(args) -> int:
    cfg = PipelineConfig()
    cloud_a = formats.read_ply(args.a)
    cloud_b = formats.read_ply(args.b)
    seg_a = _scene_segmentation(cloud_a, args.seg_a, cfg)
    seg_b = _scene_segmentation(cloud_b, args.seg_b, cfg)
    plan = exchange.plan_exchange(seg_a, seg_b, beta=args.beta, seed=args.seed)
    new_a, new_b, mask_a, mask_b = exchange.exchange_objects(
        cloud_a, seg_a, cloud_b, seg_b, plan)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_ply(_mirror_optionals(new_a, cloud_a), out / "new_a.ply",
                      encoding=formats.ply_encoding(args.a))
    formats.write_ply(_mirror_optionals(new_b, cloud_b), out / "new_b.ply",
                      encoding=formats.ply_encoding(args.b))
    formats.write_masks(mask_a, out / "mask_a.bin")
    formats.write_masks(mask_b, out / "mask_b.bin")
    formats.write_provenance(
        out / "provenance.json", seed=args.seed,
        config_hash=config_hash({"beta": args.beta, "seed": args.seed}))
    return 0


def _load_dataset(manifest_path: str, need_labels: bool):
    manifest = formats.load_manifest(manifest_path)
    scenes = []
    for entry in manifest.scenes:
        cloud = formats.read_ply(entry.cloud)
        cloud.scene_id = entry.scene_id
        if need_labels and cloud.labels is None:
            raise NoLabels(f"scene {entry.scene_id} has no labels")
        scenes.append((entry, cloud))
    return scenes


def _cmd_scannet_c(args) -> int:
    cfg = PipelineConfig()
    pairs = _load_dataset(args.manifest, need_labels=False)
    dataset = []
    for entry, cloud in pairs:
        seg_path = str(entry.segmentation) if entry.segmentation else None
        dataset.append((cloud, _scene_segmentation(cloud, seg_path, cfg)))
    clouds, masks = exchange.make_corrupted_dataset(dataset, args.delta, seed=args.seed)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for (entry, _), cloud, mask in zip(pairs, clouds, masks):
        formats.write_ply(cloud, out / f"{entry.scene_id}.ply")
        formats.write_masks(mask, out / f"{entry.scene_id}.mask.bin")
    formats.write_provenance(
        out / "provenance.json", seed=args.seed,
        config_hash=config_hash({"delta": args.delta, "seed": args.seed}))
    return 0


def _cmd_affinity(args) -> int:
    pairs = _load_dataset(args.manifest, need_labels=True)
    amap = analysis.cooccurrence_affinity([cloud for _, cloud in pairs])
    lines = ["class," + ",".join(str(int(c)) for c in amap.classes)]
    for i, cls in enumerate(amap.classes):
        row = ",".join(f"{v:.10g}" for v in amap.matrix[i])
        lines.append(f"{int(cls)},{row}")
    formats.atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode("ascii"))
    return 0


def _cmd_metrics(args) -> int:
    pred = formats.read_labels(args.pred)
    gt = formats.read_labels(args.gt)
    result = analysis.seg_metrics(pred, gt)
    formats.write_json(
        {
            "acc": result.acc,
            "miou": result.miou,
            "per_class_iou": {str(k): v for k, v in result.per_class_iou.items()},
        },
        args.out,
    )
    return 0


def _metrics_from_json(path: str) -> analysis.SegMetrics:
    raw = formats.read_json(path)
    if not isinstance(raw, dict) or "miou" not in raw:
        raise UsageProblem(f"{path} is not a metrics file (missing 'miou')")
    per_class = {int(k): float(v) for k, v in raw.get("per_class_iou", {}).items()}
    return analysis.SegMetrics(per_class_iou=per_class,
                               miou=float(raw["miou"]),
                               acc=float(raw.get("acc", 0.0)))


def _cmd_ratio(args) -> int:
    corrupted = _metrics_from_json(args.corrupted)
    clean = _metrics_from_json(args.clean)
    value = analysis.robustness_ratio(corrupted, clean)
    print(json.dumps({"ratio": value}, sort_keys=True))
    return 0


def _split_pair(flag: str, value: str) -> tuple[str, str]:
    parts = value.split(",")
    if len(parts) != 2:
        raise UsageProblem(f"{flag} expects two comma-separated paths")
    return parts[0], parts[1]


def _read_bundle(flag: str, value: str) -> objective.FeatureBundle:
    feat_path, clus_path = _split_pair(flag, value)
    feats = formats.read_features(feat_path).astype(np.float64)
    ids = formats.read_clusters(clus_path)
    if len(ids) != len(feats):
        raise UsageProblem(f"{flag}: {len(feats)} feature rows vs {len(ids)} cluster ids")
    return objective.FeatureBundle.from_points(feats, ids)


def _cluster_mask_votes(bundle: objective.FeatureBundle, mask: np.ndarray) -> np.ndarray:
    """Per-cluster verdict: True when every member point is imported."""
    m = bundle.cluster_features.shape[0]
    votes = np.zeros(m, dtype=bool)
    for c in range(m):
        member_mask = mask[bundle.cluster_of == c]
        votes[c] = bool(member_mask.all()) and len(member_mask) > 0
    return votes


def _cmd_loss(args) -> int:
    bundle_a = _read_bundle("--bundle-a", args.bundle_a)
    bundle_b = _read_bundle("--bundle-b", args.bundle_b)
    mask_a_path, mask_b_path = _split_pair("--masks", args.masks)
    mask_a = formats.read_masks(mask_a_path)
    mask_b = formats.read_masks(mask_b_path)
    if len(mask_a) != len(bundle_a.cluster_of) or len(mask_b) != len(bundle_b.cluster_of):
        raise UsageProblem("mask lengths must match their bundles")
    m_a = bundle_a.cluster_features.shape[0]
    m_b = bundle_b.cluster_features.shape[0]
    if m_a != m_b:
        raise UsageProblem(
            f"views disagree on cluster count ({m_a} vs {m_b}); "
            "the two bundles must describe the same mixed scene")

    exchanged_a = _cluster_mask_votes(bundle_a, mask_a)
    exchanged_b = _cluster_mask_votes(bundle_b, mask_b)
    ex_ids = [c for c in range(m_a) if exchanged_a[c] and exchanged_b[c]]
    ctx_ids = [c for c in range(m_a) if not exchanged_a[c] and not exchanged_b[c]]

    ex_pairs = [(c, c) for c in ex_ids]
    ctx_pairs = [(c, c) for c in ctx_ids]
    l_op = objective.object_pattern_loss(
        [(bundle_a, bundle_b, ex_pairs), (bundle_b, bundle_a, ex_pairs)])
    l_ctx = objective.context_loss(
        [(bundle_a, bundle_b, ctx_pairs), (bundle_b, bundle_a, ctx_pairs)])
    if args.logits is not None:
        la_path, lb_path = _split_pair("--logits", args.logits)
        la = formats.read_features(la_path).astype(np.float64)
        lb = formats.read_features(lb_path).astype(np.float64)
        l_aux = objective.aux_loss(la, mask_a) + objective.aux_loss(lb, mask_b)
    else:
        l_aux = 0.0

    try:
        lam, gam = (float(x) for x in args.weights.split(","))
    except ValueError as exc:
        raise UsageProblem("--weights expects 'lambda,gamma'") from exc
    weights = objective.LossWeights(lambda_=lam, gamma=gam)
    total = objective.total_loss(l_ctx, l_op, l_aux, weights)
    formats.write_json(
        {"object_pattern": l_op, "context": l_ctx, "aux": l_aux, "total": total},
        args.out,
    )
    return 0


def _cmd_overlap(args) -> int:
    cloud = formats.read_ply(args.input)
    seg = _scene_segmentation(cloud, args.seg, PipelineConfig())
    stats = analysis.overlap_statistics(seg)
    text = json.dumps(stats, sort_keys=True)
    if args.out:
        formats.atomic_write_bytes(args.out, (text + "\n").encode("ascii"))
    else:
        print(text)
    return 0


def _cmd_mix3d(args) -> int:
    cloud_a = formats.read_ply(args.a)
    cloud_b = formats.read_ply(args.b)
    merged = analysis.mix3d_merge(cloud_a, cloud_b)
    formats.write_ply(merged, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcx",
        description="object-exchange augmentation pipeline for indoor point clouds",
    )
    parser.add_argument("--version", action="version", version=f"pcx {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="over-segment one scene into clusters")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="feature affinity weight; overrides the schedule")
    p.add_argument("--progress", type=float, default=0.0,
                   help="training progress in [0,1] for the alpha schedule")
    p.add_argument("--features", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("exchange", help="swap size-matched clusters between two scenes")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--seg-a", default=None)
    p.add_argument("--seg-b", default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_exchange)

    p = sub.add_parser("scannet-c", help="build a corrupted copy of a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_scannet_c)

    p = sub.add_parser("affinity", help="class co-occurrence matrix as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_affinity)

    p = sub.add_parser("metrics", help="IoU and accuracy from label arrays")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("ratio", help="corrupted-over-clean mIoU percentage")
    p.add_argument("--corrupted", required=True)
    p.add_argument("--clean", required=True)
    p.set_defaults(func=_cmd_ratio)

    p = sub.add_parser("loss", help="reference loss values for two feature views")
    p.add_argument("--bundle-a", required=True, metavar="FEAT,CLUSTERS")
    p.add_argument("--bundle-b", required=True, metavar="FEAT,CLUSTERS")
    p.add_argument("--masks", required=True, metavar="MASK_A,MASK_B")
    p.add_argument("--logits", default=None, metavar="LOGITS_A,LOGITS_B")
    p.add_argument("--weights", default="1,2", metavar="LAMBDA,GAMMA")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("overlap", help="pairwise box overlap statistics")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--seg", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("mix3d", help="naive centered union of two scenes")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mix3d)
    return parser


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageProblem as exc:
        return _fail(exc, 2)
    except PcxError as exc:
        return _fail(exc, 3)
    except (OSError, ValueError) as exc:
        return _fail(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
