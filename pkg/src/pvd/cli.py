"""Command-line pipeline driver.

Every subcommand is deterministic: randomness only enters through explicit
``--seed`` flags, and identical inputs plus identical seeds reproduce
byte-identical output files. Exit status is 0 on success, 1 on runtime or
validation failures, and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Any

import numpy as np

from . import __version__
from .affinity import (
    FeatureBlock,
    affinity_distill_grad,
    affinity_distill_loss,
    cosine_affinity,
)
from .config import Config, load_config_file
from .errors import InvalidInputError, PVDError
from .formats import (
    decode_feature_dump,
    encode_feature_dump,
    read_labels_bin,
    read_points_bin,
    write_affinity_pgm,
    write_labels_bin,
)
from .geometry import assign_voxels, majority_encode, pool_point_to_voxel, to_cylindrical
from .losses import (
    LogitsTensor,
    LossWeights,
    combined_loss,
    kl_output_grad,
    kl_output_loss,
    weighted_cross_entropy,
)
from .metrics import confusion_matrix, iou_per_class, macs_estimate
from .sampling import minority_classes, sample_supervoxels, supervoxel_weights

GRADCHECK_TOLERANCE = 1e-4

VOXEL_FEATURES_NAME = "voxel_features.pvdf"
VOXEL_LABELS_NAME = "voxel_labels.label"
VOXEL_COORDS_NAME = "voxel_coords.pvdf"


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_bytes(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _json_clean(obj: Any) -> Any:
    """Replace NaN floats with None so documents stay strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_clean(v) for v in obj]
    return obj


def _write_json(path: str, doc: dict) -> None:
    text = json.dumps(_json_clean(doc), indent=2, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _load_config(args: argparse.Namespace) -> Config:
    if args.config is None:
        return Config()
    return load_config_file(args.config)


def _load_dump(path: str) -> np.ndarray:
    return decode_feature_dump(_read_bytes(path))


def _blocks_from_dump(stack: np.ndarray, what: str) -> list[FeatureBlock]:
    """Interpret a (K, N, C) dump as feature blocks; all-zero rows are padding."""
    if stack.ndim != 3:
        raise InvalidInputError(
            f"{what}: expected a (K, N, C) feature dump, got shape {stack.shape}"
        )
    blocks = []
    for rows in stack.astype(np.float64):
        mask = np.any(rows != 0.0, axis=1)
        blocks.append(
            FeatureBlock(rows, mask, kept_indices=[int(i) for i in np.flatnonzero(mask)])
        )
    return blocks


# ---------------------------------------------------------------------------
# subcommands


def _cmd_voxelize(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cloud = read_points_bin(_read_bytes(args.scan))
    labels = read_labels_bin(_read_bytes(args.labels))
    if labels.shape[0] != len(cloud):
        raise InvalidInputError(
            f"scan has {len(cloud)} points but label file has {labels.shape[0]}"
        )
    cyl = to_cylindrical(cloud)
    vox = assign_voxels(cyl, cfg.grid)
    feats = np.column_stack((cloud.positions, cloud.intensity))
    pooled = pool_point_to_voxel(feats, vox)
    vox_labels = majority_encode(labels, vox)

    os.makedirs(args.out, exist_ok=True)
    _write_bytes(
        os.path.join(args.out, VOXEL_FEATURES_NAME),
        encode_feature_dump(pooled.astype(np.float32)),
    )
    _write_bytes(
        os.path.join(args.out, VOXEL_COORDS_NAME),
        encode_feature_dump(vox.occupied.astype(np.float32)),
    )
    _write_bytes(
        os.path.join(args.out, VOXEL_LABELS_NAME), write_labels_bin(vox_labels)
    )
    print(f"voxelized {len(cloud)} points into {vox.num_voxels} voxels -> {args.out}")
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    coords = _load_dump(os.path.join(args.voxels, VOXEL_COORDS_NAME)).astype(np.int64)
    labels = read_labels_bin(
        _read_bytes(os.path.join(args.voxels, VOXEL_LABELS_NAME))
    )
    if args.class_counts is not None:
        with open(args.class_counts, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in raw
        ):
            raise InvalidInputError("class counts file must hold a list of integers")
        counts = np.asarray(raw, dtype=np.int64)
    else:
        # Fallback: derive counts from this scan's voxel labels.
        real = labels[labels != args.ignore]
        counts = np.bincount(real) if real.size else np.zeros(0, dtype=np.int64)
    minority = minority_classes(counts, cfg.sampler.minority_threshold)
    weights = supervoxel_weights(
        coords, labels, cfg.grid, cfg.supervoxel, minority, cfg.sampler,
        ignore_label=args.ignore,
    )
    picked = sample_supervoxels(weights, cfg.sampler.k, args.seed)
    _write_json(
        args.out,
        {
            "indices": [int(i) for i in picked],
            "probs": [float(p) for p in weights.probs],
            "weights": [float(v) for v in weights.weights],
            "d_over_r": [float(v) for v in weights.d_over_r],
            "num_supervoxels": int(weights.probs.shape[0]),
            "uniform_fallback": weights.uniform_fallback,
            "seed": args.seed,
        },
    )
    print(f"sampled supervoxels {[int(i) for i in picked]} -> {args.out}")
    return 0


def _cmd_affinity(args: argparse.Namespace) -> int:
    teacher = _blocks_from_dump(_load_dump(args.teacher), "teacher")
    student = _blocks_from_dump(_load_dump(args.student), "student")
    t_aff = [cosine_affinity(b) for b in teacher]
    s_aff = [cosine_affinity(b) for b in student]
    loss = affinity_distill_loss(s_aff, t_aff)
    per_matrix = [
        affinity_distill_loss([s], [t]) for s, t in zip(s_aff, t_aff)
    ]
    if args.pgm_dir is not None:
        os.makedirs(args.pgm_dir, exist_ok=True)
        for r, (t, s) in enumerate(zip(t_aff, s_aff)):
            _write_bytes(
                os.path.join(args.pgm_dir, f"teacher_{r:03d}.pgm"),
                write_affinity_pgm(t),
            )
            _write_bytes(
                os.path.join(args.pgm_dir, f"student_{r:03d}.pgm"),
                write_affinity_pgm(s),
            )
    _write_json(
        args.out,
        {
            "affinity_loss": loss,
            "per_matrix_loss": per_matrix,
            "num_matrices": len(t_aff),
            "rows": t_aff[0].size if t_aff else 0,
        },
    )
    print(f"affinity loss {loss:.12g} -> {args.out}")
    return 0


def _cmd_loss(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    w = cfg.loss_weights

    sp = LogitsTensor(_load_dump(args.student_point_logits), kind="point")
    tp = LogitsTensor(_load_dump(args.teacher_point_logits), kind="point")
    sv = LogitsTensor(_load_dump(args.student_voxel_logits), kind="voxel")
    tv = LogitsTensor(_load_dump(args.teacher_voxel_logits), kind="voxel")
    point_labels = read_labels_bin(_read_bytes(args.point_labels))
    voxel_labels = read_labels_bin(_read_bytes(args.voxel_labels))

    unit_p = np.ones(sp.shape[1])
    unit_v = np.ones(sv.shape[1])
    wce_point = weighted_cross_entropy(
        sp.values, point_labels, unit_p, ignore_label=args.ignore
    )
    wce_voxel = weighted_cross_entropy(
        sv.values, voxel_labels, unit_v, ignore_label=args.ignore
    )
    out_point = kl_output_loss(sp, tp, w)
    dense_rows = None
    if args.dense_voxel_kl:
        r_bins, a_bins, h_bins = cfg.grid.bins
        dense_rows = r_bins * a_bins * h_bins
    out_voxel = kl_output_loss(sv, tv, w, total_rows=dense_rows)

    aff_point = affinity_distill_loss(
        [cosine_affinity(b) for b in _blocks_from_dump(
            _load_dump(args.student_point_feats), "student point features")],
        [cosine_affinity(b) for b in _blocks_from_dump(
            _load_dump(args.teacher_point_feats), "teacher point features")],
    )
    aff_voxel = affinity_distill_loss(
        [cosine_affinity(b) for b in _blocks_from_dump(
            _load_dump(args.student_voxel_feats), "student voxel features")],
        [cosine_affinity(b) for b in _blocks_from_dump(
            _load_dump(args.teacher_voxel_feats), "teacher voxel features")],
    )

    breakdown = combined_loss(
        wce_point, wce_voxel, args.task_extra,
        out_point, out_voxel, aff_point, aff_voxel, w,
    )
    _write_json(
        args.out,
        {
            "wce_point": breakdown.wce_point,
            "wce_voxel": breakdown.wce_voxel,
            "task_extra": breakdown.task_extra,
            "out_point": breakdown.out_point,
            "out_voxel": breakdown.out_voxel,
            "aff_point": breakdown.aff_point,
            "aff_voxel": breakdown.aff_voxel,
            "total": breakdown.total,
            "weights": {
                "alpha1": w.alpha1,
                "alpha2": w.alpha2,
                "beta1": w.beta1,
                "beta2": w.beta2,
                "temperature": w.temperature,
                "kl_direction": w.kl_direction,
            },
        },
    )
    print(f"total loss {breakdown.total:.12g} -> {args.out}")
    return 0


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.abs(numeric).max(initial=0.0)), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / denom


def _fd_kl_suite(rng: np.random.Generator, h: float) -> float:
    worst = 0.0
    for direction in ("teacher_to_student", "literal"):
        for temperature in (0.5, 1.0, 2.0):
            e = int(rng.integers(2, 10))
            c = int(rng.integers(2, 8))
            s = rng.normal(size=(e, c)) * 2.0
            t = rng.normal(size=(e, c)) * 2.0
            w = LossWeights(temperature=temperature, kl_direction=direction)
            teacher = LogitsTensor(t)
            grad = kl_output_grad(LogitsTensor(s), teacher, w)
            numeric = np.zeros_like(s)
            for idx in np.ndindex(s.shape):
                plus = s.copy()
                plus[idx] += h
                minus = s.copy()
                minus[idx] -= h
                numeric[idx] = (
                    kl_output_loss(LogitsTensor(plus), teacher, w)
                    - kl_output_loss(LogitsTensor(minus), teacher, w)
                ) / (2 * h)
            worst = max(worst, _relative_error(grad, numeric))
    return worst


def _fd_affinity_suite(rng: np.random.Generator, h: float) -> float:
    worst = 0.0
    for _ in range(6):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(3, 8))
        c = int(rng.integers(2, 6))
        blocks, teacher = [], []
        for _ in range(k):
            valid = int(rng.integers(2, n + 1))
            mask = np.zeros(n, dtype=bool)
            mask[:valid] = True
            feats = np.zeros((n, c))
            feats[:valid] = rng.normal(size=(valid, c))
            blocks.append(FeatureBlock(feats, mask, list(range(valid))))
            t_feats = np.zeros((n, c))
            t_feats[:valid] = rng.normal(size=(valid, c))
            teacher.append(
                cosine_affinity(FeatureBlock(t_feats, mask, list(range(valid))))
            )
        grads = affinity_distill_grad(blocks, teacher)

        def loss_at(feature_sets: list[np.ndarray]) -> float:
            mats = [
                cosine_affinity(FeatureBlock(f, b.valid_mask, b.kept_indices))
                for f, b in zip(feature_sets, blocks)
            ]
            return affinity_distill_loss(mats, teacher)

        for r, block in enumerate(blocks):
            numeric = np.zeros_like(block.features)
            for idx in np.ndindex(block.features.shape):
                if not block.valid_mask[idx[0]]:
                    continue
                sets_p = [b.features.copy() for b in blocks]
                sets_m = [b.features.copy() for b in blocks]
                sets_p[r][idx] += h
                sets_m[r][idx] -= h
                numeric[idx] = (loss_at(sets_p) - loss_at(sets_m)) / (2 * h)
            worst = max(worst, _relative_error(grads[r], numeric))
    return worst


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    h = 1e-5
    rng = np.random.Generator(np.random.PCG64(args.seed))
    kl_err = _fd_kl_suite(rng, h)
    aff_err = _fd_affinity_suite(rng, h)
    worst = max(kl_err, aff_err)
    passed = worst <= GRADCHECK_TOLERANCE
    print(
        f"kl max relative error {kl_err:.3e}; "
        f"affinity max relative error {aff_err:.3e}; "
        f"max relative error {worst:.3e} "
        f"({'PASS' if passed else 'FAIL'} at {GRADCHECK_TOLERANCE:.0e})"
    )
    if args.out is not None:
        _write_json(
            args.out,
            {
                "kl_max_rel_err": kl_err,
                "affinity_max_rel_err": aff_err,
                "max_rel_err": worst,
                "tolerance": GRADCHECK_TOLERANCE,
                "seed": args.seed,
                "passed": passed,
            },
        )
    return 0 if passed else 1


def _cmd_iou(args: argparse.Namespace) -> int:
    pred = read_labels_bin(_read_bytes(args.pred))
    gt = read_labels_bin(_read_bytes(args.gt))
    if pred.shape != gt.shape:
        raise InvalidInputError(
            f"prediction has {pred.shape[0]} entries but ground truth has "
            f"{gt.shape[0]}"
        )
    if args.classes is not None:
        n_classes = args.classes
    else:
        keep = gt != args.ignore
        if not keep.any():
            raise InvalidInputError("cannot infer class count: every row is ignored")
        if (pred[keep] == args.ignore).any():
            raise InvalidInputError(
                "cannot infer class count: a prediction at an evaluated row "
                "carries the ignore label"
            )
        n_classes = int(max(pred[keep].max(), gt[keep].max())) + 1
    cm = confusion_matrix(pred, gt, n_classes, ignore_label=args.ignore)
    iou, miou = iou_per_class(cm)
    _write_json(
        args.out,
        {
            "iou": [float(v) for v in iou],
            "miou": miou,
            "present": [bool(np.isfinite(v)) for v in iou],
            "num_classes": n_classes,
            "evaluated": int(cm.counts.sum()),
        },
    )
    print(f"mIoU {miou:.6f} over {n_classes} classes -> {args.out}")
    return 0


def _cmd_macs(args: argparse.Namespace) -> int:
    with open(args.layers, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise InvalidInputError("layer table must be a JSON list")
    per_layer = []
    for i, layer in enumerate(doc):
        if not isinstance(layer, dict):
            raise InvalidInputError(f"layer {i} must be an object")
        try:
            per_layer.append(
                macs_estimate(
                    layer["n_points"],
                    layer["kernel_map_size"],
                    layer["c_in"],
                    layer["c_out"],
                )
            )
        except KeyError as exc:
            raise InvalidInputError(f"layer {i} is missing key {exc}") from exc
    total = float(sum(per_layer))
    _write_json(args.out, {"per_layer": per_layer, "total": total})
    print(f"total MACs {total:.6g} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvd",
        description="Point-to-voxel distillation kernels for LiDAR segmentation.",
    )
    parser.add_argument("--version", action="version", version=f"pvd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="pool a scan into cylindrical voxels")
    p.add_argument("--scan", required=True, help="packed float32 scan file")
    p.add_argument("--labels", required=True, help="per-point label file")
    p.add_argument("--config", default=None, help="configuration JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("sample", help="draw supervoxels by difficulty-aware weight")
    p.add_argument("--voxels", required=True, help="directory written by voxelize")
    p.add_argument("--class-counts", default=None,
                   help="JSON list of dataset-wide per-class point counts")
    p.add_argument("--config", default=None, help="configuration JSON")
    p.add_argument("--seed", type=_seed, default=0, help="sampling seed (fixed default)")
    p.add_argument("--ignore", type=int, default=255, help="ignore label value")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("affinity", help="affinity matrices and distillation loss")
    p.add_argument("--teacher", required=True, help="(K, N, C) teacher feature dump")
    p.add_argument("--student", required=True, help="(K, N, C) student feature dump")
    p.add_argument("--pgm-dir", default=None, help="directory for PGM visualizations")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_affinity)

    p = sub.add_parser("loss", help="full loss breakdown from dumped tensors")
    p.add_argument("--student-point-logits", required=True)
    p.add_argument("--teacher-point-logits", required=True)
    p.add_argument("--student-voxel-logits", required=True)
    p.add_argument("--teacher-voxel-logits", required=True)
    p.add_argument("--point-labels", required=True)
    p.add_argument("--voxel-labels", required=True)
    p.add_argument("--student-point-feats", required=True)
    p.add_argument("--teacher-point-feats", required=True)
    p.add_argument("--student-voxel-feats", required=True)
    p.add_argument("--teacher-voxel-feats", required=True)
    p.add_argument("--task-extra", type=float, default=0.0,
                   help="precomputed task-specific loss term (e.g. lovasz)")
    p.add_argument("--dense-voxel-kl", action="store_true",
                   help="normalize the voxel KL over the full grid volume")
    p.add_argument("--ignore", type=int, default=255, help="ignore label value")
    p.add_argument("--config", default=None, help="configuration JSON")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("gradcheck", help="verify analytic gradients numerically")
    p.add_argument("--seed", type=_seed, default=0, help="suite seed (fixed default)")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("iou", help="per-class IoU and mIoU between label files")
    p.add_argument("--pred", required=True, help="predicted label file")
    p.add_argument("--gt", required=True, help="ground-truth label file")
    p.add_argument("--classes", type=int, default=None,
                   help="class count (default: inferred from the files)")
    p.add_argument("--ignore", type=int, default=255, help="ignore label value")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_iou)

    p = sub.add_parser("macs", help="multiply-accumulate estimate from a layer table")
    p.add_argument("--layers", required=True, help="JSON list of layer descriptors")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_macs)

    return parser


def dispatch(argv: list[str]) -> int:
    """Run one CLI invocation and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except PVDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
