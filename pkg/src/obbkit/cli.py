"""Command-line entry point: ``obbkit <subcommand> ...``.

Every failure ends with one ``error: <kind>: <message>`` line on stderr and a
nonzero exit status (2 for usage errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .align import align_sampling_grid
from .annotations import AnnotationSet, ObjectAnnotation
from .assign import AnchorGrid, assignment_stats, generate_anchors, max_iou_assign
from .augment import balance_plan
from .classes import FAIR1M, ClassTable
from .config import PipelineConfig
from .evaluation import AP_MODES, ClassTableError, evaluate
from .formats import (
    FormatError,
    annotation_lines,
    atomic_dir,
    atomic_write_text,
    load_annotation_dir,
    parse_annotations,
    parse_detections,
    parse_sizes,
    write_detections,
)
from .geometry import InvalidGeometryError, normalize
from .nms import MODES as NMS_MODES
from .nms import rotated_nms, score_filter
from .tiling import clip_annotations, merge_detections, parse_tile_name, plan_tiles, tile_name
from .viz import svg_overlay

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _size(text: str):
    try:
        w, h = text.lower().split("x")
        return (float(w), float(h))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")


def _pmap(fn, items, threads: int):
    """Ordered map; results do not depend on the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _pick(value, default):
    return default if value is None else value


def _check_range(name, value, lo, hi, lo_open=False):
    ok = (lo < value if lo_open else lo <= value) and value <= hi
    if not ok:
        bracket = "(" if lo_open else "["
        raise UsageError(f"--{name} must lie in {bracket}{lo}, {hi}], got {value}")


def _require(path: Optional[str], flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{flag}: {path} does not exist")
    return p


# -- subcommands -------------------------------------------------------------


def cmd_tile(args, cfg: PipelineConfig, classes: ClassTable) -> int:
    patch = _pick(args.patch, cfg.patch)
    gap = _pick(args.gap, cfg.gap)
    keep = _pick(args.keep_visibility, cfg.keep_visibility)
    if not patch > gap >= 0:
        raise UsageError(f"need --patch > --gap >= 0, got {patch}, {gap}")
    _check_range("keep-visibility", keep, 0, 1, lo_open=True)
    ann_path = _require(args.ann, "--ann")
    sizes = parse_sizes(Path(args.sizes).read_text()) if args.sizes else {}
    anns = load_annotation_dir(ann_path, classes, skip_unknown=args.skip_unknown)
    if args.size:
        anns = {
            k: AnnotationSet(k, args.size[0], args.size[1], a.objects) for k, a in anns.items()
        }
    for k, (w, h) in sizes.items():
        if k in anns:
            anns[k] = AnnotationSet(k, w, h, anns[k].objects)

    def work(image_id):
        ann = anns[image_id]
        plan = plan_tiles(math.ceil(ann.image_w), math.ceil(ann.image_h), patch, gap)
        return image_id, plan, clip_annotations(ann, plan, keep)

    results = _pmap(work, sorted(anns), args.threads)
    manifest = {"classes": classes.header, "gap": gap, "patch": patch, "images": {}}
    with atomic_dir(args.out) as stage:
        for image_id, plan, tiles in results:
            entries = []
            for t in tiles:
                name = tile_name(image_id, t.origin)
                tile_ann = AnnotationSet(
                    name,
                    plan.patch,
                    plan.patch,
                    [ObjectAnnotation(o.box, o.class_id, o.difficult) for o in t.objects],
                )
                (stage / f"{name}.txt").write_text(annotation_lines(tile_ann, classes))
                entries.append(
                    {
                        "name": name,
                        "origin": list(t.origin),
                        "objects": [
                            {"source": o.source_index, "truncated": o.truncated,
                             "visibility": round(o.visibility, 6)}
                            for o in t.objects
                        ],
                    }
                )
            manifest["images"][image_id] = {
                "size": [plan.image_w, plan.image_h],
                "tiles": entries,
            }
        (stage / "tiles.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    n_tiles = sum(len(t) for _, _, t in results)
    print(f"tiled {len(results)} image(s) into {n_tiles} patch(es) -> {args.out}")
    return 0


def cmd_merge(args, cfg, classes) -> int:
    thr = _pick(args.nms_thr, cfg.nms_thr)
    mode = _pick(args.mode, cfg.nms_mode)
    _check_range("nms-thr", thr, 0, 1)
    src = _require(args.dets, "--dets")
    dets = parse_detections(src, classes)
    grouped: Dict[str, list] = {}
    for name, ds in dets.items():
        image_id, origin = parse_tile_name(name)
        grouped.setdefault(image_id, []).append((origin, ds))

    def work(image_id):
        tiles = sorted(grouped[image_id], key=lambda t: t[0])
        return image_id, merge_detections(tiles, thr, mode)

    merged = dict(_pmap(work, sorted(grouped), args.threads))
    write_detections(merged, args.out, classes)
    total = sum(len(v) for v in merged.values())
    print(f"merged {len(dets)} tile(s) into {len(merged)} image(s), {total} detection(s)")
    return 0


def cmd_nms(args, cfg, classes) -> int:
    thr = _pick(args.iou_thr, cfg.nms_thr)
    mode = _pick(args.mode, cfg.nms_mode)
    conf = _pick(args.conf_thr, cfg.conf_thr)
    _check_range("iou-thr", thr, 0, 1)
    _check_range("conf-thr", conf, 0, 1)
    dets = parse_detections(_require(args.dets, "--dets"), classes)

    def work(image_id):
        ds = score_filter(dets[image_id], conf)
        return image_id, [ds[i] for i in rotated_nms(ds, thr, mode)]

    kept = dict(_pmap(work, sorted(dets), args.threads))
    write_detections(kept, args.out, classes)
    before = sum(len(v) for v in dets.values())
    after = sum(len(v) for v in kept.values())
    print(f"nms ({mode}, iou>{thr}): {before} -> {after} detection(s)")
    return 0


def format_report(report, classes: ClassTable) -> str:
    lines = [
        f"# {classes.header}; mode: {report.mode}; iou_thr: {report.iou_thr}",
        f"{'class':<20} {'AP':>9} {'GT':>7} {'dets':>7}",
    ]
    for c in report.classes:
        flag = "  (no GT)" if c.no_gt else ""
        lines.append(f"{c.name:<20} {100 * c.ap:9.4f} {c.gt_count:7d} {c.det_count:7d}{flag}")
    lines.append(f"{'mAP':<20} {100 * report.mAP:9.4f}")
    if report.excluded:
        lines.append(f"# excluded (no GT, no detections): {len(report.excluded)} class(es)")
    return "\n".join(lines) + "\n"


def report_json(report, classes: ClassTable) -> str:
    data = {
        "classes": classes.header,
        "mode": report.mode,
        "iou_thr": report.iou_thr,
        "mAP": report.mAP,
        "excluded": report.excluded,
        "per_class": [
            {
                "name": c.name,
                "ap": c.ap,
                "gt_count": c.gt_count,
                "det_count": c.det_count,
                "no_gt": c.no_gt,
                "curve": [[r, p] for r, p in c.curve],
            }
            for c in report.classes
        ],
    }
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


def cmd_eval(args, cfg, classes) -> int:
    thr = _pick(args.iou_thr, cfg.eval_iou_thr)
    mode = _pick(args.mode, cfg.eval_mode)
    _check_range("iou-thr", thr, 0, 1, lo_open=True)
    dets_dir = _require(args.dets, "--dets")
    ann_path = _require(args.ann, "--ann")
    gts = load_annotation_dir(ann_path, classes, skip_unknown=args.skip_unknown)
    dets = parse_detections(dets_dir, classes)
    stray = sorted(set(dets) - set(gts))
    if stray:
        raise FormatError(f"detections reference images without annotations: {', '.join(stray[:5])}")
    report = evaluate(
        dets, gts, classes.names, thr, mode,
        ignore_difficult=not args.keep_difficult, threads=args.threads,
    )
    text = format_report(report, classes)
    if args.report:
        atomic_write_text(args.report, report_json(report, classes))
    sys.stdout.write(text)
    return 0


def cmd_assign_stats(args, cfg, classes) -> int:
    pos = args.pos if args.pos is not None else [s[0] for s in cfg.stage_thresholds]
    neg = args.neg if args.neg is not None else [s[1] for s in cfg.stage_thresholds]
    if len(neg) == 1 and len(pos) > 1:
        neg = neg * len(pos)
    if len(neg) != len(pos):
        raise UsageError("--pos and --neg need the same number of values")
    for p, n in zip(pos, neg):
        if not 0 < n <= p <= 1:
            raise UsageError(f"need 0 < neg <= pos <= 1, got pos={p}, neg={n}")
    if args.stride <= 0 or args.base_size <= 0:
        raise UsageError("--stride and --base-size must be positive")
    ann = parse_annotations(_require(args.ann, "--ann"), classes, skip_unknown=args.skip_unknown)
    grid = AnchorGrid(
        args.stride,
        args.base_size,
        max(1, math.ceil(ann.image_w / args.stride)),
        max(1, math.ceil(ann.image_h / args.stride)),
        args.theta,
    )
    anchors = generate_anchors(grid)
    gts = ann.boxes
    lines = [
        f"# {len(anchors)} anchors (stride {args.stride}, size {args.base_size}), "
        f"{len(gts)} GT, low-quality matching {'off' if args.no_low_quality else 'on'}",
        f"{'pos':>5} {'neg':>5} {'positives':>10} {'negatives':>10} {'ignored':>8} "
        f"{'gt_recall':>10} {'mean_pos_iou':>13}",
    ]
    for p, n in zip(pos, neg):
        res = max_iou_assign(anchors, gts, p, n, not args.no_low_quality)
        s = assignment_stats(res, gts)
        lines.append(
            f"{p:5.2f} {n:5.2f} {s['positives']:10d} {s['negatives']:10d} {s['ignored']:8d} "
            f"{s['gt_recall']:10.4f} {s['mean_pos_iou']:13.4f}"
        )
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_balance_plan(args, cfg, classes) -> int:
    _check_range("target-ratio", args.target_ratio, 0, 1, lo_open=True)
    anns = load_annotation_dir(_require(args.ann, "--ann"), classes, skip_unknown=args.skip_unknown)
    plan = balance_plan(list(anns.values()), args.target_ratio, classes=range(len(classes)))
    lines = [f"{'class':<20} {'before':>8} {'repeat':>7} {'after':>8}"]
    for c in sorted(plan.counts_before):
        lines.append(
            f"{classes.names[c]:<20} {plan.counts_before[c]:8d} "
            f"{plan.class_repeat[c]:7d} {plan.counts_after[c]:8d}"
        )
    lines.append(
        f"# min/max ratio {plan.ratio_before:.4f} -> {plan.ratio_after:.4f}; "
        f"images x{plan.inflation:.4f}"
        + ("; fallback to no resampling" if plan.fallback else "")
    )
    if plan.excluded_classes:
        lines.append(f"# classes without instances: {len(plan.excluded_classes)}")
    if args.out:
        atomic_write_text(
            args.out,
            "".join(f"{k} {v}\n" for k, v in sorted(plan.repeat_factors.items())),
        )
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_align_grid(args, cfg, classes) -> int:
    if len(args.box) != 5:
        raise UsageError("--box takes cx,cy,w,h,theta")
    if args.k < 1 or args.k % 2 == 0:
        raise UsageError(f"--k must be odd and >= 1, got {args.k}")
    if args.stride <= 0:
        raise UsageError("--stride must be positive")
    if len(args.cell) != 2:
        raise UsageError("--cell takes i,j")
    box = normalize(*args.box)
    grid = align_sampling_grid(box, args.k, args.stride, (int(args.cell[0]), int(args.cell[1])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "v", "x", "y", "offset_x", "offset_y"])
    r = (args.k - 1) // 2
    for vi in range(args.k):
        for ui in range(args.k):
            px, py = grid.points[vi, ui]
            ox, oy = grid.offsets[vi, ui]
            w.writerow([ui - r, vi - r, repr(float(px)), repr(float(py)), repr(float(ox)), repr(float(oy))])
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_viz(args, cfg, classes) -> int:
    ann = parse_annotations(_require(args.ann, "--ann"), classes, skip_unknown=args.skip_unknown)
    layers = [("gt", [(o.box, o.class_id, classes.names[o.class_id]) for o in ann.objects])]
    if args.dets:
        conf = _pick(args.conf_thr, cfg.conf_thr)
        dets = parse_detections(_require(args.dets, "--dets"), classes).get(ann.image_id, [])
        dets = score_filter(dets, conf)
        layers.append(("dets", [(d.box, d.class_id, f"{d.score:.2f}") for d in dets]))
    atomic_write_text(args.out, svg_overlay(ann.image_w, ann.image_h, layers, dashed=("dets",)))
    print(f"wrote {args.out}")
    return 0


def cmd_config(args, cfg, classes) -> int:
    sys.stdout.write(cfg.dumps())
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="obbkit", description="Oriented-box detection toolkit")
    p.add_argument("--version", action="version", version=f"obbkit {__version__}")
    p.add_argument("--config", help="pipeline config JSON (defaults for all subcommands)")
    p.add_argument("--classes", help="class table file (default: built-in FAIR1M 37 classes)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (output is identical for any value)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("tile", cmd_tile, "split annotations into overlapping patches")
    sp.add_argument("--ann", help="annotation file or directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--patch", type=int)
    sp.add_argument("--gap", type=int)
    sp.add_argument("--keep-visibility", type=float)
    sp.add_argument("--size", type=_size, help="image size WxH for every image")
    sp.add_argument("--sizes", help="file of 'image_id W H' lines")
    sp.add_argument("--skip-unknown", action="store_true")

    sp = add("merge", cmd_merge, "merge per-tile detections into image frames")
    sp.add_argument("--dets", help="directory of Task1_*.txt with tile-named image ids")
    sp.add_argument("--out", required=True)
    sp.add_argument("--nms-thr", type=float)
    sp.add_argument("--mode", choices=NMS_MODES)

    sp = add("nms", cmd_nms, "confidence filter and rotated NMS")
    sp.add_argument("--dets")
    sp.add_argument("--out", required=True)
    sp.add_argument("--iou-thr", type=float)
    sp.add_argument("--conf-thr", type=float)
    sp.add_argument("--mode", choices=NMS_MODES)

    sp = add("eval", cmd_eval, "rotated mAP evaluation")
    sp.add_argument("--dets")
    sp.add_argument("--ann")
    sp.add_argument("--iou-thr", type=float)
    sp.add_argument("--mode", choices=AP_MODES)
    sp.add_argument("--report", help="write the machine-readable JSON report here")
    sp.add_argument("--keep-difficult", action="store_true", help="score difficult GTs normally")
    sp.add_argument("--skip-unknown", action="store_true")

    sp = add("assign-stats", cmd_assign_stats, "sample-assignment statistics per threshold")
    sp.add_argument("--ann")
    sp.add_argument("--stride", type=float, default=8.0)
    sp.add_argument("--base-size", type=float, default=32.0)
    sp.add_argument("--theta", type=float, default=0.0)
    sp.add_argument("--pos", type=_floats)
    sp.add_argument("--neg", type=_floats)
    sp.add_argument("--no-low-quality", action="store_true")
    sp.add_argument("--skip-unknown", action="store_true")

    sp = add("balance-plan", cmd_balance_plan, "class-balanced repeat factors")
    sp.add_argument("--ann")
    sp.add_argument("--target-ratio", type=float, default=1.0)
    sp.add_argument("--out", help="write 'image_id factor' lines here")
    sp.add_argument("--skip-unknown", action="store_true")

    sp = add("align-grid", cmd_align_grid, "dump an aligned sampling grid as CSV")
    sp.add_argument("--box", type=_floats, required=True, help="cx,cy,w,h,theta")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--stride", type=float, default=8.0)
    sp.add_argument("--cell", type=_floats, default=[0, 0], help="i,j")
    sp.add_argument("--out")

    sp = add("viz", cmd_viz, "SVG overlay of annotations and detections")
    sp.add_argument("--ann")
    sp.add_argument("--dets")
    sp.add_argument("--conf-thr", type=float)
    sp.add_argument("--out", required=True)
    sp.add_argument("--skip-unknown", action="store_true")

    add("config", cmd_config, "print the effective config in canonical form")
    return p


def _error(kind: str, msg) -> None:
    text = " ".join(str(msg).split())
    sys.stderr.write(f"error: {kind}: {text}\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        classes = ClassTable.load(args.classes) if args.classes else FAIR1M
        return args.func(args, cfg, classes)
    except UsageError as e:
        _error("usage", e)
        return 2
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except ClassTableError as e:
        _error("class-table", e)
    except FormatError as e:
        _error("format", e)
    except InvalidGeometryError as e:
        _error("geometry", e)
    except (ValueError, json.JSONDecodeError) as e:
        _error("invalid", e)
    except OSError as e:
        _error("io", e)
    return 1


if __name__ == "__main__":
    sys.exit(main())
