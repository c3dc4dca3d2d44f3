"""DOTA-style text formats and atomic file output.

Annotation files hold one object per line::

    x1 y1 x2 y2 x3 y3 x4 y4 <category> <difficult>

Detection results are one file per category, ``Task1_<category>.txt``, with
lines ``<image_id> <score> x1 y1 ... x4 y4``. Coordinates are written with
six decimals.
"""
from __future__ import annotations

import math
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .annotations import AnnotationSet, ObjectAnnotation
from .classes import ClassTable
from .geometry import InvalidGeometryError, Quad, obb_to_quad, quad_to_obb
from .nms import Detection

DOTA_HEADERS = ("imagesource:", "gsd:")
TASK1_PREFIX = "Task1_"


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


class UnknownCategoryError(FormatError):
    def __init__(self, path, unknown: Mapping[str, List[int]]):
        self.unknown = dict(unknown)
        listing = ", ".join(f"{k} (lines {','.join(map(str, v))})" for k, v in unknown.items())
        super().__init__(f"{path}: unknown categories: {listing}")


def fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


@contextmanager
def atomic_path(path):
    """Yield a temporary path beside ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)


@contextmanager
def atomic_dir(path):
    """Stage a directory's files in a sibling temp dir and publish them at the end.

    A fresh target is created by a single rename; files in an existing target
    are replaced one by one with ``os.replace``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        yield stage
        if not path.exists():
            os.replace(stage, path)
            return
        for f in sorted(stage.iterdir()):
            os.replace(f, path / f.name)
    finally:
        if stage.exists():
            shutil.rmtree(stage)


# -- annotations -------------------------------------------------------------


def parse_annotation_text(
    text: str,
    classes: ClassTable,
    image_id: str = "",
    image_size: Optional[Tuple[float, float]] = None,
    skip_unknown: bool = False,
    source: str = "<string>",
) -> AnnotationSet:
    """Parse DOTA annotation lines into an ``AnnotationSet``.

    A ``# size: W H`` comment sets the image size; otherwise ``image_size``
    is used, falling back to the extent of the objects.
    """
    objects = []
    unknown: Dict[str, List[int]] = {}
    size = image_size
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("size:") and image_size is None:
                try:
                    w, h = body.split(":", 1)[1].split()
                    size = (float(w), float(h))
                except ValueError:
                    raise FormatError(f"{source}:{lineno}: bad size header {line!r}")
            continue
        if line.startswith(DOTA_HEADERS):
            continue
        tok = line.split()
        if len(tok) not in (9, 10):
            raise FormatError(
                f"{source}:{lineno}: expected 8 coordinates, category and difficulty, "
                f"got {len(tok)} fields"
            )
        try:
            coords = [float(t) for t in tok[:8]]
            difficult = int(tok[9]) if len(tok) == 10 else 0
        except ValueError:
            raise FormatError(f"{source}:{lineno}: non-numeric field in {line!r}")
        if not all(math.isfinite(c) for c in coords):
            raise FormatError(f"{source}:{lineno}: non-finite coordinate")
        name = tok[8]
        if name not in classes:
            unknown.setdefault(name, []).append(lineno)
            continue
        try:
            box = quad_to_obb(Quad.from_flat(coords, degenerate=True))
        except InvalidGeometryError as e:
            raise FormatError(f"{source}:{lineno}: {e}")
        objects.append(ObjectAnnotation(box, classes.index(name), bool(difficult)))
    if unknown and not skip_unknown:
        raise UnknownCategoryError(source, unknown)
    if size is None:
        xs = [c for o in objects for c in obb_to_quad(o.box).flat()[0::2]]
        ys = [c for o in objects for c in obb_to_quad(o.box).flat()[1::2]]
        size = (max(1.0, math.ceil(max(xs, default=1.0))), max(1.0, math.ceil(max(ys, default=1.0))))
    return AnnotationSet(image_id, size[0], size[1], tuple(objects))


def parse_annotations(path, classes: ClassTable, **kw) -> AnnotationSet:
    path = Path(path)
    return parse_annotation_text(
        path.read_text(), classes, image_id=path.stem, source=str(path), **kw
    )


def annotation_lines(ann: AnnotationSet, classes: ClassTable) -> str:
    out = [f"# size: {fmt(ann.image_w)} {fmt(ann.image_h)}\n"]
    for o in ann.objects:
        coords = " ".join(fmt(c) for c in obb_to_quad(o.box).flat())
        out.append(f"{coords} {classes.names[o.class_id]} {int(o.difficult)}\n")
    return "".join(out)


def write_annotations(ann: AnnotationSet, path, classes: ClassTable) -> None:
    atomic_write_text(path, annotation_lines(ann, classes))


def load_annotation_dir(path, classes: ClassTable, sizes=None, skip_unknown=False):
    """``{image_id: AnnotationSet}`` for every ``*.txt`` under ``path`` (or a single file)."""
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob("*.txt"))
    out = {}
    for f in files:
        size = (sizes or {}).get(f.stem)
        out[f.stem] = parse_annotations(f, classes, image_size=size, skip_unknown=skip_unknown)
    return out


def parse_sizes(text: str) -> Dict[str, Tuple[float, float]]:
    """``image_id W H`` per line."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 3:
            raise FormatError(f"sizes:{lineno}: expected 'image_id W H'")
        out[tok[0]] = (float(tok[1]), float(tok[2]))
    return out


# -- detections --------------------------------------------------------------


def detection_file_name(name: str) -> str:
    return f"{TASK1_PREFIX}{name}.txt"


def detection_lines(items: Iterable[Tuple[str, Detection]]) -> str:
    out = []
    for image_id, d in items:
        coords = " ".join(fmt(c) for c in obb_to_quad(d.box).flat())
        out.append(f"{image_id} {fmt(d.score)} {coords}\n")
    return "".join(out)


def write_detections(
    dets_by_image: Mapping[str, Sequence[Detection]], out_dir, classes: ClassTable
) -> None:
    """One ``Task1_<category>.txt`` per class, empty files included.

    Lines follow image id order, then the per-image detection order.
    """
    per_class: Dict[int, list] = {i: [] for i in range(len(classes))}
    for image_id in sorted(dets_by_image):
        for d in dets_by_image[image_id]:
            if not 0 <= d.class_id < len(classes):
                raise FormatError(f"class id {d.class_id} outside the class table")
            per_class[d.class_id].append((image_id, d))
    with atomic_dir(out_dir) as stage:
        for c, name in enumerate(classes.names):
            (stage / detection_file_name(name)).write_text(detection_lines(per_class[c]))


def parse_detection_text(text: str, class_id: int, source: str = "<string>"):
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 10:
            raise FormatError(
                f"{source}:{lineno}: expected image id, score and 8 coordinates, "
                f"got {len(tok)} fields"
            )
        try:
            score = float(tok[1])
            coords = [float(t) for t in tok[2:]]
        except ValueError:
            raise FormatError(f"{source}:{lineno}: non-numeric field in {line!r}")
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise FormatError(f"{source}:{lineno}: score {tok[1]} outside [0, 1]")
        try:
            box = quad_to_obb(Quad.from_flat(coords, degenerate=True))
        except InvalidGeometryError as e:
            raise FormatError(f"{source}:{lineno}: {e}")
        out.append((tok[0], Detection(box, class_id, score)))
    return out


def parse_detections(path, classes: ClassTable) -> Dict[str, List[Detection]]:
    """Read every ``Task1_<category>.txt`` in a directory.

    Files for categories outside the class table are rejected.
    """
    path = Path(path)
    out: Dict[str, List[Detection]] = {}
    for f in sorted(path.glob(f"{TASK1_PREFIX}*.txt")):
        name = f.stem[len(TASK1_PREFIX):]
        if name not in classes:
            raise FormatError(f"{f}: category {name!r} is not in the class table")
        for image_id, d in parse_detection_text(f.read_text(), classes.index(name), str(f)):
            out.setdefault(image_id, []).append(d)
    return out
