import json
import math

import numpy as np
import pytest

from obbkit.annotations import AnnotationSet, ObjectAnnotation
from obbkit.classes import FAIR1M, FAIR1M_NAMES, ClassTable, resolve
from obbkit.config import PipelineConfig
from obbkit.formats import (
    FormatError,
    UnknownCategoryError,
    annotation_lines,
    atomic_dir,
    atomic_write_text,
    detection_file_name,
    fmt,
    parse_annotation_text,
    parse_annotations,
    parse_detection_text,
    parse_detections,
    parse_sizes,
    write_annotations,
    write_detections,
)
from obbkit.geometry import RotatedBox, normalize, obb_to_quad
from obbkit.nms import Detection
from obbkit.viz import svg_overlay

SMALL = ClassTable(("plane", "ship", "car"), "test-v1")


class TestClassTable:
    def test_fair1m(self):
        assert len(FAIR1M) == 37 and len(set(FAIR1M_NAMES)) == 37
        assert FAIR1M.index("Boeing737") == 0 and FAIR1M.names[-1] == "Bridge"
        assert "fair1m-v1" in FAIR1M.header

    def test_round_trip(self):
        assert ClassTable.loads(SMALL.dumps()) == SMALL
        assert ClassTable.loads(FAIR1M.dumps()) == FAIR1M

    def test_invalid(self):
        with pytest.raises(ValueError):
            ClassTable(("a", "a"))
        with pytest.raises(ValueError):
            ClassTable(("small car",))
        with pytest.raises(ValueError):
            ClassTable(())

    def test_resolve(self):
        assert resolve(None) is FAIR1M
        assert resolve(["x", "y"]).names == ("x", "y")


class TestAnnotations:
    def test_example_line(self):
        ann = parse_annotation_text("0 0 4 0 4 2 0 2 Boeing737 0\n", FAIR1M)
        (o,) = ann.objects
        assert o.box == RotatedBox(2, 1, 4, 2, 0)
        assert o.class_id == 0 and not o.difficult

    def test_empty(self):
        ann = parse_annotation_text("", FAIR1M, image_size=(100, 100))
        assert ann.objects == ()

    def test_headers_and_comments(self):
        text = "imagesource:GoogleEarth\ngsd:0.5\n# size: 640 480\n\n1 1 5 1 5 3 1 3 ship 1\n"
        ann = parse_annotation_text(text, SMALL)
        assert (ann.image_w, ann.image_h) == (640, 480)
        assert ann.objects[0].difficult and ann.objects[0].class_id == 1

    def test_missing_difficulty_defaults(self):
        assert not parse_annotation_text("0 0 4 0 4 2 0 2 car", SMALL).objects[0].difficult

    def test_seven_coordinates(self):
        with pytest.raises(FormatError, match=r":2:"):
            parse_annotation_text("0 0 4 0 4 2 0 2 car 0\n0 0 4 0 4 2 0 car 0\n", SMALL)

    def test_non_numeric(self):
        with pytest.raises(FormatError, match=r":1:"):
            parse_annotation_text("0 0 4 x 4 2 0 2 car 0", SMALL)

    def test_unknown_category(self):
        text = "0 0 4 0 4 2 0 2 car 0\n0 0 4 0 4 2 0 2 tank 0\n0 0 4 0 4 2 0 2 tank 0\n"
        with pytest.raises(UnknownCategoryError) as e:
            parse_annotation_text(text, SMALL)
        assert e.value.unknown == {"tank": [2, 3]}
        assert len(parse_annotation_text(text, SMALL, skip_unknown=True).objects) == 1

    def test_degenerate_quad(self):
        with pytest.raises(FormatError):
            parse_annotation_text("0 0 1 1 2 2 3 3 car 0", SMALL)

    def test_extent_fallback(self):
        ann = parse_annotation_text("0 0 40.5 0 40.5 20 0 20 car 0", SMALL)
        assert (ann.image_w, ann.image_h) == (41, 20)

    def test_write_parse_round_trip(self, tmp_path, rng):
        objs = [
            ObjectAnnotation(
                normalize(rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(2, 80),
                          rng.uniform(2, 80), rng.uniform(-3, 3)),
                int(rng.integers(0, 3)), bool(rng.integers(0, 2)),
            )
            for _ in range(100)
        ]
        ann = AnnotationSet("scene", 512, 512, objs)
        write_annotations(ann, tmp_path / "scene.txt", SMALL)
        back = parse_annotations(tmp_path / "scene.txt", SMALL)
        assert back.image_id == "scene" and (back.image_w, back.image_h) == (512, 512)
        for a, b in zip(back.objects, objs):
            assert (a.class_id, a.difficult) == (b.class_id, b.difficult)
            assert np.allclose(obb_to_quad(a.box).points, obb_to_quad(b.box).points, atol=2e-6)

    def test_sizes(self):
        assert parse_sizes("a 10 20\n# c\nb 3 4\n") == {"a": (10, 20), "b": (3, 4)}
        with pytest.raises(FormatError):
            parse_sizes("a 10")


class TestDetections:
    def test_file_name(self):
        assert detection_file_name("Boeing737") == "Task1_Boeing737.txt"

    def test_round_trip_1000(self, tmp_path, rng):
        dets = {}
        for k in range(1000):
            iid = f"P{k % 17:04d}"
            b = normalize(rng.uniform(0, 3000), rng.uniform(0, 3000), rng.uniform(2, 300),
                          rng.uniform(2, 300), rng.uniform(-3, 3))
            dets.setdefault(iid, []).append(Detection(b, int(rng.integers(0, 37)), float(rng.uniform())))
        write_detections(dets, tmp_path / "out", FAIR1M)
        back = parse_detections(tmp_path / "out", FAIR1M)
        assert sorted(back) == sorted(dets)
        for iid in dets:
            got = sorted(back[iid], key=lambda d: (d.class_id, -d.score))
            want = sorted(dets[iid], key=lambda d: (d.class_id, -d.score))
            assert len(got) == len(want)
            for a, b in zip(got, want):
                assert a.class_id == b.class_id
                assert abs(a.score - b.score) <= 1e-6
                assert np.allclose(obb_to_quad(a.box).points, obb_to_quad(b.box).points, atol=1e-6)

    def test_empty_files_created(self, tmp_path):
        write_detections({}, tmp_path / "out", SMALL)
        files = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert files == ["Task1_car.txt", "Task1_plane.txt", "Task1_ship.txt"]
        assert all((tmp_path / "out" / f).read_text() == "" for f in files)

    def test_bad_score(self):
        with pytest.raises(FormatError, match="outside"):
            parse_detection_text("img 1.5 0 0 4 0 4 2 0 2", 0)
        with pytest.raises(FormatError):
            parse_detection_text("img 0.5 0 0 4 0 4 2 0", 0)

    def test_unknown_category_file(self, tmp_path):
        (tmp_path / "Task1_tank.txt").write_text("")
        with pytest.raises(FormatError):
            parse_detections(tmp_path, SMALL)

    def test_fmt(self):
        assert fmt(-0.0000001) == "0.000000"
        assert fmt(1 / 3) == "0.333333"


class TestAtomic:
    def test_failed_write_leaves_nothing(self, tmp_path):
        target = tmp_path / "out.txt"

        class Boom(Exception):
            pass

        from obbkit.formats import atomic_path

        with pytest.raises(Boom):
            with atomic_path(target) as tmp:
                tmp.write_text("half")
                raise Boom()
        assert list(tmp_path.iterdir()) == []

    def test_failed_dir_leaves_nothing(self, tmp_path):
        with pytest.raises(RuntimeError):
            with atomic_dir(tmp_path / "d") as stage:
                (stage / "a.txt").write_text("x")
                raise RuntimeError("interrupted")
        assert list(tmp_path.iterdir()) == []

    def test_replace_existing(self, tmp_path):
        atomic_write_text(tmp_path / "f", "one")
        atomic_write_text(tmp_path / "f", "two")
        assert (tmp_path / "f").read_text() == "two"
        assert [p.name for p in tmp_path.iterdir()] == ["f"]


class TestConfig:
    def test_round_trip_byte_identical(self):
        text = PipelineConfig().dumps()
        assert PipelineConfig.loads(text).dumps() == text
        custom = PipelineConfig(patch=1024, gap=200, scales=(0.5, 1.0, 1.5), nms_mode="class_agnostic")
        assert PipelineConfig.loads(custom.dumps()) == custom
        assert PipelineConfig.loads(custom.dumps()).dumps() == custom.dumps()

    def test_defaults(self):
        d = json.loads(PipelineConfig().dumps())
        assert d["patch"] == 800 and d["gap"] == 150
        assert d["stage_thresholds"] == [[0.5, 0.4], [0.6, 0.4]]

    @pytest.mark.parametrize(
        "bad",
        [
            {"patch": 100, "gap": 100},
            {"nms_thr": 1.5},
            {"eval_iou_thr": 0},
            {"keep_visibility": 0},
            {"nms_mode": "soft"},
            {"eval_mode": "coco"},
            {"scales": []},
            {"stage_thresholds": [[0.3, 0.5]]},
            {"patch": 800.5},
        ],
    )
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            PipelineConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="lr"):
            PipelineConfig.loads('{"lr": 0.01}')


def test_svg_overlay():
    svg = svg_overlay(100, 50, [("gt", [(RotatedBox(10, 10, 8, 4, 0.3), 1, "a<b")])], dashed=("dets",))
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "a&lt;b" in svg and svg.count("<polygon") == 1
