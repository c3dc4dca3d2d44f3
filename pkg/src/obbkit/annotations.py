from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

from .geometry import RotatedBox


@dataclass(frozen=True)
class ObjectAnnotation:
    box: RotatedBox
    class_id: int
    difficult: bool = False


@dataclass(frozen=True)
class AnnotationSet:
    """Ground truth for one image."""

    image_id: str
    image_w: float
    image_h: float
    objects: Tuple[ObjectAnnotation, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError(f"{self.image_id}: image size must be positive")
        object.__setattr__(self, "objects", tuple(self.objects))

    def with_objects(self, objects, **changes) -> "AnnotationSet":
        return replace(self, objects=tuple(objects), **changes)

    @property
    def boxes(self):
        return [o.box for o in self.objects]
