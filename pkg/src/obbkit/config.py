from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Tuple

from .codec import CascadeConfig
from .evaluation import AP_MODES
from .nms import MODES as NMS_MODES


@dataclass(frozen=True)
class PipelineConfig:
    patch: int = 800
    gap: int = 150
    stage_thresholds: Tuple[Tuple[float, float], ...] = ((0.5, 0.4), (0.6, 0.4))
    conf_thr: float = 0.05
    nms_thr: float = 0.3
    nms_mode: str = "class_aware"
    eval_iou_thr: float = 0.5
    eval_mode: str = "all_point"
    scales: Tuple[float, ...] = (1.0,)
    keep_visibility: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "stage_thresholds", tuple(tuple(map(float, s)) for s in self.stage_thresholds)
        )
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not (isinstance(self.patch, int) and isinstance(self.gap, int)):
            raise ValueError("patch and gap must be integers")
        if not self.patch > self.gap >= 0:
            raise ValueError(f"need patch > gap >= 0, got {self.patch}, {self.gap}")
        for s in self.stage_thresholds:
            if len(s) != 2:
                raise ValueError(f"stage thresholds are (pos, neg) pairs, got {s}")
        CascadeConfig(self.stage_thresholds)
        for name in ("conf_thr", "nms_thr"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 < self.eval_iou_thr <= 1:
            raise ValueError("eval_iou_thr must lie in (0, 1]")
        if not 0 < self.keep_visibility <= 1:
            raise ValueError("keep_visibility must lie in (0, 1]")
        if self.nms_mode not in NMS_MODES:
            raise ValueError(f"nms_mode must be one of {NMS_MODES}")
        if self.eval_mode not in AP_MODES:
            raise ValueError(f"eval_mode must be one of {AP_MODES}")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be a non-empty list of positive numbers")
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")

    def dumps(self) -> str:
        """Canonical JSON: sorted keys, two-space indent, trailing newline."""
        d = asdict(self)
        d["stage_thresholds"] = [list(s) for s in self.stage_thresholds]
        d["scales"] = list(self.scales)
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PipelineConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ValueError(f"unknown config keys: {', '.join(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.loads(Path(path).read_text())
