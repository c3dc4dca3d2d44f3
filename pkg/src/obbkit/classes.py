from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple

FAIR1M_NAMES = (
    "Boeing737", "Boeing777", "Boeing747", "Boeing787",
    "A320", "A220", "A330", "A350", "C919", "ARJ21", "other-airplane",
    "Passenger_Ship", "Motorboat", "Fishing_Boat", "Tugboat", "Engineering_Ship",
    "Liquid_Cargo_Ship", "Dry_Cargo_Ship", "Warship", "other-ship",
    "Small_Car", "Bus", "Cargo_Truck", "Dump_Truck", "Van", "Trailer", "Tractor",
    "Truck_Tractor", "Excavator", "other-vehicle",
    "Baseball_Field", "Basketball_Court", "Football_Field", "Tennis_Court",
    "Roundabout", "Intersection", "Bridge",
)  # fmt: skip


@dataclass(frozen=True)
class ClassTable:
    """Ordered category names; the index of a name is its class id.

    Names are single whitespace-free tokens because they appear inside
    whitespace-separated annotation lines and in result file names.
    """

    names: Tuple[str, ...]
    version: str = "custom"

    def __post_init__(self) -> None:
        names = tuple(self.names)
        if not names:
            raise ValueError("class table is empty")
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        for n in names:
            if not n or any(ch.isspace() for ch in n):
                raise ValueError(f"class name {n!r} must be a non-empty token")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._lookup[name]

    def __contains__(self, name: str) -> bool:
        return name in self._lookup

    @property
    def _lookup(self) -> Dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    @property
    def header(self) -> str:
        return f"classes: {self.version} ({len(self.names)})"

    def dumps(self) -> str:
        return f"# version: {self.version}\n" + "".join(n + "\n" for n in self.names)

    @classmethod
    def loads(cls, text: str) -> "ClassTable":
        version = "custom"
        names = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("version:"):
                    version = body.split(":", 1)[1].strip()
                continue
            names.append(line)
        return cls(tuple(names), version)

    @classmethod
    def load(cls, path) -> "ClassTable":
        return cls.loads(Path(path).read_text())


FAIR1M = ClassTable(FAIR1M_NAMES, "fair1m-v1")


def resolve(names: Sequence[str] | ClassTable | None) -> ClassTable:
    if names is None:
        return FAIR1M
    if isinstance(names, ClassTable):
        return names
    return ClassTable(tuple(names))
