from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

CATALOG_PATH = Path(__file__).with_name("catalog.txt")


@dataclass(frozen=True)
class RoomType:
    name: str
    rgb: tuple[int, int, int]
    weight: float


@dataclass(frozen=True)
class ObjectType:
    name: str
    plural: str
    rooms: tuple[str, ...] | None  # None means any room

    def fits(self, room: str) -> bool:
        return self.rooms is None or room in self.rooms


@dataclass(frozen=True)
class Catalog:
    rooms: tuple[RoomType, ...]
    colors: dict[str, tuple[int, int, int]]
    objects: tuple[ObjectType, ...]

    def room(self, name: str) -> RoomType:
        for r in self.rooms:
            if r.name == name:
                return r
        raise KeyError(name)

    def room_index(self, name: str) -> int:
        return [r.name for r in self.rooms].index(name)

    def object(self, name: str) -> ObjectType:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)


def parse_catalog(text: str) -> Catalog:
    rooms, colors, objects = [], {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        if kind == "room":
            name, r, g, b, w = rest
            rooms.append(RoomType(name.replace("_", " "), (int(r), int(g), int(b)), float(w)))
        elif kind == "color":
            name, r, g, b = rest
            colors[name] = (int(r), int(g), int(b))
        elif kind == "object":
            name, plural, where = rest
            affinity = None if where == "any" else tuple(s.replace("_", " ") for s in where.split(","))
            objects.append(ObjectType(name, plural, affinity))
        else:
            raise ValueError(f"catalog line {lineno}: unknown entry {kind!r}")
    return Catalog(tuple(rooms), colors, tuple(objects))


@lru_cache(maxsize=1)
def load_catalog(path: str | None = None) -> Catalog:
    return parse_catalog(Path(path or CATALOG_PATH).read_text())
