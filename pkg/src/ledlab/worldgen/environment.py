"""Procedural multi-floor buildings.

Floors are carved by recursive binary space partitioning into rectangular
rooms separated by one-pixel walls; a hallway strip is split off first on
larger floors. Doors connect a random spanning tree of neighbouring rooms
plus every room touching the hallway. Navigation nodes sit on a roughly
2.25 m grid inside each room and at every door.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, GenerationError
from .catalog import Catalog, load_catalog

WALL = -1
DOOR = -2

NODE_SPACING_PX = 9
MAX_EDGE_M = 3.5


@dataclass(frozen=True)
class Room:
    room_id: int
    label: str
    # wall lines bounding the room; the interior is strictly inside
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def interior(self) -> tuple[int, int, int, int]:
        """(row0, col0, row1, col1) inclusive."""
        return self.y0 + 1, self.x0 + 1, self.y1 - 1, self.x1 - 1

    @property
    def area(self) -> int:
        return (self.x1 - self.x0 - 1) * (self.y1 - self.y0 - 1)


@dataclass(frozen=True)
class Door:
    row0: int
    col0: int
    row1: int
    col1: int
    rooms: tuple[int, int]  # second entry is -1 for an exterior door

    def cells(self):
        for r in range(self.row0, self.row1 + 1):
            for c in range(self.col0, self.col1 + 1):
                yield r, c

    @property
    def center(self) -> tuple[int, int]:
        return (self.row0 + self.row1) // 2, (self.col0 + self.col1) // 2


@dataclass(frozen=True)
class ObjectPlacement:
    object_type: str
    color: str
    row: int
    col: int
    room_id: int


@dataclass
class FloorPlan:
    floor_index: int
    height: int
    width: int
    rooms: list[Room]
    doors: list[Door]
    objects: list[ObjectPlacement] = field(default_factory=list)

    def __post_init__(self):
        grid = np.full((self.height, self.width), WALL, dtype=np.int32)
        for room in self.rooms:
            r0, c0, r1, c1 = room.interior
            grid[r0:r1 + 1, c0:c1 + 1] = room.room_id
        for door in self.doors:
            grid[door.row0:door.row1 + 1, door.col0:door.col1 + 1] = DOOR
        self.room_index = grid
        self._raster = None

    @property
    def free_mask(self) -> np.ndarray:
        return self.room_index != WALL

    @property
    def room_labels(self) -> np.ndarray:
        """Per-cell catalog room-type index; WALL / DOOR for non-room cells."""
        cat = load_catalog()
        lut = np.array([cat.room_index(r.label) for r in self.rooms], dtype=np.int32)
        out = self.room_index.copy()
        inside = out >= 0
        out[inside] = lut[out[inside]]
        return out

    @property
    def raster(self) -> np.ndarray:
        if self._raster is None:
            from .render import render_floor
            self._raster = render_floor(self)
        return self._raster

    def room_at(self, row: int, col: int) -> Room | None:
        idx = self.room_index[row, col]
        return self.rooms[idx] if idx >= 0 else None

    def objects_in(self, room_id: int) -> list[ObjectPlacement]:
        return [o for o in self.objects if o.room_id == room_id]

    def to_dict(self) -> dict:
        return {
            "floor_index": self.floor_index, "height": self.height, "width": self.width,
            "rooms": [asdict(r) for r in self.rooms],
            "doors": [asdict(d) for d in self.doors],
            "objects": [asdict(o) for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FloorPlan":
        return cls(d["floor_index"], d["height"], d["width"],
                   [Room(**r) for r in d["rooms"]],
                   [Door(**{**x, "rooms": tuple(x["rooms"])}) for x in d["doors"]],
                   [ObjectPlacement(**o) for o in d["objects"]])


@dataclass(frozen=True)
class NavNode:
    node_id: int
    floor_index: int
    position: tuple[float, float]  # (x, y) metres
    row: int
    col: int
    room_id: int  # DOOR for doorway nodes


@dataclass
class Environment:
    env_id: str
    floors: list[FloorPlan]
    nav_nodes: list[NavNode]
    edges: list[tuple[int, int]]
    meters_per_pixel: float = 0.25
    seed: int | None = None

    def __post_init__(self):
        self._adj = None
        self._signature_counts = None

    @property
    def adjacency(self) -> dict[int, list[int]]:
        if self._adj is None:
            adj = {n.node_id: [] for n in self.nav_nodes}
            for a, b in self.edges:
                adj[a].append(b)
                adj[b].append(a)
            self._adj = {k: sorted(v) for k, v in adj.items()}
        return self._adj

    def node(self, node_id: int) -> NavNode:
        n = self.nav_nodes[node_id]
        assert n.node_id == node_id
        return n

    def nodes_on(self, floor_index: int) -> list[NavNode]:
        return [n for n in self.nav_nodes if n.floor_index == floor_index]

    def floor_size_m(self, floor_index: int) -> tuple[float, float]:
        f = self.floors[floor_index]
        return f.width * self.meters_per_pixel, f.height * self.meters_per_pixel

    def to_dict(self) -> dict:
        return {
            "env_id": self.env_id, "seed": self.seed, "meters_per_pixel": self.meters_per_pixel,
            "floors": [f.to_dict() for f in self.floors],
            "nav_nodes": [asdict(n) for n in self.nav_nodes],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        nodes = [NavNode(**{**n, "position": tuple(n["position"])}) for n in d["nav_nodes"]]
        return cls(d["env_id"], [FloorPlan.from_dict(f) for f in d["floors"]], nodes,
                   [tuple(e) for e in d["edges"]], d["meters_per_pixel"], d.get("seed"))


@dataclass(frozen=True)
class WorldParams:
    width_range: tuple[int, int] = (128, 128)
    height_range: tuple[int, int] = (128, 128)
    floors_range: tuple[int, int] = (1, 2)
    rooms_range: tuple[int, int] = (8, 12)
    min_room_px: int = 14
    corridor_px: int = 8
    door_px: int = 4
    objects_range: tuple[int, int] = (1, 3)
    extra_door_prob: float = 0.2
    distinct_labels: bool = True
    meters_per_pixel: float = 0.25

    def validate(self) -> None:
        for lo, hi in (self.width_range, self.height_range):
            if not (64 <= lo <= hi <= 256) or lo % 8 or hi % 8:
                raise ConfigError("raster sides must be multiples of 8 within 64..256 px")
        if not 1 <= self.floors_range[0] <= self.floors_range[1] <= 3:
            raise ConfigError("floors must lie within 1..3")
        if not 1 <= self.rooms_range[0] <= self.rooms_range[1]:
            raise ConfigError("rooms_range must be positive and ordered")
        if self.objects_range[0] < 0 or self.objects_range[0] > self.objects_range[1]:
            raise ConfigError("objects_range must be non-negative and ordered")
        if self.meters_per_pixel <= 0:
            raise ConfigError("meters_per_pixel must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown worldgen keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _randint(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


# ---------------------------------------------------------------------------
# layout

def _max_rooms(width: int, height: int, min_px: int) -> int:
    return ((width - 1) // (min_px + 1)) * ((height - 1) // (min_px + 1))


def _split_layout(rng, width: int, height: int, n_rooms: int, p: WorldParams):
    """Return rectangles (x0, y0, x1, y1) and the index of the hallway (or None)."""
    rects = [(0, 0, width - 1, height - 1)]
    hallway = None
    m = p.min_room_px + 1
    if n_rooms >= 4:
        horizontal = width >= height
        span = height if horizontal else width
        lo, hi = m, span - 1 - m - (p.corridor_px + 1)
        if hi >= lo:
            a = _randint(rng, lo, hi)
            b = a + p.corridor_px + 1
            if horizontal:
                rects = [(0, 0, width - 1, a), (0, a, width - 1, b), (0, b, width - 1, height - 1)]
            else:
                rects = [(0, 0, a, height - 1), (a, 0, b, height - 1), (b, 0, width - 1, height - 1)]
            hallway = 1
    while len(rects) < n_rooms:
        order = sorted((i for i in range(len(rects)) if i != hallway),
                       key=lambda i: -(rects[i][2] - rects[i][0]) * (rects[i][3] - rects[i][1]))
        for i in order:
            x0, y0, x1, y1 = rects[i]
            w, h = x1 - x0, y1 - y0
            options = []
            if w >= 2 * m:
                options.append("v")
            if h >= 2 * m:
                options.append("h")
            if not options:
                continue
            if len(options) == 2:
                axis = "v" if w / h > rng.uniform(0.75, 1.5) else "h"
            else:
                axis = options[0]
            if axis == "v":
                c = _randint(rng, x0 + m, x1 - m)
                new = [(x0, y0, c, y1), (c, y0, x1, y1)]
            else:
                c = _randint(rng, y0 + m, y1 - m)
                new = [(x0, y0, x1, c), (x0, c, x1, y1)]
            rects[i] = new[0]
            rects.insert(i + 1, new[1])
            if hallway is not None and hallway > i:
                hallway += 1
            break
        else:
            break
    return rects, hallway


def _shared_wall(a: Room, b: Room):
    """Return (orientation, line, lo, hi) of the interior overlap, or None."""
    if a.x1 == b.x0 or b.x1 == a.x0:
        line = a.x1 if a.x1 == b.x0 else a.x0
        lo, hi = max(a.y0, b.y0) + 1, min(a.y1, b.y1) - 1
        return ("v", line, lo, hi) if hi >= lo else None
    if a.y1 == b.y0 or b.y1 == a.y0:
        line = a.y1 if a.y1 == b.y0 else a.y0
        lo, hi = max(a.x0, b.x0) + 1, min(a.x1, b.x1) - 1
        return ("h", line, lo, hi) if hi >= lo else None
    return None


def _door_at(orient: str, line: int, start: int, width: int, rooms: tuple[int, int]) -> Door:
    if orient == "v":
        return Door(start, line, start + width - 1, line, rooms)
    return Door(line, start, line, start + width - 1, rooms)


def _place_doors(rng, rooms: list[Room], hallway: int | None, width: int, height: int, p: WorldParams):
    dw = p.door_px
    adj = []
    for i in range(len(rooms)):
        for j in range(i + 1, len(rooms)):
            sw = _shared_wall(rooms[i], rooms[j])
            if sw and sw[3] - sw[2] + 1 >= dw + 2:
                adj.append((i, j, sw))
    parent = list(range(len(rooms)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    doors = []
    order = rng.permutation(len(adj))
    for k in order:
        i, j, (orient, line, lo, hi) = adj[k]
        touches_hall = hallway in (i, j)
        ri, rj = find(i), find(j)
        if touches_hall:
            # several doors along long hallway walls so no hallway spot is far from a room
            n = max(1, math.ceil((hi - lo + 1) / 28))
            seg = (hi - lo + 1) / n
            for s in range(n):
                a = int(lo + s * seg) + 1
                b = int(lo + (s + 1) * seg) - dw - 1
                start = _randint(rng, a, max(a, b))
                doors.append(_door_at(orient, line, start, dw, (i, j)))
        elif ri != rj or rng.random() < p.extra_door_prob:
            start = _randint(rng, lo + 1, hi - dw)
            doors.append(_door_at(orient, line, start, dw, (i, j)))
        if ri != rj:
            parent[ri] = rj
    if len({find(i) for i in range(len(rooms))}) != 1:
        raise GenerationError("rooms could not be connected with doors")

    # one exterior entrance
    candidates = []
    for room in rooms:
        for orient, line, lo, hi, on_edge in (
                ("h", room.y0, room.x0 + 1, room.x1 - 1, room.y0 == 0),
                ("h", room.y1, room.x0 + 1, room.x1 - 1, room.y1 == height - 1),
                ("v", room.x0, room.y0 + 1, room.y1 - 1, room.x0 == 0),
                ("v", room.x1, room.y0 + 1, room.y1 - 1, room.x1 == width - 1)):
            if on_edge and hi - lo + 1 >= dw + 2:
                candidates.append((room.room_id, orient, line, lo, hi))
    rid, orient, line, lo, hi = candidates[int(rng.integers(len(candidates)))]
    doors.append(_door_at(orient, line, _randint(rng, lo + 1, hi - dw), dw, (rid, -1)))
    return doors


def _place_objects(rng, floor: FloorPlan, catalog: Catalog, p: WorldParams) -> list[ObjectPlacement]:
    colors = sorted(catalog.colors)
    placed: list[ObjectPlacement] = []
    for room in floor.rooms:
        if room.label == "hallway":
            continue
        types = [o.name for o in catalog.objects if o.fits(room.label)]
        n = _randint(rng, *p.objects_range) + (1 if room.area > 900 else 0)
        r0, c0, r1, c1 = room.interior
        for _ in range(n):
            for _attempt in range(30):
                row = _randint(rng, r0 + 2, r1 - 2)
                col = _randint(rng, c0 + 2, c1 - 2)
                if all(max(abs(o.row - row), abs(o.col - col)) > 5 for o in placed):
                    placed.append(ObjectPlacement(types[int(rng.integers(len(types)))],
                                                  colors[int(rng.integers(len(colors)))], row, col,
                                                  room.room_id))
                    break
    return placed


def generate_floor(rng, floor_index: int, width: int, height: int, n_rooms: int,
                   p: WorldParams, catalog: Catalog) -> FloorPlan:
    rects, hallway = _split_layout(rng, width, height, n_rooms, p)
    if len(rects) < min(n_rooms, p.rooms_range[0]):
        raise GenerationError(f"could only fit {len(rects)} rooms, wanted {n_rooms}")
    names = [r.name for r in catalog.rooms if r.name != "hallway"]
    weights = np.array([catalog.room(n).weight for n in names], dtype=np.float64)
    left = weights.copy()
    rooms = []
    for i, (x0, y0, x1, y1) in enumerate(rects):
        if i == hallway:
            label = "hallway"
        else:
            if left.sum() == 0:
                left = weights.copy()
            k = int(rng.choice(len(names), p=left / left.sum()))
            if p.distinct_labels:
                left[k] = 0.0  # a type repeats only once every type is used on this floor
            label = names[k]
        rooms.append(Room(i, label, x0, y0, x1, y1))
    doors = _place_doors(rng, rooms, hallway, width, height, p)
    floor = FloorPlan(floor_index, height, width, rooms, doors)
    floor.objects = _place_objects(rng, floor, catalog, p)
    return floor


# ---------------------------------------------------------------------------
# navigation graph

def _line_of_sight(free: np.ndarray, a: tuple[int, int], b: tuple[int, int]) -> bool:
    n = int(2 * max(abs(a[0] - b[0]), abs(a[1] - b[1]))) + 2
    rows = np.rint(np.linspace(a[0], b[0], n)).astype(int)
    cols = np.rint(np.linspace(a[1], b[1], n)).astype(int)
    return bool(free[rows, cols].all())


def _axis_positions(lo: int, hi: int) -> list[int]:
    w = hi - lo + 1
    n = max(1, round(w / NODE_SPACING_PX))
    return [lo + int((k + 0.5) * w / n) for k in range(n)]


def build_nav_graph(floors: list[FloorPlan], mpp: float):
    nodes: list[NavNode] = []
    edges: list[tuple[int, int]] = []

    def add(fi, row, col, room_id):
        nodes.append(NavNode(len(nodes), fi, ((col + 0.5) * mpp, (row + 0.5) * mpp), row, col, room_id))
        return nodes[-1]

    max_px = MAX_EDGE_M / mpp
    for floor in floors:
        first = len(nodes)
        for room in floor.rooms:
            r0, c0, r1, c1 = room.interior
            for row in _axis_positions(r0, r1):
                for col in _axis_positions(c0, c1):
                    add(floor.floor_index, row, col, room.room_id)
        for door in floor.doors:
            if door.rooms[1] == -1:
                continue  # entrance doors lead outside the graph
            add(floor.floor_index, *door.center, DOOR)
        free = floor.free_mask
        fnodes = nodes[first:]
        pts = np.array([(n.row, n.col) for n in fnodes], dtype=float)
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        for i in range(len(fnodes)):
            for j in range(i + 1, len(fnodes)):
                if d[i, j] <= max_px and _line_of_sight(free, (fnodes[i].row, fnodes[i].col),
                                                        (fnodes[j].row, fnodes[j].col)):
                    edges.append((fnodes[i].node_id, fnodes[j].node_id))
    return nodes, edges


def components(node_ids: list[int], edges: list[tuple[int, int]]) -> int:
    adj = {i: [] for i in node_ids}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    seen, count = set(), 0
    for s in node_ids:
        if s in seen:
            continue
        count += 1
        q = deque([s])
        seen.add(s)
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    q.append(v)
    return count


def _ensure_discriminative(rng, floors: list[FloorPlan], catalog: Catalog) -> None:
    """Make sure at least one (type, colour) pair occurs exactly once in the building."""
    counts: dict[tuple[str, str], int] = {}
    for f in floors:
        for o in f.objects:
            counts[(o.object_type, o.color)] = counts.get((o.object_type, o.color), 0) + 1
    if any(v == 1 for v in counts.values()):
        return
    for f in floors:
        if f.objects:
            o = f.objects[0]
            for color in sorted(catalog.colors):
                if (o.object_type, color) not in counts:
                    f.objects[0] = ObjectPlacement(o.object_type, color, o.row, o.col, o.room_id)
                    return
    raise GenerationError("building has no objects to make discriminative")


def generate_environment(seed: int, params: WorldParams | None = None, env_id: str | None = None,
                         max_attempts: int = 20) -> Environment:
    """Deterministically build an :class:`Environment` from ``(seed, params)``."""
    p = params or WorldParams()
    p.validate()
    catalog = load_catalog()
    if p.rooms_range[0] > _max_rooms(p.width_range[1], p.height_range[1], p.min_room_px):
        raise GenerationError("requested room count exceeds what the floor area allows")
    rng = np.random.default_rng(seed)
    width = _randint(rng, p.width_range[0] // 8, p.width_range[1] // 8) * 8
    height = _randint(rng, p.height_range[0] // 8, p.height_range[1] // 8) * 8
    n_floors = _randint(rng, *p.floors_range)
    last_err = None
    for _ in range(max_attempts):
        try:
            floors = [generate_floor(rng, fi, width, height, _randint(rng, *p.rooms_range), p, catalog)
                      for fi in range(n_floors)]
            _ensure_discriminative(rng, floors, catalog)
            nodes, edges = build_nav_graph(floors, p.meters_per_pixel)
            for fi in range(n_floors):
                ids = [n.node_id for n in nodes if n.floor_index == fi]
                if components(ids, edges) != 1:
                    raise GenerationError(f"navigation graph on floor {fi} is disconnected")
        except GenerationError as err:
            last_err = err
            continue
        return Environment(env_id or f"env{seed:05d}", floors, nodes, edges, p.meters_per_pixel, seed)
    raise GenerationError(f"gave up after {max_attempts} attempts: {last_err}")
