"""Start sampling, the scripted Observer, and template dialogs."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .catalog import load_catalog
from .environment import DOOR, Environment, NavNode

SCHEMA_VERSION = 1
ROLES = ("Locator", "Observer")
SPLITS = ("train", "val_seen", "val_unseen", "test")


@dataclass
class Message:
    role: str
    text: str
    meta: dict | None = None  # structured ground truth behind an Observer answer

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.text.strip():
            raise ValueError("message text must be non-empty")

    def to_dict(self) -> dict:
        d = {"role": self.role, "text": self.text}
        if self.meta is not None:
            d["meta"] = self.meta
        return d


@dataclass
class Episode:
    episode_id: str
    env_id: str
    start_node: int
    trajectory: list[int]
    final_position: tuple[int, float, float]  # (floor, x, y) metres
    dialog: list[Message]
    split: str = ""

    @property
    def floor(self) -> int:
        return self.final_position[0]

    @property
    def xy(self) -> tuple[float, float]:
        return self.final_position[1], self.final_position[2]

    @property
    def num_rounds(self) -> int:
        return len(self.dialog) // 2

    @property
    def nav_steps(self) -> int:
        return len(self.trajectory) - 1

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "episode_id": self.episode_id, "env_id": self.env_id,
                "start_node": self.start_node, "trajectory": list(self.trajectory),
                "final_position": list(self.final_position), "split": self.split,
                "dialog": [m.to_dict() for m in self.dialog]}

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported episode schema {d.get('schema')!r}")
        f, x, y = d["final_position"]
        return cls(d["episode_id"], d["env_id"], d["start_node"], list(d["trajectory"]),
                   (int(f), float(x), float(y)), [Message(**m) for m in d["dialog"]], d.get("split", ""))

    def without_answer(self) -> "Episode":
        """Copy with the final position and trajectory removed, for predictors."""
        return Episode(self.episode_id, self.env_id, self.start_node, [self.start_node],
                       (self.floor, math.nan, math.nan), self.dialog, self.split)


# ---------------------------------------------------------------------------
# start locations

def sample_start_locations(env: Environment, min_sep: float = 5.0, rng=None,
                           max_rejections: int | None = None) -> list[NavNode]:
    """Rejection-sample start nodes at least ``min_sep`` metres apart on each floor.

    Doorway nodes are never used as starts unless they are all the graph has.
    Sampling stops after ``max_rejections`` consecutive rejections (default:
    the number of candidates) or when every candidate has been drawn.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    candidates = [n for n in env.nav_nodes if n.room_id != DOOR] or list(env.nav_nodes)
    budget = len(candidates) if max_rejections is None else max_rejections
    chosen: list[NavNode] = []
    rejections = 0
    for i in rng.permutation(len(candidates)):
        node = candidates[i]
        ok = all(c.floor_index != node.floor_index or math.dist(c.position, node.position) >= min_sep
                 for c in chosen)
        if ok:
            chosen.append(node)
            rejections = 0
        else:
            rejections += 1
            if rejections >= budget:
                break
    return chosen


# ---------------------------------------------------------------------------
# world queries shared by the policy, the templates and the validator

VISIBLE_RADIUS_M = 3.0
NONDESCRIPT = 10 ** 6


def node_room(env: Environment, node: NavNode):
    return None if node.room_id == DOOR else env.floors[node.floor_index].rooms[node.room_id]


def room_label(env: Environment, node: NavNode) -> str:
    room = node_room(env, node)
    return "doorway" if room is None else room.label


def visible_objects(env: Environment, node: NavNode, radius_m: float | None = None):
    if node.room_id == DOOR:
        return []
    floor = env.floors[node.floor_index]
    r = (VISIBLE_RADIUS_M if radius_m is None else radius_m) / env.meters_per_pixel
    objs = [o for o in floor.objects_in(node.room_id) if math.hypot(o.row - node.row, o.col - node.col) <= r]
    return sorted(objs, key=lambda o: (math.hypot(o.row - node.row, o.col - node.col), o.object_type, o.color))


def signature(env: Environment, node: NavNode) -> tuple:
    return (room_label(env, node), tuple(sorted((o.color, o.object_type) for o in visible_objects(env, node))))


def signature_counts(env: Environment) -> dict[tuple, int]:
    """Number of distinct rooms in which each signature can be observed.

    Spots with no visible object are nondescript and never count as unique.
    """
    cache = getattr(env, "_signature_counts", None)
    if cache is None:
        rooms: dict[tuple, set] = {}
        for n in env.nav_nodes:
            rooms.setdefault(signature(env, n), set()).add((n.floor_index, n.room_id))
        cache = {sig: (len(where) if sig[1] else NONDESCRIPT) for sig, where in rooms.items()}
        env._signature_counts = cache
    return cache


def compass(drow: float, dcol: float, near: float) -> str:
    """Eight-way compass label (north = up) or 'middle' when within ``near``."""
    ns = "north" if drow < -near else "south" if drow > near else ""
    ew = "west" if dcol < -near else "east" if dcol > near else ""
    return " ".join(s for s in (ns, ew) if s) or "middle"


def side_of_room(env: Environment, node: NavNode) -> str:
    room = node_room(env, node)
    r0, c0, r1, c1 = room.interior
    cr, cc = (r0 + r1) / 2, (c0 + c1) / 2
    near_r, near_c = 0.2 * (r1 - r0 + 1), 0.2 * (c1 - c0 + 1)
    ns = "north" if node.row - cr < -near_r else "south" if node.row - cr > near_r else ""
    ew = "west" if node.col - cc < -near_c else "east" if node.col - cc > near_c else ""
    return " ".join(s for s in (ns, ew) if s) or "middle"


def direction_to(env: Environment, node: NavNode, obj) -> str:
    dist_px = math.hypot(obj.row - node.row, obj.col - node.col)
    if dist_px * env.meters_per_pixel < 1.0:
        return "next to me"
    # a component must be a sizeable share of the offset to be named
    return compass(obj.row - node.row, obj.col - node.col, near=0.4 * dist_px)


def nearest_door_m(env: Environment, node: NavNode) -> float:
    floor = env.floors[node.floor_index]
    nearest = min(math.hypot(d.center[0] - node.row, d.center[1] - node.col) for d in floor.doors)
    return nearest * env.meters_per_pixel


# ---------------------------------------------------------------------------
# scripted observer

@dataclass(frozen=True)
class PolicyParams:
    max_steps: int = 6
    min_rounds: int = 2
    max_rounds: int = 4


def _bfs(env: Environment, start: int, max_hops: int):
    adj = env.adjacency
    parent = {start: None}
    hops = {start: 0}
    q = deque([start])
    while q:
        u = q.popleft()
        if hops[u] == max_hops:
            continue
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                hops[v] = hops[u] + 1
                q.append(v)
    return parent, hops


def plan_walk(env: Environment, start: NavNode, max_steps: int = 6) -> list[int]:
    """Greedy walk towards the most distinctive reachable spot.

    Stays put when the start already has a unique signature; otherwise heads
    for the reachable non-hallway, non-doorway node with the rarest signature
    (ties: fewer hops, then lower id).
    """
    counts = signature_counts(env)
    label = room_label(env, start)
    if counts[signature(env, start)] == 1 and label not in ("hallway", "doorway"):
        return [start.node_id]
    parent, hops = _bfs(env, start.node_id, max_steps)

    def key(nid):
        n = env.node(nid)
        lab = room_label(env, n)
        return (lab in ("hallway", "doorway"), counts[signature(env, n)], hops[nid], nid)

    target = min(parent, key=key)
    path = []
    cur = target
    while cur is not None:
        path.append(cur)
        cur = parent[cur]
    return path[::-1]


# ---------------------------------------------------------------------------
# templates

LOCATOR_OPENERS = [
    "hello ! where are you ?",
    "hi , can you describe where you are ?",
    "what room are you in ?",
    "describe what you see around you .",
    "where are you right now ?",
    "hey , tell me about the room you are in .",
    "can you describe your surroundings ?",
    "what do you see ?",
]
OBSERVER_HERE = [
    "i am in {a_room} . i see {objs} .",
    "i'm standing in {a_room} next to {objs} .",
    "this looks like {a_room} . there is {objs} near me .",
    "i think i am in {a_room} with {objs} .",
    "it is {a_room} . i can see {objs} .",
    "{a_room} , right by {objs} .",
]
OBSERVER_MOVED = [
    "i started in {a_start} but walked into {a_room} . i see {objs} .",
    "i was in {a_start} so i moved to {a_room} with {objs} .",
    "there was nothing useful in the {start} . now i am in {a_room} near {objs} .",
    "i walked from {a_start} into {a_room} . there is {objs} here .",
    "i left the {start} . i am now in {a_room} and i see {objs} .",
]
OBSERVER_SHIFTED = [
    "i moved to a better spot in the {room} . i see {objs} .",
    "i walked across {a_room} and now i am next to {objs} .",
    "i am still in {a_room} but i moved closer to {objs} .",
    "i went to the other side of the {room} . there is {objs} here .",
]
QUESTIONS = {
    "color": [
        "what color is the {type} ?",
        "is there a {type} ? what color is it ?",
        "tell me the color of the {type} .",
        "which color is the {type} near you ?",
    ],
    "count": [
        "how many {plural} are in the room ?",
        "do you see any {plural} ? how many ?",
        "count the {plural} for me please .",
        "are there {plural} in the room ?",
    ],
    "side": [
        "which part of the room are you in ?",
        "are you near the middle or a corner of the room ?",
        "where in the room are you standing ?",
    ],
    "direction": [
        "where is the {color} {type} relative to you ?",
        "which direction is the {color} {type} from you ?",
        "is the {color} {type} close to you ?",
    ],
    "nearest": [
        "what is closest to you ?",
        "what is right next to you ?",
        "what object is nearest to you ?",
    ],
    "door": [
        "is there a door near you ?",
        "can you see a doorway close by ?",
    ],
    "floor": [
        "which floor are you on ?",
        "are you upstairs or downstairs ?",
    ],
}
ANSWERS = {
    "color": ["the {type} is {color} .", "it is {color} .", "{color} ."],
    "count_zero": ["there are no {plural} here .", "no , i do not see any {plural} ."],
    "count_one": ["there is one {type} .", "just one {type} ."],
    "count_many": ["there are {n} {plural} .", "i count {n} {plural} ."],
    "side": ["i am in the {side} part of the room .", "i am near the {side} of the room ."],
    "side_middle": ["i am in the middle of the room .", "right in the middle ."],
    "direction": ["it is to the {dir} of me .", "the {type} is {dir} of me ."],
    "direction_near": ["it is right next to me .", "the {type} is next to me ."],
    "nearest": ["the closest thing is {a_obj} .", "i am right next to {a_obj} ."],
    "nearest_none": ["there is nothing close to me .", "nothing is near me ."],
    "door_yes": ["yes , there is a door close to me .", "yes , a doorway is right by me ."],
    "door_no": ["no , there is no door nearby .", "no doors close to me ."],
    "floor": ["i am on the {ordinal} floor .", "this is the {ordinal} floor ."],
}
# closing round: the Locator echoes the room and asks for the Observer's place in it
CONFIRM_QUESTIONS = [
    "so you are in {a_room} . which part of it ?",
    "ok , {a_room} . where exactly in the {room} ?",
    "got it , the {room} . which side of it are you on ?",
    "alright , so the {room} . are you near a wall or the middle ?",
]
CONFIRM_ANSWERS = {
    "side": ["yes , i am in the {side} part of the {room} .", "right , near the {side} of the {room} ."],
    "middle": ["yes , i am in the middle of the {room} .", "right , in the middle of the {room} ."],
    "doorway": ["i am standing in a doorway .", "actually i am in a doorway ."],
}
NUMBER_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]
ORDINALS = ["first", "second", "third"]
DOOR_NEAR_M = 2.0


def article(noun: str) -> str:
    return ("an " if noun[0] in "aeiou" else "a ") + noun


def objects_phrase(objs) -> str:
    words = [article(f"{o.color} {o.object_type}") for o in objs]
    if not words:
        return "nothing special"
    if len(words) == 1:
        return words[0]
    return " , ".join(words[:-1]) + " and " + words[-1]


def _pick(rng, options):
    return options[int(rng.integers(len(options)))]


def _described_objects(env: Environment, node: NavNode):
    objs = visible_objects(env, node)
    if not objs and node.room_id != DOOR:
        objs = visible_objects(env, node, radius_m=1e9)
    return objs[:3]


def _ask(rng, env: Environment, node: NavNode, kind: str):
    """Return (question, answer, meta) for one question kind, or None if it does not apply."""
    cat = load_catalog()
    floor = env.floors[node.floor_index]
    room_objs = floor.objects_in(node.room_id) if node.room_id != DOOR else []
    if kind == "color":
        types = sorted({o.object_type for o in room_objs})
        unique = [t for t in types if sum(o.object_type == t for o in room_objs) == 1]
        if not unique:
            return None
        t = _pick(rng, unique)
        color = next(o.color for o in room_objs if o.object_type == t)
        return (_pick(rng, QUESTIONS["color"]).format(type=t),
                _pick(rng, ANSWERS["color"]).format(type=t, color=color),
                {"kind": "color", "type": t, "answer": color})
    if kind == "count":
        if node.room_id == DOOR:
            return None
        label = floor.rooms[node.room_id].label
        pool = sorted({o.object_type for o in room_objs} | {o.name for o in cat.objects if o.fits(label)})
        t = _pick(rng, pool)
        n = sum(o.object_type == t for o in room_objs)
        plural = cat.object(t).plural
        if n == 0:
            ans = _pick(rng, ANSWERS["count_zero"]).format(plural=plural)
        elif n == 1:
            ans = _pick(rng, ANSWERS["count_one"]).format(type=t)
        else:
            ans = _pick(rng, ANSWERS["count_many"]).format(n=NUMBER_WORDS[min(n, 9)], plural=plural)
        return (_pick(rng, QUESTIONS["count"]).format(plural=plural), ans,
                {"kind": "count", "type": t, "answer": n})
    if kind == "side":
        if node.room_id == DOOR:
            return None
        side = side_of_room(env, node)
        ans = (_pick(rng, ANSWERS["side_middle"]) if side == "middle"
               else _pick(rng, ANSWERS["side"]).format(side=side))
        return _pick(rng, QUESTIONS["side"]), ans, {"kind": "side", "answer": side}
    if kind == "direction":
        if not room_objs:
            return None
        o = _pick(rng, sorted(room_objs, key=lambda o: (o.row, o.col)))
        d = direction_to(env, node, o)
        ans = (_pick(rng, ANSWERS["direction_near"]).format(type=o.object_type) if d == "next to me"
               else _pick(rng, ANSWERS["direction"]).format(dir=d, type=o.object_type))
        return (_pick(rng, QUESTIONS["direction"]).format(color=o.color, type=o.object_type), ans,
                {"kind": "direction", "row": o.row, "col": o.col, "answer": d})
    if kind == "nearest":
        objs = visible_objects(env, node)
        if objs:
            o = objs[0]
            ans = _pick(rng, ANSWERS["nearest"]).format(a_obj=article(f"{o.color} {o.object_type}"))
            meta = {"kind": "nearest", "answer": [o.color, o.object_type]}
        else:
            ans = _pick(rng, ANSWERS["nearest_none"])
            meta = {"kind": "nearest", "answer": None}
        return _pick(rng, QUESTIONS["nearest"]), ans, meta
    if kind == "door":
        near = nearest_door_m(env, node) <= DOOR_NEAR_M
        return (_pick(rng, QUESTIONS["door"]), _pick(rng, ANSWERS["door_yes" if near else "door_no"]),
                {"kind": "door", "answer": near})
    if kind == "floor":
        if len(env.floors) < 2:
            return None
        return (_pick(rng, QUESTIONS["floor"]),
                _pick(rng, ANSWERS["floor"]).format(ordinal=ORDINALS[node.floor_index]),
                {"kind": "floor", "answer": node.floor_index})
    raise ValueError(f"unknown question kind {kind!r}")


def script_episode(env: Environment, start: NavNode, rng, policy: PolicyParams | None = None,
                   episode_id: str | None = None) -> Episode:
    """Scripted Observer walk plus a truthful template dialog about the final spot."""
    policy = policy or PolicyParams()
    traj = plan_walk(env, start, policy.max_steps)
    final = env.node(traj[-1])
    moved = len(traj) > 1
    n_rounds = policy.min_rounds if not moved else _randint(rng, policy.min_rounds, policy.max_rounds)

    label = room_label(env, final)
    objs = _described_objects(env, final)
    fmt = {"a_room": article(label), "objs": objects_phrase(objs)}
    describe_meta = {"kind": "describe", "room": label, "objects": [[o.color, o.object_type] for o in objs]}
    if moved:
        start_label = room_label(env, start)
        fmt.update(start=start_label, a_start=article(start_label))
        templates = OBSERVER_SHIFTED if start_label == label else OBSERVER_MOVED
        text = _pick(rng, templates).format(room=label, **fmt)
        describe_meta["start_room"] = start_label
    else:
        text = _pick(rng, OBSERVER_HERE).format(**fmt)
    dialog = [Message("Locator", _pick(rng, LOCATOR_OPENERS)), Message("Observer", text, describe_meta)]

    kinds = [k for k in QUESTIONS if k != "side"]  # the closing round covers the side
    used: set[str] = set()
    while len(dialog) < 2 * (n_rounds - 1):
        options = [k for k in kinds if k not in used]
        if not options:
            options = kinds
        order = [options[i] for i in rng.permutation(len(options))]
        for kind in order:
            qa = _ask(rng, env, final, kind)
            if qa is not None:
                used.add(kind)
                q, a, meta = qa
                dialog += [Message("Locator", q), Message("Observer", a, meta)]
                break
        else:
            break
    dialog += _confirm(rng, env, final)
    return Episode(episode_id or f"{env.env_id}_{start.node_id:04d}", env.env_id, start.node_id, traj,
                   (final.floor_index, final.position[0], final.position[1]), dialog)


def _confirm(rng, env: Environment, node: NavNode) -> list[Message]:
    label = room_label(env, node)
    q = _pick(rng, CONFIRM_QUESTIONS).format(a_room=article(label), room=label)
    if node.room_id == DOOR:
        side = "doorway"
        a = _pick(rng, CONFIRM_ANSWERS["doorway"])
    else:
        side = side_of_room(env, node)
        key = "middle" if side == "middle" else "side"
        a = _pick(rng, CONFIRM_ANSWERS[key]).format(side=side, room=label)
    return [Message("Locator", q), Message("Observer", a, {"kind": "confirm", "room": label, "answer": side})]


def _randint(rng, lo, hi):
    return int(rng.integers(lo, hi + 1))


# ---------------------------------------------------------------------------
# validation

def validate_episode(env: Environment, ep: Episode) -> list[str]:
    """Return a list of violated invariants (empty when the episode is valid)."""
    problems = []
    adj = env.adjacency
    if not ep.trajectory or ep.trajectory[0] != ep.start_node:
        problems.append("trajectory must start at the start node")
    for a, b in zip(ep.trajectory, ep.trajectory[1:]):
        if b not in adj.get(a, ()):
            problems.append(f"step {a}->{b} is not a nav-graph edge")
    last = env.node(ep.trajectory[-1])
    if (last.floor_index, *last.position) != tuple(ep.final_position):
        problems.append("final position differs from the last trajectory node")
    if len(ep.dialog) < 4 or len(ep.dialog) % 2:
        problems.append("dialog needs at least two full rounds")
    for i, m in enumerate(ep.dialog):
        if m.role != ROLES[i % 2]:
            problems.append(f"message {i} has role {m.role}, expected {ROLES[i % 2]}")
        if not m.text.strip():
            problems.append(f"message {i} is empty")
    if ep.split and ep.split not in SPLITS:
        problems.append(f"unknown split {ep.split!r}")
    problems += check_dialog_truth(env, ep)
    return problems


def check_dialog_truth(env: Environment, ep: Episode) -> list[str]:
    """Re-query the world for every structured Observer answer."""
    node = env.node(ep.trajectory[-1])
    floor = env.floors[node.floor_index]
    room_objs = floor.objects_in(node.room_id) if node.room_id != DOOR else []
    bad = []
    for m in ep.dialog:
        meta = m.meta
        if m.role != "Observer" or not meta:
            continue
        kind = meta["kind"]
        if kind == "describe":
            ok = meta["room"] == room_label(env, node) and all(
                any((o.color, o.object_type) == tuple(x) for o in room_objs) for x in meta["objects"])
            if "start_room" in meta:
                ok &= meta["start_room"] == room_label(env, env.node(ep.start_node))
        elif kind == "color":
            matches = [o for o in room_objs if o.object_type == meta["type"]]
            ok = len(matches) == 1 and matches[0].color == meta["answer"]
        elif kind == "count":
            ok = sum(o.object_type == meta["type"] for o in room_objs) == meta["answer"]
        elif kind == "side":
            ok = side_of_room(env, node) == meta["answer"]
        elif kind == "confirm":
            side = "doorway" if node.room_id == DOOR else side_of_room(env, node)
            ok = meta["room"] == room_label(env, node) and side == meta["answer"]
        elif kind == "direction":
            objs = [o for o in room_objs if (o.row, o.col) == (meta["row"], meta["col"])]
            ok = len(objs) == 1 and direction_to(env, node, objs[0]) == meta["answer"]
        elif kind == "nearest":
            vis = visible_objects(env, node)
            ok = (meta["answer"] is None and not vis) or (
                bool(vis) and [vis[0].color, vis[0].object_type] == list(meta["answer"]))
        elif kind == "door":
            ok = (nearest_door_m(env, node) <= DOOR_NEAR_M) == meta["answer"]
        elif kind == "floor":
            ok = node.floor_index == meta["answer"]
        else:
            ok = False
        if not ok:
            bad.append(f"{ep.episode_id}: untrue {kind} answer {m.text!r}")
    return bad
