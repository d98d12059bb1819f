"""Ground-truth tabletop simulator: objects, containers, covers, gripper,
primitive-action semantics with seeded failure injection."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .graph import Location


class Verb(Enum):
    GRASP = "GRASP"
    PLACE = "PLACE"
    OPEN = "OPEN"
    CLOSE = "CLOSE"


NOISY_VERBS = (Verb.GRASP, Verb.OPEN)


class Refusal(Enum):
    GRIPPER_OCCUPIED = "gripper_occupied"
    GRIPPER_EMPTY = "gripper_empty"
    TARGET_HIDDEN = "target_hidden"
    TARGET_BLOCKED = "target_blocked"
    NOT_A_CONTAINER = "not_a_container"
    WRONG_CONTAINER_STATE = "wrong_container_state"
    DESTINATION_CLOSED = "destination_closed"
    NONE = "none"


@dataclass(frozen=True)
class PrimitiveAction:
    verb: Verb
    object: str | None = None          # GRASP/OPEN/CLOSE target
    destination: "PlaceRef | None" = None  # PLACE only

    def __post_init__(self):
        if self.verb is Verb.PLACE:
            if self.destination is None or self.object is not None:
                raise ValueError("PLACE takes a destination and no object")
        else:
            if not self.object or self.destination is not None:
                raise ValueError(f"{self.verb.value} takes exactly an object id")

    def key(self) -> str:
        if self.verb is Verb.PLACE:
            return f"PLACE:{self.destination.kind}:{self.destination.target}"
        return f"{self.verb.value}:{self.object}"

    def to_json(self) -> dict:
        d = {"verb": self.verb.value}
        if self.object is not None:
            d["object"] = self.object
        if self.destination is not None:
            d["destination"] = {"kind": self.destination.kind,
                                "target": self.destination.target}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PrimitiveAction":
        dest = None
        if "destination" in d:
            dest = PlaceRef(d["destination"]["kind"], d["destination"]["target"])
        return cls(Verb(d["verb"]), d.get("object"), dest)

    def __str__(self) -> str:
        if self.verb is Verb.PLACE:
            return f"PLACE({self.destination.kind}({self.destination.target}))"
        return f"{self.verb.value}({self.object})"


@dataclass(frozen=True)
class PlaceRef:
    kind: str  # "on" | "inside"
    target: str

    @classmethod
    def on(cls, surface: str) -> "PlaceRef":
        return cls("on", surface)

    @classmethod
    def inside(cls, container: str) -> "PlaceRef":
        return cls("inside", container)


@dataclass(frozen=True)
class PrimitiveOutcome:
    executed: bool                    # preconditions passed
    succeeded: bool                   # after the noise draw
    refusal_reason: Refusal = Refusal.NONE
    moved_object: str | None = None   # object a PLACE put down, for traces

    def __post_init__(self):
        if not self.executed:
            assert not self.succeeded and self.refusal_reason is not Refusal.NONE

    def to_json(self) -> dict:
        return {"executed": self.executed, "succeeded": self.succeeded,
                "refusal_reason": self.refusal_reason.value,
                "moved_object": self.moved_object}


class SceneError(ValueError):
    pass


class DanglingReferenceError(SceneError):
    pass


class DuplicateIdError(SceneError):
    pass


class CoverCycleError(SceneError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    category: str
    color: str | None
    attributes: frozenset[str]
    position: tuple[float, float, float]
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class ContainerSpec:
    id: str
    closable: bool
    interior_anchor: tuple[float, float]
    slot_pitch: float
    # front zone rectangle on the table plane, or None for "never blocked"
    zone_x: tuple[float, float] | None = None
    zone_y: tuple[float, float] | None = None


@dataclass(frozen=True)
class SurfaceSpec:
    id: str
    spill_origin: tuple[float, float]
    spill_pitch: float


@dataclass(frozen=True)
class SceneContext:
    """Static scene facts shared with planner and reflection: declared
    container order and where cleared objects get parked."""

    name: str
    container_order: tuple[str, ...]
    spill_surface: str


@dataclass(frozen=True)
class WorldState:
    objects: dict[str, ObjectSpec]
    surfaces: dict[str, SurfaceSpec]
    containers: dict[str, ContainerSpec]
    locations: dict[str, Location]          # object id -> location
    container_state: dict[str, str]         # container id -> "open" | "closed"
    covers: dict[str, str]                  # cover id -> covered object id
    gripper: str | None
    noise: dict[Verb, float]
    rng_state: tuple
    spill_counts: dict[str, int] = field(default_factory=dict)
    context: SceneContext = None

    # -- queries ------------------------------------------------------------

    def position(self, obj_id: str) -> tuple[float, float, float]:
        return self.objects[obj_id].position

    def covered_object(self, cover_id: str) -> str | None:
        return self.covers.get(cover_id)

    def cover_of(self, obj_id: str) -> str | None:
        for cover, hidden in self.covers.items():
            if hidden == obj_id:
                return cover
        return None

    def contents(self, container_id: str) -> list[str]:
        return sorted(o for o, loc in self.locations.items()
                      if loc.kind == "inside" and loc.target == container_id)

    def footprint(self, obj_id: str) -> tuple[float, float, float, float]:
        spec = self.objects[obj_id]
        x, y, _ = spec.position
        hx, hy, _ = spec.half_extents
        return (x - hx, x + hx, y - hy, y + hy)

    def zone_blockers(self, container_id: str) -> list[str]:
        """Objects sitting on a surface whose footprint overlaps the
        container's declared front zone."""
        spec = self.containers.get(container_id)
        if spec is None or spec.zone_x is None:
            return []
        out = []
        for obj_id, loc in self.locations.items():
            if loc.kind != "on" or obj_id == container_id:
                continue
            x0, x1, y0, y1 = self.footprint(obj_id)
            if x1 > spec.zone_x[0] and x0 < spec.zone_x[1] \
                    and y1 > spec.zone_y[0] and y0 < spec.zone_y[1]:
                out.append(obj_id)
        return sorted(out)

    # -- value-semantics helpers ---------------------------------------------

    def with_seed(self, seed: int) -> "WorldState":
        rng = random.Random(seed)
        return replace(self, rng_state=rng.getstate())

    def canonical(self) -> str:
        doc = {
            "locations": {k: str(v) for k, v in sorted(self.locations.items())},
            "container_state": dict(sorted(self.container_state.items())),
            "covers": dict(sorted(self.covers.items())),
            "gripper": self.gripper,
            "positions": {k: list(self.objects[k].position)
                          for k in sorted(self.objects)},
            "noise": {v.value: p for v, p in sorted(self.noise.items(),
                                                    key=lambda kv: kv[0].value)},
            "spill_counts": dict(sorted(self.spill_counts.items())),
            "rng_digest": hash(self.rng_state) & 0xFFFFFFFF,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def inject_noise(world: WorldState, probs: dict[Verb, float]) -> WorldState:
    for verb, p in probs.items():
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"noise probability out of range: {verb.value}={p}")
    return replace(world, noise=dict(probs))


def load_scene(source: dict | str | Path) -> WorldState:
    """Build a WorldState from a scene document (dict, JSON string or path)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and source.endswith(".json")):
        doc = json.loads(Path(source).read_text())
    elif isinstance(source, str):
        doc = json.loads(source)
    else:
        doc = source

    seen: set[str] = set()
    objects: dict[str, ObjectSpec] = {}
    locations: dict[str, Location] = {}
    surfaces: dict[str, SurfaceSpec] = {}

    for s in doc.get("surfaces", []):
        if s["id"] in seen:
            raise DuplicateIdError(f"duplicate id {s['id']!r}")
        seen.add(s["id"])
        surfaces[s["id"]] = SurfaceSpec(
            s["id"], tuple(s.get("spill_origin", (0.9, 0.1))),
            s.get("spill_pitch", 0.07))

    for o in doc.get("objects", []):
        if o["id"] in seen:
            raise DuplicateIdError(f"duplicate id {o['id']!r}")
        seen.add(o["id"])
        objects[o["id"]] = ObjectSpec(
            id=o["id"], category=o["category"], color=o.get("color"),
            attributes=frozenset(o.get("attributes", [])),
            position=tuple(o["position"]),
            half_extents=tuple(o.get("half_extents", (0.03, 0.03, 0.03))))

    containers: dict[str, ContainerSpec] = {}
    container_state: dict[str, str] = {}
    order: list[str] = []
    for c in doc.get("containers", []):
        cid = c["id"]
        if cid not in objects:
            raise DanglingReferenceError(f"container {cid!r} has no object entry")
        if cid in containers:
            raise DuplicateIdError(f"duplicate container {cid!r}")
        zone = c.get("front_zone")
        containers[cid] = ContainerSpec(
            id=cid, closable=c.get("closable", True),
            interior_anchor=tuple(c.get("interior_anchor",
                                        objects[cid].position[:2])),
            slot_pitch=c.get("slot_pitch", 0.05),
            zone_x=tuple(zone["x"]) if zone else None,
            zone_y=tuple(zone["y"]) if zone else None)
        state = c.get("state", "open" if not c.get("closable", True) else "closed")
        if not containers[cid].closable and state != "open":
            raise SceneError(f"non-closable container {cid!r} must start open")
        container_state[cid] = state
        order.append(cid)

    for o in doc.get("objects", []):
        loc = o["location"]
        kind, target = loc["kind"], loc.get("target")
        if kind == "on":
            if target not in surfaces:
                raise DanglingReferenceError(f"{o['id']!r} on missing surface {target!r}")
            locations[o["id"]] = Location.on(target)
        elif kind == "inside":
            if target not in containers:
                raise DanglingReferenceError(f"{o['id']!r} inside missing container {target!r}")
            locations[o["id"]] = Location.inside(target)
        else:
            raise SceneError(f"object {o['id']!r} has unsupported location {kind!r}")

    covers: dict[str, str] = {}
    for cv in doc.get("covers", []):
        cover, hidden = cv["cover"], cv["covers"]
        for ref in (cover, hidden):
            if ref not in objects:
                raise DanglingReferenceError(f"cover entry references missing {ref!r}")
        if cover == hidden or hidden in covers or cover in covers.values():
            raise CoverCycleError(f"cover chain at {cover!r}/{hidden!r}")
        if locations[hidden].kind != "on":
            raise SceneError(f"covered object {hidden!r} must rest on a surface")
        covers[cover] = hidden

    noise = {Verb(k.upper()): float(p) for k, p in doc.get("noise", {}).items()}
    for p in noise.values():
        if not 0.0 <= p <= 1.0:
            raise SceneError(f"noise probability out of range: {p}")

    spill = doc.get("spill_surface") or (next(iter(surfaces)) if surfaces else None)
    context = SceneContext(name=doc.get("name", "scene"),
                           container_order=tuple(order),
                           spill_surface=spill)
    world = WorldState(
        objects=objects, surfaces=surfaces, containers=containers,
        locations=locations, container_state=container_state, covers=covers,
        gripper=None, noise=noise, rng_state=None, spill_counts={},
        context=context)
    return world.with_seed(int(doc.get("seed", 0)))


# ---------------------------------------------------------------------------
# Primitive semantics


def apply_primitive(world: WorldState,
                    action: PrimitiveAction) -> tuple[WorldState, PrimitiveOutcome]:
    """Execute one primitive.  Precondition violations become refusals that
    leave the world (including the rng stream) untouched; noise draws happen
    only on executed GRASP/OPEN attempts."""
    if action.verb is Verb.GRASP:
        return _grasp(world, action.object)
    if action.verb is Verb.PLACE:
        return _place(world, action.destination)
    return _open_close(world, action.verb, action.object)


def _refuse(world: WorldState, reason: Refusal) -> tuple[WorldState, PrimitiveOutcome]:
    return world, PrimitiveOutcome(executed=False, succeeded=False,
                                   refusal_reason=reason)


def _draw(world: WorldState, verb: Verb) -> tuple[WorldState, bool]:
    p = world.noise.get(verb, 0.0)
    if p <= 0.0:
        return world, True
    rng = random.Random()
    rng.setstate(world.rng_state)
    ok = rng.random() >= p
    return replace(world, rng_state=rng.getstate()), ok


def _grasp(world: WorldState, obj_id: str) -> tuple[WorldState, PrimitiveOutcome]:
    if world.gripper is not None:
        return _refuse(world, Refusal.GRIPPER_OCCUPIED)
    if obj_id not in world.objects:
        return _refuse(world, Refusal.TARGET_HIDDEN)
    if world.cover_of(obj_id) is not None:
        return _refuse(world, Refusal.TARGET_HIDDEN)
    loc = world.locations.get(obj_id)
    if loc is None or loc.kind == "gripper":
        return _refuse(world, Refusal.TARGET_HIDDEN)
    if loc.kind == "inside":
        if world.container_state.get(loc.target) == "closed":
            return _refuse(world, Refusal.TARGET_HIDDEN)
        if world.zone_blockers(loc.target):
            return _refuse(world, Refusal.TARGET_BLOCKED)

    world, ok = _draw(world, Verb.GRASP)
    if not ok:
        return world, PrimitiveOutcome(executed=True, succeeded=False)

    locations = dict(world.locations)
    locations[obj_id] = Location.gripper()
    covers = dict(world.covers)
    covers.pop(obj_id, None)  # lifting a cover reveals what it hid
    new = replace(world, locations=locations, covers=covers, gripper=obj_id)
    return new, PrimitiveOutcome(executed=True, succeeded=True)


def _place(world: WorldState, dest: PlaceRef) -> tuple[WorldState, PrimitiveOutcome]:
    if world.gripper is None:
        return _refuse(world, Refusal.GRIPPER_EMPTY)
    held = world.gripper
    if dest.kind == "on":
        surface = world.surfaces.get(dest.target)
        if surface is None:
            return _refuse(world, Refusal.NOT_A_CONTAINER)
        count = world.spill_counts.get(dest.target, 0)
        x = surface.spill_origin[0] + count * surface.spill_pitch
        pos = (x, surface.spill_origin[1], world.objects[held].half_extents[2])
        loc = Location.on(dest.target)
        spill_counts = dict(world.spill_counts)
        spill_counts[dest.target] = count + 1
    elif dest.kind == "inside":
        spec = world.containers.get(dest.target)
        if spec is None:
            return _refuse(world, Refusal.NOT_A_CONTAINER)
        if world.container_state.get(dest.target) == "closed":
            return _refuse(world, Refusal.DESTINATION_CLOSED)
        k = len(world.contents(dest.target))
        pos = (spec.interior_anchor[0] + k * spec.slot_pitch,
               spec.interior_anchor[1], world.objects[held].half_extents[2])
        loc = Location.inside(dest.target)
        spill_counts = world.spill_counts
    else:
        return _refuse(world, Refusal.NOT_A_CONTAINER)

    objects = dict(world.objects)
    objects[held] = replace(objects[held], position=pos)
    locations = dict(world.locations)
    locations[held] = loc
    new = replace(world, objects=objects, locations=locations, gripper=None,
                  spill_counts=spill_counts)
    return new, PrimitiveOutcome(executed=True, succeeded=True, moved_object=held)


def _open_close(world: WorldState, verb: Verb,
                container_id: str) -> tuple[WorldState, PrimitiveOutcome]:
    spec = world.containers.get(container_id)
    if spec is None or not spec.closable:
        return _refuse(world, Refusal.NOT_A_CONTAINER)
    state = world.container_state[container_id]
    wanted_before = "closed" if verb is Verb.OPEN else "open"
    if state != wanted_before:
        return _refuse(world, Refusal.WRONG_CONTAINER_STATE)
    if world.gripper is not None:
        return _refuse(world, Refusal.GRIPPER_OCCUPIED)
    if world.zone_blockers(container_id):
        return _refuse(world, Refusal.TARGET_BLOCKED)

    if verb is Verb.OPEN:
        world, ok = _draw(world, Verb.OPEN)
        if not ok:
            return world, PrimitiveOutcome(executed=True, succeeded=False)

    states = dict(world.container_state)
    states[container_id] = "open" if verb is Verb.OPEN else "closed"
    return (replace(world, container_state=states),
            PrimitiveOutcome(executed=True, succeeded=True))
