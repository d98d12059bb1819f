"""Object-centric spatial relation graph: nodes, directed relation edges, diffs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum


class Relation(Enum):
    ABOVE = "above"
    BELOW = "below"
    LEFT = "left"
    RIGHT = "right"
    FRONT = "front"
    BEHIND = "behind"

    @property
    def inverse(self) -> "Relation":
        return _INVERSES[self]


_INVERSES = {
    Relation.ABOVE: Relation.BELOW,
    Relation.BELOW: Relation.ABOVE,
    Relation.LEFT: Relation.RIGHT,
    Relation.RIGHT: Relation.LEFT,
    Relation.FRONT: Relation.BEHIND,
    Relation.BEHIND: Relation.FRONT,
}


class ContainerState(Enum):
    OPEN = "open"
    CLOSED = "closed"
    NOT_A_CONTAINER = "not_a_container"


@dataclass(frozen=True)
class Location:
    """Where an object is: on(surface), inside(container), gripper, covered_by(x), unknown."""

    kind: str
    target: str | None = None

    @classmethod
    def on(cls, surface: str) -> "Location":
        return cls("on", surface)

    @classmethod
    def inside(cls, container: str) -> "Location":
        return cls("inside", container)

    @classmethod
    def gripper(cls) -> "Location":
        return cls("gripper")

    @classmethod
    def covered_by(cls, cover: str) -> "Location":
        return cls("covered_by", cover)

    @classmethod
    def unknown(cls) -> "Location":
        return cls("unknown")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.target is not None:
            d["target"] = self.target
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Location":
        return cls(d["kind"], d.get("target"))

    def __str__(self) -> str:
        return self.kind if self.target is None else f"{self.kind}({self.target})"


@dataclass(frozen=True)
class ObjectNode:
    id: str
    category: str
    color: str | None = None
    container_state: ContainerState = ContainerState.NOT_A_CONTAINER
    attributes: frozenset[str] = frozenset()
    location: Location = Location.unknown()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "color": self.color,
            "container_state": self.container_state.value,
            "attributes": sorted(self.attributes),
            "location": self.location.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ObjectNode":
        return cls(
            id=d["id"],
            category=d["category"],
            color=d.get("color"),
            container_state=ContainerState(d.get("container_state", "not_a_container")),
            attributes=frozenset(d.get("attributes", [])),
            location=Location.from_json(d.get("location", {"kind": "unknown"})),
        )


@dataclass(frozen=True, order=True)
class RelationEdge:
    source: str
    relation: Relation = field(compare=False)
    target: str

    def __post_init__(self):
        if self.source == self.target:
            raise GraphInvariantError(f"self-edge on {self.source!r}")

    @property
    def mirror(self) -> "RelationEdge":
        return RelationEdge(self.target, self.relation.inverse, self.source)

    def key(self) -> tuple[str, str, str]:
        return (self.source, self.relation.value, self.target)


class GraphInvariantError(ValueError):
    """A graph violates a structural invariant (dangling edge, two held objects, ...)."""


class ConfigurationError(ValueError):
    """Bad caller-supplied configuration (duplicate ids, non-positive threshold, ...)."""


@dataclass(frozen=True)
class RelationGraph:
    nodes: dict[str, ObjectNode]
    edges: frozenset[RelationEdge]
    timestamp: int = 0

    def validate(self) -> "RelationGraph":
        held = [n.id for n in self.nodes.values() if n.location.kind == "gripper"]
        if len(held) > 1:
            raise GraphInvariantError(f"multiple objects in gripper: {held}")
        for n in self.nodes.values():
            if n.location.kind == "inside" and n.location.target not in self.nodes:
                raise GraphInvariantError(
                    f"{n.id!r} inside missing container {n.location.target!r}"
                )
        for e in self.edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise GraphInvariantError(f"dangling edge {e.key()}")
        if self.timestamp < 0:
            raise GraphInvariantError("negative timestamp")
        return self

    def node(self, obj_id: str) -> ObjectNode | None:
        return self.nodes.get(obj_id)

    def held_object(self) -> ObjectNode | None:
        for n in self.nodes.values():
            if n.location.kind == "gripper":
                return n
        return None

    def contents(self, container_id: str) -> list[ObjectNode]:
        return sorted(
            (n for n in self.nodes.values()
             if n.location.kind == "inside" and n.location.target == container_id),
            key=lambda n: n.id,
        )

    def containers(self) -> list[ObjectNode]:
        return sorted(
            (n for n in self.nodes.values()
             if n.container_state is not ContainerState.NOT_A_CONTAINER),
            key=lambda n: n.id,
        )

    def without_edges(self) -> "RelationGraph":
        return RelationGraph(self.nodes, frozenset(), self.timestamp)

    def to_json(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "nodes": [self.nodes[k].to_json() for k in sorted(self.nodes)],
            "edges": [list(e.key()) for e in sorted(self.edges, key=RelationEdge.key)],
        }

    @classmethod
    def from_json(cls, d: dict) -> "RelationGraph":
        nodes = {nd["id"]: ObjectNode.from_json(nd) for nd in d.get("nodes", [])}
        edges = frozenset(
            RelationEdge(s, Relation(r), t) for s, r, t in d.get("edges", [])
        )
        return cls(nodes, edges, d.get("timestamp", 0))

    def canonical(self) -> str:
        """Stable text form: sorted keys, nodes by id, edges lexicographic."""
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


# Axis index -> (negative-side relation, positive-side relation).
# x grows left->right, y grows front->far (front = nearer the robot), z grows up.
_AXIS_RELATIONS = {
    0: (Relation.LEFT, Relation.RIGHT),
    1: (Relation.FRONT, Relation.BEHIND),
    2: (Relation.BELOW, Relation.ABOVE),
}


def derive_relations(
    layout: list[tuple[str, tuple[float, float, float]]],
    extents: dict[str, tuple[float, float, float]] | None = None,
    thresholds: tuple[float, float, float] = (0.02, 0.02, 0.02),
) -> frozenset[RelationEdge]:
    """Derive directed spatial edges from object centers and half-extents.

    For every unordered pair and every axis, the antisymmetric edge pair is
    emitted when the center gap on that axis exceeds the axis threshold plus
    the summed half-extents.  A pair may relate on several axes at once.
    """
    extents = extents or {}
    ids = [obj_id for obj_id, _ in layout]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigurationError(f"duplicate object ids in layout: {dupes}")
    for axis_tau in thresholds:
        if not axis_tau > 0:
            raise ConfigurationError(f"non-positive threshold {axis_tau}")
    for obj_id, pos in layout:
        if not all(map(_finite, pos)):
            raise ConfigurationError(f"non-finite position for {obj_id!r}")

    pairs = sorted(layout)
    edges: set[RelationEdge] = set()
    for i in range(len(pairs)):
        a_id, a_pos = pairs[i]
        a_ext = extents.get(a_id, (0.0, 0.0, 0.0))
        for j in range(i + 1, len(pairs)):
            b_id, b_pos = pairs[j]
            b_ext = extents.get(b_id, (0.0, 0.0, 0.0))
            for axis in range(3):
                gap = b_pos[axis] - a_pos[axis]
                limit = thresholds[axis] + a_ext[axis] + b_ext[axis]
                if abs(gap) <= limit:
                    continue
                neg, pos_rel = _AXIS_RELATIONS[axis]
                if gap > 0:
                    edge = RelationEdge(a_id, neg, b_id)
                else:
                    edge = RelationEdge(a_id, pos_rel, b_id)
                edges.add(edge)
                edges.add(edge.mirror)
    return frozenset(edges)


def _finite(x: float) -> bool:
    return x == x and abs(x) != float("inf")


@dataclass(frozen=True)
class GraphChangeSet:
    added_nodes: frozenset[str]
    removed_nodes: frozenset[str]
    state_changes: tuple[tuple[str, str, str, str], ...]
    added_edges: frozenset[RelationEdge]
    removed_edges: frozenset[RelationEdge]

    def is_empty(self) -> bool:
        return not (self.added_nodes or self.removed_nodes or self.state_changes
                    or self.added_edges or self.removed_edges)

    def changed_fields(self, obj_id: str) -> dict[str, tuple[str, str]]:
        return {f: (old, new) for i, f, old, new in self.state_changes if i == obj_id}


_NODE_FIELDS = ("category", "color", "container_state", "attributes", "location")


def graph_diff(before: RelationGraph, after: RelationGraph) -> GraphChangeSet:
    """Exact set differences plus field-level changes for nodes present in both."""
    added = frozenset(after.nodes) - frozenset(before.nodes)
    removed = frozenset(before.nodes) - frozenset(after.nodes)
    changes: list[tuple[str, str, str, str]] = []
    for obj_id in sorted(set(before.nodes) & set(after.nodes)):
        old, new = before.nodes[obj_id], after.nodes[obj_id]
        for f in _NODE_FIELDS:
            ov, nv = getattr(old, f), getattr(new, f)
            if ov != nv:
                changes.append((obj_id, f, _render(ov), _render(nv)))
    return GraphChangeSet(
        added_nodes=added,
        removed_nodes=removed,
        state_changes=tuple(changes),
        added_edges=frozenset(after.edges - before.edges),
        removed_edges=frozenset(before.edges - after.edges),
    )


def _render(value) -> str:
    if isinstance(value, ContainerState):
        return value.value
    if isinstance(value, Location):
        return str(value)
    if isinstance(value, frozenset):
        return ",".join(sorted(value))
    return str(value)
