"""Relation-graph extraction from world state under observability rules.

Stands in for the learned segmentation+description pipeline: a backend
interface with a ground-truth reference implementation.  Covered objects and
the contents of closed containers are invisible by default, which is what
makes exploration necessary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from .graph import (ContainerState, GraphInvariantError, Location, ObjectNode,
                    RelationGraph, derive_relations)
from .predicates import Goal
from .world import WorldState


@dataclass(frozen=True)
class ObservabilityRules:
    hide_closed_contents: bool = True
    hide_covered: bool = True
    # Semantic tags readable from the outside; None means all tags are
    # readable (category and color always are).
    visible_attributes: frozenset[str] | None = None


DEFAULT_RULES = ObservabilityRules()


def perceive(world: WorldState, rules: ObservabilityRules = DEFAULT_RULES,
             goal: Goal | None = None, timestamp: int = 0) -> RelationGraph:
    """Extract the relation graph of everything visible.

    The goal parameter is unused here: the ground-truth extractor does not
    need instruction conditioning, but external backends do, so the interface
    carries it.
    """
    del goal
    nodes: dict[str, ObjectNode] = {}
    layout: list[tuple[str, tuple[float, float, float]]] = []
    extents: dict[str, tuple[float, float, float]] = {}

    for obj_id, spec in world.objects.items():
        loc = world.locations.get(obj_id)
        cover = world.cover_of(obj_id)
        if cover is not None:
            if rules.hide_covered:
                continue
            loc = Location.covered_by(cover)
        if loc is not None and loc.kind == "inside" \
                and world.container_state.get(loc.target) == "closed" \
                and rules.hide_closed_contents:
            continue

        if obj_id in world.containers:
            state = ContainerState(world.container_state[obj_id])
        else:
            state = ContainerState.NOT_A_CONTAINER
        attrs = spec.attributes
        if rules.visible_attributes is not None:
            attrs = attrs & rules.visible_attributes
        nodes[obj_id] = ObjectNode(
            id=obj_id, category=spec.category, color=spec.color,
            container_state=state, attributes=frozenset(attrs),
            location=loc if loc is not None else Location.unknown())
        if loc is not None and loc.kind != "gripper":
            # Held objects have no stable pose, so they carry no edges.
            layout.append((obj_id, spec.position))
            extents[obj_id] = spec.half_extents

    edges = derive_relations(layout, extents)
    return RelationGraph(nodes, edges, timestamp).validate()


def full_visibility_graph(world: WorldState, timestamp: int = 0) -> RelationGraph:
    """Audit view: every container open and nothing covered.  Used by the
    harness to score episodes against ground truth, never by the loop."""
    state = dict(world.container_state)
    for cid in state:
        state[cid] = "open"
    opened = WorldState(
        objects=world.objects, surfaces=world.surfaces,
        containers=world.containers, locations=world.locations,
        container_state=state, covers={}, gripper=world.gripper,
        noise=world.noise, rng_state=world.rng_state,
        spill_counts=world.spill_counts, context=world.context)
    return perceive(opened, ObservabilityRules(False, False), None, timestamp)


class PerceptionBackend(Protocol):
    def observe(self, world: WorldState, goal: Goal | None,
                timestamp: int) -> RelationGraph: ...


@dataclass
class GroundTruthPerception:
    """Reference backend: perfect extraction from simulator state."""

    rules: ObservabilityRules = field(default_factory=ObservabilityRules)

    def observe(self, world: WorldState, goal: Goal | None,
                timestamp: int) -> RelationGraph:
        return perceive(world, self.rules, goal, timestamp)


def gate_graph(graph: RelationGraph) -> RelationGraph:
    """Invariant gate every backend's output must pass before entering the
    loop; raises GraphInvariantError on malformed graphs."""
    if not isinstance(graph, RelationGraph):
        raise GraphInvariantError(f"backend returned {type(graph).__name__}, not a graph")
    return graph.validate()
