"""Goal predicates over relation graphs with three-valued (Kleene) evaluation.

Truth is three-valued because exploration tasks hinge on "not enough
information yet": the contents of a closed, never-opened container are
neither provably present nor absent, so predicates over them evaluate to
UNKNOWN until an observation decides them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

from .graph import ContainerState, Location, ObjectNode, RelationGraph


class Truth(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    @staticmethod
    def of(b: bool) -> "Truth":
        return Truth.TRUE if b else Truth.FALSE


def kleene_all(values: Iterable[Truth]) -> Truth:
    result = Truth.TRUE
    for v in values:
        if v is Truth.FALSE:
            return Truth.FALSE
        if v is Truth.UNKNOWN:
            result = Truth.UNKNOWN
    return result


def kleene_any(values: Iterable[Truth]) -> Truth:
    result = Truth.FALSE
    for v in values:
        if v is Truth.TRUE:
            return Truth.TRUE
        if v is Truth.UNKNOWN:
            result = Truth.UNKNOWN
    return result


@dataclass(frozen=True)
class Selector:
    """Matches nodes by id, category, color or attribute; var=True matches the
    object currently bound by an enclosing for_all."""

    id: str | None = None
    category: str | None = None
    color: str | None = None
    attribute: str | None = None
    var: bool = False

    def matches(self, node: ObjectNode, bound: str | None = None) -> bool:
        if self.var:
            return node.id == bound
        if self.id is not None and node.id != self.id:
            return False
        if self.category is not None and node.category != self.category:
            return False
        if self.color is not None and node.color != self.color:
            return False
        if self.attribute is not None and self.attribute not in node.attributes:
            return False
        return True

    def to_json(self) -> dict:
        d = {}
        for f in ("id", "category", "color", "attribute"):
            v = getattr(self, f)
            if v is not None:
                d[f] = v
        if self.var:
            d["var"] = True
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Selector":
        return cls(d.get("id"), d.get("category"), d.get("color"),
                   d.get("attribute"), d.get("var", False))


@dataclass(frozen=True)
class Place:
    """Target of an `at` predicate / PLACE action: on(surface) or inside(ref).

    `inside` refs starting with "?" are unresolved placeholder tokens bound to
    a container query; they resolve after exploration.
    """

    kind: str  # "on" | "inside"
    target: str

    @classmethod
    def on(cls, surface: str) -> "Place":
        return cls("on", surface)

    @classmethod
    def inside(cls, ref: str) -> "Place":
        return cls("inside", ref)

    @property
    def is_placeholder(self) -> bool:
        return self.target.startswith("?")

    def resolved(self, token_map: dict[str, str]) -> "Place":
        if self.is_placeholder and self.target in token_map:
            return Place(self.kind, token_map[self.target])
        return self

    def to_json(self) -> dict:
        return {"kind": self.kind, "target": self.target}

    @classmethod
    def from_json(cls, d: dict) -> "Place":
        return cls(d["kind"], d["target"])

    def __str__(self) -> str:
        return f"{self.kind}({self.target})"


@dataclass(frozen=True)
class At:
    selector: Selector
    place: Place


@dataclass(frozen=True)
class Holds:
    selector: Selector


@dataclass(frozen=True)
class ContainerStateIs:
    container: Selector
    state: str  # "open" | "closed"


@dataclass(frozen=True)
class ContainsOnly:
    container: Selector
    attribute: str


@dataclass(frozen=True)
class Identified:
    token: str  # names an entry in the goal's query table


@dataclass(frozen=True)
class AllOf:
    children: tuple["Predicate", ...]


@dataclass(frozen=True)
class AnyOf:
    children: tuple["Predicate", ...]


@dataclass(frozen=True)
class ForAll:
    selector: Selector
    body: "Predicate"


Predicate = Union[At, Holds, ContainerStateIs, ContainsOnly, Identified,
                  AllOf, AnyOf, ForAll]


@dataclass(frozen=True)
class ContainerQuery:
    """A containment condition naming a container indirectly, e.g. "the drawer
    whose contents all carry attribute fruit"."""

    kind: str  # "contains_only" | "contains_item"
    attribute: str | None = None       # contains_only
    selector: Selector | None = None   # contains_item
    filter_category: str | None = None  # restricts candidate containers

    def candidates(self, graph: RelationGraph) -> list[ObjectNode]:
        out = []
        for node in graph.containers():
            if self.filter_category and node.category != self.filter_category:
                continue
            out.append(node)
        return out

    def holds_for(self, container: ObjectNode, graph: RelationGraph) -> Truth:
        contents = graph.contents(container.id)
        if not contents and container.container_state is ContainerState.CLOSED:
            return Truth.UNKNOWN  # never observed
        if self.kind == "contains_only":
            return Truth.of(all(self.attribute in n.attributes for n in contents))
        if self.kind == "contains_item":
            return Truth.of(any(self.selector.matches(n) for n in contents))
        raise ValueError(f"unknown query kind {self.kind!r}")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.attribute is not None:
            d["attribute"] = self.attribute
        if self.selector is not None:
            d["selector"] = self.selector.to_json()
        if self.filter_category is not None:
            d["filter_category"] = self.filter_category
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ContainerQuery":
        return cls(
            kind=d["kind"],
            attribute=d.get("attribute"),
            selector=Selector.from_json(d["selector"]) if "selector" in d else None,
            filter_category=d.get("filter_category"),
        )


@dataclass(frozen=True)
class Resolution:
    """Outcome of matching a container query against a graph."""

    status: str  # "resolved" | "open" | "unsatisfiable"
    chosen: str | None = None
    satisfiers: tuple[str, ...] = ()
    undecided: tuple[str, ...] = ()


def resolve_query(query: ContainerQuery, graph: RelationGraph) -> Resolution:
    """Pick the container satisfying the query; ties break on lowest id."""
    satisfiers, undecided = [], []
    for cand in query.candidates(graph):
        t = query.holds_for(cand, graph)
        if t is Truth.TRUE:
            satisfiers.append(cand.id)
        elif t is Truth.UNKNOWN:
            undecided.append(cand.id)
    if satisfiers:
        return Resolution("resolved", min(satisfiers), tuple(sorted(satisfiers)),
                          tuple(sorted(undecided)))
    if undecided:
        return Resolution("open", None, (), tuple(sorted(undecided)))
    return Resolution("unsatisfiable")


@dataclass(frozen=True)
class Goal:
    predicate: Predicate
    queries: dict[str, ContainerQuery] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "predicate": predicate_to_json(self.predicate),
            "queries": {k: q.to_json() for k, q in sorted(self.queries.items())},
        }

    @classmethod
    def from_json(cls, d: dict) -> "Goal":
        return cls(
            predicate=predicate_from_json(d["predicate"]),
            queries={k: ContainerQuery.from_json(q)
                     for k, q in d.get("queries", {}).items()},
        )

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def eval_predicate(
    pred: Predicate,
    graph: RelationGraph,
    queries: dict[str, ContainerQuery] | None = None,
    bound: str | None = None,
) -> Truth:
    """Three-valued evaluation of a predicate over a graph.

    Pure in (pred, graph, queries).  A selector matching zero nodes makes
    for_all vacuously true and at/holds false (documented, not an error).
    """
    queries = queries or {}

    if isinstance(pred, AllOf):
        return kleene_all(eval_predicate(c, graph, queries, bound)
                          for c in pred.children)
    if isinstance(pred, AnyOf):
        return kleene_any(eval_predicate(c, graph, queries, bound)
                          for c in pred.children)
    if isinstance(pred, ForAll):
        matches = [n for n in graph.nodes.values() if pred.selector.matches(n, bound)]
        return kleene_all(eval_predicate(pred.body, graph, queries, n.id)
                          for n in sorted(matches, key=lambda n: n.id))
    if isinstance(pred, Holds):
        return Truth.of(any(
            n.location.kind == "gripper" and pred.selector.matches(n, bound)
            for n in graph.nodes.values()))
    if isinstance(pred, ContainerStateIs):
        return Truth.of(any(
            pred.container.matches(n, bound)
            and n.container_state.value == pred.state
            for n in graph.nodes.values()))
    if isinstance(pred, ContainsOnly):
        hits = [n for n in graph.nodes.values()
                if pred.container.matches(n, bound)
                and n.container_state is not ContainerState.NOT_A_CONTAINER]
        if not hits:
            return Truth.FALSE
        query = ContainerQuery("contains_only", attribute=pred.attribute)
        return kleene_any(query.holds_for(n, graph)
                          for n in sorted(hits, key=lambda n: n.id))
    if isinstance(pred, Identified):
        if pred.token not in queries:
            return Truth.FALSE
        res = resolve_query(queries[pred.token], graph)
        if res.status == "resolved":
            return Truth.TRUE
        if res.status == "open":
            return Truth.UNKNOWN
        return Truth.FALSE
    if isinstance(pred, At):
        return _eval_at(pred, graph, queries, bound)
    raise TypeError(f"not a predicate: {pred!r}")


def _eval_at(pred: At, graph: RelationGraph,
             queries: dict[str, ContainerQuery], bound: str | None) -> Truth:
    matches = [n for n in graph.nodes.values() if pred.selector.matches(n, bound)]
    if not matches:
        return Truth.FALSE
    place = pred.place
    if place.kind == "inside" and place.is_placeholder:
        query = queries.get(place.target)
        if query is None:
            return Truth.FALSE
        # True iff some matching node sits inside a container satisfying the
        # query; unknown while a node's host container is undecided or the
        # query itself is still open.
        verdicts = []
        for n in matches:
            if n.location.kind != "inside":
                res = resolve_query(query, graph)
                verdicts.append(Truth.UNKNOWN if res.status == "open" else Truth.FALSE)
                continue
            host = graph.node(n.location.target)
            if host is None:
                verdicts.append(Truth.FALSE)
                continue
            verdicts.append(query.holds_for(host, graph))
        return kleene_any(verdicts)
    wanted = Location(place.kind, place.target)
    return Truth.of(any(n.location == wanted for n in matches))


# ---------------------------------------------------------------------------
# JSON (de)serialization of predicate trees


def predicate_to_json(pred: Predicate) -> dict:
    if isinstance(pred, AllOf):
        return {"op": "all_of", "children": [predicate_to_json(c) for c in pred.children]}
    if isinstance(pred, AnyOf):
        return {"op": "any_of", "children": [predicate_to_json(c) for c in pred.children]}
    if isinstance(pred, ForAll):
        return {"op": "for_all", "selector": pred.selector.to_json(),
                "body": predicate_to_json(pred.body)}
    if isinstance(pred, At):
        return {"op": "at", "selector": pred.selector.to_json(),
                "place": pred.place.to_json()}
    if isinstance(pred, Holds):
        return {"op": "holds", "selector": pred.selector.to_json()}
    if isinstance(pred, ContainerStateIs):
        return {"op": "container_state_is", "container": pred.container.to_json(),
                "state": pred.state}
    if isinstance(pred, ContainsOnly):
        return {"op": "contains_only", "container": pred.container.to_json(),
                "attribute": pred.attribute}
    if isinstance(pred, Identified):
        return {"op": "identified", "token": pred.token}
    raise TypeError(f"not a predicate: {pred!r}")


def predicate_from_json(d: dict) -> Predicate:
    op = d["op"]
    if op == "all_of":
        return AllOf(tuple(predicate_from_json(c) for c in d["children"]))
    if op == "any_of":
        return AnyOf(tuple(predicate_from_json(c) for c in d["children"]))
    if op == "for_all":
        return ForAll(Selector.from_json(d["selector"]),
                      predicate_from_json(d["body"]))
    if op == "at":
        return At(Selector.from_json(d["selector"]), Place.from_json(d["place"]))
    if op == "holds":
        return Holds(Selector.from_json(d["selector"]))
    if op == "container_state_is":
        return ContainerStateIs(Selector.from_json(d["container"]), d["state"])
    if op == "contains_only":
        return ContainsOnly(Selector.from_json(d["container"]), d["attribute"])
    if op == "identified":
        return Identified(d["token"])
    raise ValueError(f"unknown predicate op {op!r}")


def substitute_placeholders(pred: Predicate, token_map: dict[str, str]) -> Predicate:
    """Replace placeholder place-targets by concrete container ids."""
    if isinstance(pred, AllOf):
        return AllOf(tuple(substitute_placeholders(c, token_map) for c in pred.children))
    if isinstance(pred, AnyOf):
        return AnyOf(tuple(substitute_placeholders(c, token_map) for c in pred.children))
    if isinstance(pred, ForAll):
        return ForAll(pred.selector, substitute_placeholders(pred.body, token_map))
    if isinstance(pred, At):
        return At(pred.selector, pred.place.resolved(token_map))
    return pred


def placeholder_tokens(pred: Predicate) -> set[str]:
    if isinstance(pred, (AllOf, AnyOf)):
        out: set[str] = set()
        for c in pred.children:
            out |= placeholder_tokens(c)
        return out
    if isinstance(pred, ForAll):
        return placeholder_tokens(pred.body)
    if isinstance(pred, At) and pred.place.is_placeholder:
        return {pred.place.target}
    return set()
