"""Dual-stage task planner: information-sufficiency check, exploration plans
over candidate containers, completion plans with unresolved placeholders, and
feedback-driven replanning.

The planner is re-invoked every loop step and recomputes the remaining plan
from the current belief graph (percept plus remembered container contents),
so "re-execute the failed step" and "continue with remaining steps" fall out
of deterministic re-synthesis rather than plan surgery.  Obstacle feedback
and repeated-failure escalation are carried between steps in PlannerMemory.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from .graph import ContainerState, Location, ObjectNode, Relation, RelationGraph
from .predicates import (AllOf, AnyOf, At, ContainerQuery, ContainerStateIs,
                         ContainsOnly, ForAll, Goal, Holds, Identified, Place,
                         Predicate, Selector, Truth, eval_predicate,
                         placeholder_tokens, resolve_query,
                         substitute_placeholders)
from .world import PlaceRef, PrimitiveAction, SceneContext, Verb

# Consecutive identical primitive failures before the full planner suspects an
# unseen obstruction and clears a guessed object near the target.
ESCALATION_CAP = 5


class FeedbackReason(Enum):
    PRIMITIVE_FAILED = "primitive_failed"
    SUBGOAL_INCOMPLETE = "subgoal_incomplete"
    PLAN_LOGIC_ERROR = "plan_logic_error"
    OBSTACLE_BLOCKING = "obstacle_blocking"
    NONE = "none"


@dataclass(frozen=True)
class Feedback:
    verdict: str                 # "yes" | "no"
    stage: str                   # "explore" | "complete"
    reason: FeedbackReason = FeedbackReason.NONE
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict == "yes":
            assert self.reason is FeedbackReason.NONE

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "stage": self.stage,
                "reason": self.reason.value, "detail": self.detail}

    @classmethod
    def from_json(cls, d: dict) -> "Feedback":
        return cls(d["verdict"], d["stage"], FeedbackReason(d["reason"]),
                   d.get("detail", {}))


class BundleInvariantError(ValueError):
    pass


class PlaceholderResolutionError(RuntimeError):
    """Raised when a placeholder query cannot yet be decided; the orchestrator
    should run more exploration."""

    def __init__(self, token: str, status: str):
        super().__init__(f"placeholder {token} undecidable (query {status})")
        self.token = token
        self.status = status


@dataclass(frozen=True)
class StagePlanBundle:
    explore_plan: tuple[PrimitiveAction, ...] | None = None
    explore_goal: Goal | None = None
    complete_plan: tuple[PrimitiveAction, ...] | None = None
    complete_goal: Goal | None = None
    placeholders: dict[str, ContainerQuery] = field(default_factory=dict)

    def validate(self) -> "StagePlanBundle":
        if (self.explore_plan is None) != (self.explore_goal is None):
            raise BundleInvariantError("explore plan and goal must appear together")
        if (self.complete_plan is None) != (self.complete_goal is None):
            raise BundleInvariantError("complete plan and goal must appear together")
        if self.explore_plan is not None and not self.explore_plan:
            raise BundleInvariantError("explore stage present but empty")
        for token in self.tokens():
            if token not in self.placeholders:
                raise BundleInvariantError(f"placeholder {token} has no query entry")
        return self

    def tokens(self) -> set[str]:
        out: set[str] = set()
        for a in self.complete_plan or ():
            if a.verb is Verb.PLACE and a.destination.target.startswith("?"):
                out.add(a.destination.target)
        if self.complete_goal is not None:
            out |= placeholder_tokens(self.complete_goal.predicate)
        return out

    def is_termination(self) -> bool:
        return (self.explore_plan is None and self.explore_goal is None
                and self.complete_plan is None and self.complete_goal is None)

    def to_json(self) -> dict:
        return {
            "explore_plan": [a.to_json() for a in self.explore_plan]
            if self.explore_plan is not None else None,
            "explore_goal": self.explore_goal.to_json()
            if self.explore_goal is not None else None,
            "complete_plan": [a.to_json() for a in self.complete_plan]
            if self.complete_plan is not None else None,
            "complete_goal": self.complete_goal.to_json()
            if self.complete_goal is not None else None,
            "placeholders": {k: q.to_json()
                             for k, q in sorted(self.placeholders.items())},
        }

    @classmethod
    def from_json(cls, d: dict) -> "StagePlanBundle":
        def plan(key):
            v = d.get(key)
            return tuple(PrimitiveAction.from_json(a) for a in v) if v is not None else None

        def goal(key):
            v = d.get(key)
            return Goal.from_json(v) if v is not None else None

        return cls(plan("explore_plan"), goal("explore_goal"),
                   plan("complete_plan"), goal("complete_goal"),
                   {k: ContainerQuery.from_json(q)
                    for k, q in d.get("placeholders", {}).items()})

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


TERMINATION = StagePlanBundle()


# ---------------------------------------------------------------------------
# Planner memory (one episode's accumulated knowledge)


@dataclass
class PlannerMemory:
    seed: int = 0
    observed_contents: dict[str, dict[str, ObjectNode]] = field(default_factory=dict)
    observed: set[str] = field(default_factory=set)
    opened_order: list[str] = field(default_factory=list)
    known_blockers: dict[str, str] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    hypothesis_used: set[str] = field(default_factory=set)
    abandoned: set[str] = field(default_factory=set)
    bindings: dict[str, str] = field(default_factory=dict)
    last_graph: RelationGraph | None = None
    _rng: random.Random = None

    def __post_init__(self):
        if self._rng is None:
            self._rng = random.Random(self.seed ^ 0x5EED5EED)

    def record_percept(self, graph: RelationGraph) -> None:
        self.last_graph = graph
        for container in graph.containers():
            if container.container_state is ContainerState.OPEN:
                self.observed.add(container.id)
                self.observed_contents[container.id] = {
                    n.id: n for n in graph.contents(container.id)}

    def note_transition(self, before: RelationGraph, after: RelationGraph,
                        action: PrimitiveAction) -> None:
        b = before.node(action.object) if action.object else None
        a = after.node(action.object) if action.object else None
        if action.verb is Verb.OPEN and b is not None and a is not None \
                and b.container_state is ContainerState.CLOSED \
                and a.container_state is ContainerState.OPEN:
            if action.object not in self.opened_order:
                self.opened_order.append(action.object)
        if action.verb is Verb.PLACE:
            held = before.held_object()
            if held is not None:
                for target, blocker in list(self.known_blockers.items()):
                    if blocker == held.id:
                        del self.known_blockers[target]
        if before.canonical() != after.canonical():
            self.counters.pop(action.key(), None)

    def belief_graph(self, graph: RelationGraph | None = None) -> RelationGraph:
        """The percept plus remembered contents of currently closed containers."""
        graph = graph if graph is not None else self.last_graph
        if graph is None:
            raise ValueError("no percept recorded yet")
        nodes = dict(graph.nodes)
        for cid, remembered in self.observed_contents.items():
            host = nodes.get(cid)
            if host is None or host.container_state is not ContainerState.CLOSED:
                continue
            for oid, node in remembered.items():
                nodes.setdefault(oid, node)
        return RelationGraph(nodes, graph.edges, graph.timestamp)

    def restoration_pending(self, graph: RelationGraph) -> list[str]:
        out = []
        for cid in self.opened_order:
            node = graph.node(cid)
            if node is not None and node.container_state is ContainerState.OPEN:
                out.append(cid)
        return out


# ---------------------------------------------------------------------------
# Graph-side obstacle inference


def blockers_in_front(graph: RelationGraph, target: str) -> list[str]:
    """Objects directly in front of the target per the relation graph: a front
    edge with no lateral (left/right) separation, resting on a surface."""
    lateral = {Relation.LEFT, Relation.RIGHT}
    front_ids = {e.source for e in graph.edges
                 if e.relation is Relation.FRONT and e.target == target}
    out = []
    for oid in front_ids:
        node = graph.node(oid)
        if node is None or node.location.kind != "on":
            continue
        if node.container_state is not ContainerState.NOT_A_CONTAINER:
            continue
        if any(e.relation in lateral and {e.source, e.target} == {oid, target}
               for e in graph.edges):
            continue
        out.append(oid)
    return sorted(out)


# ---------------------------------------------------------------------------
# Sufficiency


@dataclass(frozen=True)
class Sufficiency:
    sufficient: bool
    missing: tuple[tuple[str, ContainerQuery], ...] = ()


def sufficiency_check(graph: RelationGraph, goal: Goal) -> Sufficiency:
    """Report the container queries that must be resolved before the goal can
    be planned: declared queries still undecided, plus synthesized searches
    for goal objects that are nowhere to be seen."""
    missing: list[tuple[str, ContainerQuery]] = []
    seen: set[str] = set()

    referenced = placeholder_tokens(goal.predicate) | _identified_tokens(goal.predicate)
    for token in sorted(referenced):
        query = goal.queries.get(token)
        if query is None:
            continue
        if resolve_query(query, graph).status == "open":
            missing.append((token, query))
            seen.add(token)

    unexplored = [c for c in graph.containers()
                  if c.container_state is ContainerState.CLOSED]
    if unexplored:
        for leaf in _object_leaves(goal.predicate):
            sel = leaf.selector
            if sel.var or any(sel.matches(n) for n in graph.nodes.values()):
                continue
            token = "?find_" + (sel.category or sel.attribute or sel.id or "object")
            if token in seen:
                continue
            seen.add(token)
            missing.append((token, ContainerQuery("contains_item", selector=sel)))

    return Sufficiency(sufficient=not missing, missing=tuple(missing))


def _identified_tokens(pred: Predicate) -> set[str]:
    if isinstance(pred, (AllOf, AnyOf)):
        out: set[str] = set()
        for c in pred.children:
            out |= _identified_tokens(c)
        return out
    if isinstance(pred, ForAll):
        return _identified_tokens(pred.body)
    if isinstance(pred, Identified):
        return {pred.token}
    return set()


def _object_leaves(pred: Predicate) -> list[At | Holds]:
    if isinstance(pred, (AllOf, AnyOf)):
        out = []
        for c in pred.children:
            out.extend(_object_leaves(c))
        return out
    if isinstance(pred, ForAll):
        return _object_leaves(pred.body)
    if isinstance(pred, (At, Holds)):
        return [pred]
    return []


# ---------------------------------------------------------------------------
# Placeholder resolution


def resolve_placeholders(bundle: StagePlanBundle,
                         observations: PlannerMemory) -> StagePlanBundle:
    """Replace every placeholder token with the concrete container decided by
    the accumulated observations; ties break on the lowest id."""
    if not bundle.placeholders:
        return bundle
    belief = observations.belief_graph()
    token_map: dict[str, str] = {}
    for token, query in sorted(bundle.placeholders.items()):
        res = resolve_query(query, belief)
        if res.status != "resolved":
            raise PlaceholderResolutionError(token, res.status)
        token_map[token] = res.chosen
    return _substitute(bundle, token_map)


def guess_placeholders(bundle: StagePlanBundle, graph: RelationGraph,
                       context: SceneContext) -> StagePlanBundle:
    """Force-resolve placeholders by the first declared candidate; used by
    blind modes that cannot learn the answer from exploration."""
    if not bundle.placeholders:
        return bundle
    token_map = {}
    for token, query in sorted(bundle.placeholders.items()):
        cands = _ordered_candidates(query, graph, context)
        if not cands:
            raise PlaceholderResolutionError(token, "unsatisfiable")
        token_map[token] = cands[0]
    return _substitute(bundle, token_map)


def _substitute(bundle: StagePlanBundle, token_map: dict[str, str]) -> StagePlanBundle:
    def fix_plan(plan):
        if plan is None:
            return None
        out = []
        for a in plan:
            if a.verb is Verb.PLACE and a.destination.target in token_map:
                a = PrimitiveAction(Verb.PLACE, destination=PlaceRef(
                    a.destination.kind, token_map[a.destination.target]))
            out.append(a)
        return tuple(out)

    def fix_goal(goal):
        if goal is None:
            return None
        return Goal(substitute_placeholders(goal.predicate, token_map),
                    {k: q for k, q in goal.queries.items() if k not in token_map})

    return StagePlanBundle(
        fix_plan(bundle.explore_plan), bundle.explore_goal,
        fix_plan(bundle.complete_plan), fix_goal(bundle.complete_goal),
        {k: q for k, q in bundle.placeholders.items() if k not in token_map},
    ).validate()


def _ordered_candidates(query: ContainerQuery, graph: RelationGraph,
                        context: SceneContext) -> list[str]:
    present = {c.id for c in query.candidates(graph)}
    ordered = [cid for cid in context.container_order if cid in present]
    ordered += sorted(present - set(ordered))
    return ordered


# ---------------------------------------------------------------------------
# Symbolic state used during action synthesis


class _SymState:
    def __init__(self, graph: RelationGraph):
        self.loc = {n.id: n.location for n in graph.nodes.values()}
        self.state = {n.id: n.container_state.value for n in graph.containers()}
        held = graph.held_object()
        self.held = held.id if held else None

    def contents(self, cid: str) -> list[str]:
        return sorted(o for o, l in self.loc.items()
                      if l.kind == "inside" and l.target == cid)

    def apply(self, action: PrimitiveAction) -> None:
        if action.verb is Verb.GRASP:
            self.held = action.object
            self.loc[action.object] = Location.gripper()
        elif action.verb is Verb.PLACE:
            if self.held is not None:
                dest = action.destination
                self.loc[self.held] = Location(dest.kind, dest.target)
                self.held = None
        elif action.verb is Verb.OPEN:
            self.state[action.object] = "open"
        elif action.verb is Verb.CLOSE:
            self.state[action.object] = "closed"


# ---------------------------------------------------------------------------
# The reference symbolic planner


@dataclass
class SymbolicPlanner:
    context: SceneContext
    restore: bool = True
    escalation_cap: int = ESCALATION_CAP

    name = "symbolic"

    def plan(self, graph: RelationGraph, goal: Goal,
             feedback: Feedback | None, memory: PlannerMemory) -> StagePlanBundle:
        self._process_feedback(graph, feedback, memory)
        belief = memory.belief_graph(graph)

        if eval_predicate(goal.predicate, belief, goal.queries) is Truth.TRUE:
            pending = memory.restoration_pending(graph) if self.restore else []
            if not pending:
                return TERMINATION
            plan = tuple(PrimitiveAction(Verb.CLOSE, cid) for cid in pending)
            g_c = Goal(AllOf(tuple(ContainerStateIs(Selector(id=cid), "closed")
                                   for cid in pending)))
            return StagePlanBundle(complete_plan=plan, complete_goal=g_c).validate()

        suff = sufficiency_check(belief, goal)
        if not suff.sufficient:
            return self._explore_bundle(graph, belief, goal, suff, memory)

        bindings = self._resolved_bindings(goal, belief)
        actions, g_c = synthesize_completion(belief, goal, bindings, memory,
                                             self.context)
        if not actions:
            return _stall_bundle(goal, bindings)
        return StagePlanBundle(complete_plan=tuple(actions),
                               complete_goal=g_c).validate()

    # -- internals -----------------------------------------------------------

    def _resolved_bindings(self, goal: Goal, belief: RelationGraph) -> dict[str, str]:
        bindings = {}
        for token, query in goal.queries.items():
            res = resolve_query(query, belief)
            if res.status == "resolved":
                bindings[token] = res.chosen
        return bindings

    def _explore_bundle(self, graph: RelationGraph, belief: RelationGraph,
                        goal: Goal, suff: Sufficiency,
                        memory: PlannerMemory) -> StagePlanBundle:
        token, query = suff.missing[0]
        to_open = [cid for cid in _ordered_candidates(query, belief, self.context)
                   if cid not in memory.observed
                   and _is_closed(belief, cid)]
        if not to_open:
            # Nothing left to open yet the query is still open: unprovable.
            return _stall_bundle(goal, self._resolved_bindings(goal, belief))
        explore: list[PrimitiveAction] = []
        sym = _SymState(belief)
        if sym.held is not None:
            explore.append(PrimitiveAction(
                Verb.PLACE, destination=PlaceRef.on(self.context.spill_surface)))
            sym.apply(explore[-1])
        for cid in to_open:
            explore.append(PrimitiveAction(Verb.OPEN, cid))

        g_e = Goal(Identified(token), {token: query})
        bindings = self._resolved_bindings(goal, belief)
        actions, g_c = synthesize_completion(
            belief, goal, bindings, memory, self.context,
            allow_placeholder=True)
        placeholders = {}
        bundle_tokens = set()
        for a in actions:
            if a.verb is Verb.PLACE and a.destination.target.startswith("?"):
                bundle_tokens.add(a.destination.target)
        if g_c is not None:
            bundle_tokens |= placeholder_tokens(g_c.predicate)
        for t in bundle_tokens:
            placeholders[t] = goal.queries.get(t, query)
        if actions:
            return StagePlanBundle(tuple(explore), g_e, tuple(actions), g_c,
                                   placeholders).validate()
        return StagePlanBundle(tuple(explore), g_e).validate()

    def _process_feedback(self, graph: RelationGraph, feedback: Feedback | None,
                          memory: PlannerMemory) -> None:
        if feedback is None or feedback.verdict == "yes":
            return
        if feedback.reason is FeedbackReason.OBSTACLE_BLOCKING:
            target = feedback.detail.get("target")
            blocker = feedback.detail.get("blocker")
            if target and blocker:
                memory.known_blockers[target] = blocker
            return
        if feedback.reason is FeedbackReason.PLAN_LOGIC_ERROR:
            memory.counters.clear()  # regenerate from scratch
            return
        if feedback.reason is not FeedbackReason.PRIMITIVE_FAILED:
            return
        action = feedback.detail.get("action")
        if not action:
            return
        act = PrimitiveAction.from_json(action)
        key = act.key()
        memory.counters[key] = memory.counters.get(key, 0) + 1
        if memory.counters[key] < self.escalation_cap or act.verb is Verb.PLACE:
            return
        # Repeated failure with no visible blocker: suspect an unseen
        # obstruction and schedule one guessed clearing, once per target.
        target = act.object
        node = graph.node(target)
        if node is not None and node.location.kind == "inside":
            target = node.location.target
        if target in memory.hypothesis_used or blockers_in_front(graph, target):
            return
        candidates = sorted(
            n.id for n in graph.nodes.values()
            if n.location.kind == "on" and n.id != target
            and n.container_state is ContainerState.NOT_A_CONTAINER)
        if not candidates:
            return
        memory.hypothesis_used.add(target)
        memory.known_blockers[target] = memory._rng.choice(candidates)


def _is_closed(graph: RelationGraph, cid: str) -> bool:
    node = graph.node(cid)
    return node is not None and node.container_state is ContainerState.CLOSED


def _stall_bundle(goal: Goal, bindings: dict[str, str]) -> StagePlanBundle:
    """A bundle with the unmet goal and nothing executable: the orchestrator
    burns budget on it and reports the task unsatisfiable."""
    pred = substitute_placeholders(goal.predicate, bindings)
    remaining = placeholder_tokens(pred)
    return StagePlanBundle(
        complete_plan=(), complete_goal=Goal(pred, dict(goal.queries)),
        placeholders={t: goal.queries[t] for t in remaining
                      if t in goal.queries}).validate()


# ---------------------------------------------------------------------------
# Action synthesis shared by the symbolic and basic planners


def synthesize_completion(
    belief: RelationGraph,
    goal: Goal,
    bindings: dict[str, str],
    memory: PlannerMemory,
    context: SceneContext,
    allow_placeholder: bool = False,
    abandoned: set[str] | None = None,
) -> tuple[list[PrimitiveAction], Goal | None]:
    """Build the remaining completion plan and its stage goal (the still-unmet
    conjuncts).  Returns ([], None) when nothing is plannable."""
    abandoned = abandoned or set()
    sym = _SymState(belief)
    leaves = _unmet_leaves(goal.predicate, belief, goal.queries, bindings, None)
    if sym.held is not None:
        # Handle the held object's own errand first rather than parking it.
        for i, (leaf, _) in enumerate(leaves):
            if isinstance(leaf, At) and leaf.selector.id == sym.held:
                leaves.insert(0, leaves.pop(i))
                break

    actions: list[PrimitiveAction] = []
    kept: list[Predicate] = []
    used_tokens: set[str] = set()

    for leaf, bound in leaves:
        if isinstance(leaf, At) and leaf.place.is_placeholder \
                and not allow_placeholder:
            continue  # unresolved target without an exploration stage
        steps = _leaf_steps(leaf, sym, memory, context, allow_placeholder)
        if steps is None:
            continue  # not plannable right now (e.g. invisible object)
        if any(s.key() in abandoned for s in steps):
            continue  # proceed past abandoned work
        for s in steps:
            actions.append(s)
            sym.apply(s)
        kept.append(leaf)
        if isinstance(leaf, At) and leaf.place.is_placeholder:
            used_tokens.add(leaf.place.target)

    if not kept:
        return [], None
    pred = kept[0] if len(kept) == 1 else AllOf(tuple(kept))
    queries = {t: goal.queries[t] for t in used_tokens if t in goal.queries}
    return actions, Goal(pred, queries)


def _unmet_leaves(pred: Predicate, graph: RelationGraph,
                  queries: dict[str, ContainerQuery], bindings: dict[str, str],
                  bound: str | None) -> list[tuple[Predicate, str | None]]:
    if isinstance(pred, AllOf):
        out = []
        for c in pred.children:
            out.extend(_unmet_leaves(c, graph, queries, bindings, bound))
        return out
    if isinstance(pred, AnyOf):
        if eval_predicate(pred, graph, queries, bound) is Truth.TRUE:
            return []
        return _unmet_leaves(pred.children[0], graph, queries, bindings, bound) \
            if pred.children else []
    if isinstance(pred, ForAll):
        out = []
        for n in sorted((n for n in graph.nodes.values()
                         if pred.selector.matches(n, bound)), key=lambda n: n.id):
            out.extend(_unmet_leaves(pred.body, graph, queries, bindings, n.id))
        return out
    if isinstance(pred, Identified):
        return []  # decided by exploration, not by acting
    concrete = pred
    if isinstance(pred, At):
        place = pred.place.resolved(bindings)
        sel = pred.selector
        if sel.var:
            sel = Selector(id=bound)
        elif sel.id is None:
            node = _pick_subject(pred, graph, bindings, bound)
            if node is not None:
                sel = Selector(id=node.id)
        concrete = At(sel, place)
    elif isinstance(pred, (Holds, ContainsOnly, ContainerStateIs)) and bound:
        pass
    if eval_predicate(concrete, graph, queries, bound) is Truth.TRUE:
        return []
    return [(concrete, bound)]


def _pick_subject(pred: At, graph: RelationGraph, bindings: dict[str, str],
                  bound: str | None) -> ObjectNode | None:
    """For a multi-match selector, plan around the first node not already in
    place (exists-semantics: any match at the place satisfies the goal)."""
    matches = sorted((n for n in graph.nodes.values()
                      if pred.selector.matches(n, bound)), key=lambda n: n.id)
    if not matches:
        return None
    place = pred.place.resolved(bindings)
    if not place.is_placeholder:
        wanted = Location(place.kind, place.target)
        for n in matches:
            if n.location == wanted:
                return n  # already satisfied; caller's eval will skip it
    return matches[0]


def _leaf_steps(leaf: Predicate, sym: _SymState, memory: PlannerMemory,
                context: SceneContext,
                allow_placeholder: bool) -> list[PrimitiveAction] | None:
    spill = PlaceRef.on(context.spill_surface)

    def clear_for(target: str) -> list[PrimitiveAction]:
        blocker = memory.known_blockers.get(target)
        if not blocker:
            return []
        loc = sym.loc.get(blocker)
        if loc is None or loc.kind != "on":
            return []
        return [PrimitiveAction(Verb.GRASP, blocker),
                PrimitiveAction(Verb.PLACE, destination=spill)]

    def park() -> list[PrimitiveAction]:
        return [PrimitiveAction(Verb.PLACE, destination=spill)] if sym.held else []

    if isinstance(leaf, At):
        subject = leaf.selector.id
        if subject is None or subject not in sym.loc:
            return None
        place = leaf.place
        steps: list[PrimitiveAction] = []
        dest_container = None
        if place.kind == "inside" and not place.is_placeholder:
            dest_container = place.target
            if dest_container not in sym.state:
                return None
        if sym.held == subject:
            if dest_container and sym.state.get(dest_container) == "closed":
                steps += [PrimitiveAction(Verb.PLACE, destination=spill)]
                steps += clear_for(dest_container)
                steps += [PrimitiveAction(Verb.OPEN, dest_container),
                          PrimitiveAction(Verb.GRASP, subject)]
            steps.append(PrimitiveAction(
                Verb.PLACE, destination=PlaceRef(place.kind, place.target)))
            return steps
        if sym.held is not None:
            steps += park()
        if dest_container and sym.state.get(dest_container) == "closed":
            steps += clear_for(dest_container)
            steps.append(PrimitiveAction(Verb.OPEN, dest_container))
        src = sym.loc.get(subject)
        if src is not None and src.kind == "inside":
            if sym.state.get(src.target) == "closed":
                steps += clear_for(src.target)
                steps.append(PrimitiveAction(Verb.OPEN, src.target))
            else:
                steps += clear_for(src.target)
        steps += clear_for(subject)
        steps.append(PrimitiveAction(Verb.GRASP, subject))
        steps.append(PrimitiveAction(
            Verb.PLACE, destination=PlaceRef(place.kind, place.target)))
        return steps

    if isinstance(leaf, Holds):
        subject = leaf.selector.id
        if subject is None:
            ids = sorted(o for o, l in sym.loc.items() if l.kind != "gripper")
            subject = ids[0] if ids else None
        if subject is None or subject not in sym.loc:
            return None
        steps = park()
        src = sym.loc.get(subject)
        if src is not None and src.kind == "inside" and sym.state.get(src.target) == "closed":
            steps += clear_for(src.target)
            steps.append(PrimitiveAction(Verb.OPEN, src.target))
        steps += clear_for(subject)
        steps.append(PrimitiveAction(Verb.GRASP, subject))
        return steps

    if isinstance(leaf, ContainerStateIs):
        cid = leaf.container.id
        if cid is None or cid not in sym.state:
            return None
        steps = park()
        steps += clear_for(cid)
        steps.append(PrimitiveAction(
            Verb.OPEN if leaf.state == "open" else Verb.CLOSE, cid))
        return steps

    if isinstance(leaf, ContainsOnly):
        cid = leaf.container.id
        if cid is None or cid not in sym.state:
            return None
        steps = park()
        if sym.state.get(cid) == "closed":
            steps += clear_for(cid)
            steps.append(PrimitiveAction(Verb.OPEN, cid))
        for oid in sym.contents(cid):
            node_loc = sym.loc.get(oid)
            if node_loc is None:
                continue
            steps.append(PrimitiveAction(Verb.GRASP, oid))
            steps.append(PrimitiveAction(Verb.PLACE, destination=spill))
        return steps

    return None


# ---------------------------------------------------------------------------
# The degraded planner used by the single-stage ablation


@dataclass
class BasicSinglePlanner:
    """Single-stage baseline: never explores, guesses unresolved containers
    with a seeded draw, gives up on an action after its first failure, and
    skips post-task restoration."""

    context: SceneContext

    name = "basic"

    def plan(self, graph: RelationGraph, goal: Goal,
             feedback: Feedback | None, memory: PlannerMemory) -> StagePlanBundle:
        self._process_feedback(feedback, memory)
        belief = memory.belief_graph(graph)

        if eval_predicate(goal.predicate, belief, goal.queries) is Truth.TRUE:
            return TERMINATION

        bindings = {}
        for token in sorted(placeholder_tokens(goal.predicate)
                            | _identified_tokens(goal.predicate)):
            query = goal.queries.get(token)
            if query is None:
                continue
            res = resolve_query(query, belief)
            if res.status == "resolved":
                bindings[token] = res.chosen
                continue
            if token not in memory.bindings:
                cands = sorted(c.id for c in query.candidates(belief))
                if not cands:
                    continue
                memory.bindings[token] = memory._rng.choice(cands)
            bindings[token] = memory.bindings[token]

        actions, g_c = synthesize_completion(
            belief, goal, bindings, memory, self.context,
            abandoned=memory.abandoned)
        if not actions:
            return _stall_bundle(goal, bindings)
        return StagePlanBundle(complete_plan=tuple(actions),
                               complete_goal=g_c).validate()

    def _process_feedback(self, feedback: Feedback | None,
                          memory: PlannerMemory) -> None:
        if feedback is None or feedback.verdict == "yes":
            return
        if feedback.reason is FeedbackReason.OBSTACLE_BLOCKING:
            target = feedback.detail.get("target")
            blocker = feedback.detail.get("blocker")
            if target and blocker:
                memory.known_blockers[target] = blocker
        elif feedback.reason is FeedbackReason.PRIMITIVE_FAILED:
            action = feedback.detail.get("action")
            if action:
                memory.abandoned.add(PrimitiveAction.from_json(action).key())
