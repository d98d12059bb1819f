"""Pre-execution plan verification and repair.

Three checks run over the concatenated explore+complete sequence with an
abstract gripper and container state:
  (a) stage-goal validity: the exploration plan must make its query decidable
      and must cover every placeholder the completion stage relies on;
  (b) action-sequence logic: GRASP before PLACE, empty gripper at GRASP and
      OPEN/CLOSE, destinations opened before use, opened containers closed or
      deferred to restoration;
  (c) obstacle clearing: anything directly in front of an OPEN/GRASP target
      gets moved to the free surface first.
Repairs only insert or reorder, never delete.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import ContainerState, RelationGraph
from .planner import (StagePlanBundle, _SymState, blockers_in_front)
from .predicates import At, AllOf, ForAll, Goal, Predicate
from .world import PlaceRef, PrimitiveAction, SceneContext, Verb


@dataclass(frozen=True)
class Violation:
    criterion: str  # "a" | "b" | "c"
    description: str
    stage: str
    index: int
    repairable: bool = True

    def to_json(self) -> dict:
        return {"criterion": self.criterion, "description": self.description,
                "stage": self.stage, "index": self.index,
                "repairable": self.repairable}


@dataclass
class ReflectionReport:
    violations: list[Violation] = field(default_factory=list)
    repairs: list[str] = field(default_factory=list)
    repaired: bool = True  # False once any violation could not be fixed

    def to_json(self) -> dict:
        return {"violations": [v.to_json() for v in self.violations],
                "repairs": list(self.repairs), "repaired": self.repaired}


def reflect(bundle: StagePlanBundle, graph: RelationGraph,
            context: SceneContext,
            restore: bool = True) -> tuple[StagePlanBundle, ReflectionReport]:
    if bundle.is_termination():
        return bundle, ReflectionReport()

    report = ReflectionReport()
    explore = list(bundle.explore_plan or ())
    complete = list(bundle.complete_plan or ())

    # (a) every completion placeholder needs an exploration query behind it.
    tokens = bundle.tokens()
    if tokens and bundle.explore_goal is None:
        for token in sorted(tokens):
            report.violations.append(Violation(
                "a", f"placeholder {token} with no exploration stage to decide it",
                "complete", 0, repairable=False))
        report.repaired = False

    # (a) the exploration plan must render its query decidable: every closed
    # candidate either gets opened in-plan or is already observable.
    if bundle.explore_goal is not None:
        for token, query in sorted(bundle.explore_goal.queries.items()):
            planned_opens = {a.object for a in explore if a.verb is Verb.OPEN}
            for cand in query.candidates(graph):
                if cand.container_state is not ContainerState.CLOSED:
                    continue
                if cand.id in planned_opens:
                    continue
                report.violations.append(Violation(
                    "a", f"query {token} candidate {cand.id} never opened",
                    "explore", len(explore)))
                explore.append(PrimitiveAction(Verb.OPEN, cand.id))
                report.repairs.append(f"append OPEN({cand.id}) to exploration")

    fixer = _Fixer(graph, context, report,
                   stage_goals={"explore": bundle.explore_goal,
                                "complete": bundle.complete_goal})
    explore = fixer.pass_stage("explore", explore)
    complete = fixer.pass_stage("complete", complete)

    # (b) opened containers must be closed by the end of the completion stage
    # unless restoration will handle them.
    if not restore:
        for cid in fixer.opened_in_bundle:
            if fixer.sym.state.get(cid) == "open":
                report.violations.append(Violation(
                    "b", f"{cid} opened in bundle but never closed",
                    "complete", len(complete)))
                complete.append(PrimitiveAction(Verb.CLOSE, cid))
                fixer.sym.apply(complete[-1])
                report.repairs.append(f"append CLOSE({cid})")

    repaired_bundle = StagePlanBundle(
        tuple(explore) if bundle.explore_plan is not None else None,
        bundle.explore_goal,
        tuple(complete) if bundle.complete_plan is not None else None,
        bundle.complete_goal,
        dict(bundle.placeholders),
    ).validate()
    return repaired_bundle, report


class _Fixer:
    """Streams a stage's actions through symbolic execution, inserting repair
    actions ahead of anything whose preconditions would fail."""

    def __init__(self, graph: RelationGraph, context: SceneContext,
                 report: ReflectionReport, stage_goals: dict[str, Goal | None]):
        self.graph = graph
        self.context = context
        self.report = report
        self.stage_goals = stage_goals
        self.sym = _SymState(graph)
        self.moved: set[str] = set()
        self.opened_in_bundle: set[str] = set()
        self.out: list[PrimitiveAction] = []
        self.stage = "explore"
        self.index = 0

    def pass_stage(self, stage: str, actions: list[PrimitiveAction]
                   ) -> list[PrimitiveAction]:
        self.stage = stage
        self.out = []
        for self.index, action in enumerate(actions):
            self.emit(action, original=True)
        return self.out

    # -- helpers --------------------------------------------------------------

    def flag(self, criterion: str, description: str, repairable: bool = True):
        self.report.violations.append(Violation(
            criterion, description, self.stage, self.index, repairable))
        if not repairable:
            self.report.repaired = False

    def repair(self, action: PrimitiveAction, why: str):
        self.report.repairs.append(f"insert {action} ({why})")
        self.emit(action, original=False)

    def clear_obstacles(self, target: str):
        for blocker in blockers_in_front(self.graph, target):
            if blocker in self.moved:
                continue
            self.flag("c", f"{blocker} sits in front of {target}")
            self.repair(PrimitiveAction(Verb.GRASP, blocker),
                        f"clear {blocker} before reaching {target}")
            self.repair(PrimitiveAction(
                Verb.PLACE, destination=PlaceRef.on(self.context.spill_surface)),
                f"park {blocker} on {self.context.spill_surface}")

    def free_gripper(self):
        if self.sym.held is not None:
            self.flag("b", f"gripper holds {self.sym.held} where it must be empty")
            self.repair(PrimitiveAction(
                Verb.PLACE, destination=PlaceRef.on(self.context.spill_surface)),
                f"put {self.sym.held} down first")

    # -- the streaming checks -------------------------------------------------

    def emit(self, action: PrimitiveAction, original: bool):
        if action.verb in (Verb.OPEN, Verb.CLOSE):
            self._pre_open_close(action)
        elif action.verb is Verb.GRASP:
            self._pre_grasp(action)
        else:
            self._pre_place(action)
        if action.verb is Verb.GRASP:
            self.moved.add(action.object)
        if action.verb is Verb.OPEN:
            self.opened_in_bundle.add(action.object)
        self.out.append(action)
        self.sym.apply(action)

    def _pre_open_close(self, action: PrimitiveAction):
        cid = action.object
        node = self.graph.node(cid)
        state = self.sym.state.get(cid)
        if node is None or state is None:
            self.flag("b", f"{action} targets something that is not a container",
                      repairable=False)
            return
        wanted = "closed" if action.verb is Verb.OPEN else "open"
        if state != wanted:
            self.flag("b", f"{action} but {cid} is already {state}",
                      repairable=False)
        self.free_gripper()
        self.clear_obstacles(cid)

    def _pre_grasp(self, action: PrimitiveAction):
        oid = action.object
        if self.sym.held == oid:
            self.flag("b", f"{action} while already holding it", repairable=False)
            return
        self.free_gripper()
        loc = self.sym.loc.get(oid)
        if loc is None:
            self.flag("b", f"{action} targets an unobserved object",
                      repairable=False)
            return
        if loc.kind == "inside" and self.sym.state.get(loc.target) == "closed":
            self.flag("b", f"{action} but {loc.target} is closed")
            self.repair(PrimitiveAction(Verb.OPEN, loc.target),
                        f"open {loc.target} before reaching inside")
        elif loc.kind == "inside":
            self.clear_obstacles(loc.target)
        self.clear_obstacles(oid)

    def _pre_place(self, action: PrimitiveAction):
        dest = action.destination
        if self.sym.held is None:
            subject = self._infer_place_subject(dest)
            self.flag("b", f"{action} with an empty gripper")
            if subject is None:
                self.report.repaired = False
                self.report.violations[-1] = Violation(
                    "b", f"{action} with an empty gripper and no inferable object",
                    self.stage, self.index, repairable=False)
            else:
                self.repair(PrimitiveAction(Verb.GRASP, subject),
                            f"grasp {subject} before placing it")
        if dest.kind == "inside" and not dest.target.startswith("?"):
            state = self.sym.state.get(dest.target)
            if state is None:
                self.flag("b", f"{action} into non-container {dest.target}",
                          repairable=False)
            elif state == "closed":
                held = self.sym.held
                self.flag("b", f"{action} but {dest.target} is closed")
                if held is not None:
                    self.repair(PrimitiveAction(
                        Verb.PLACE,
                        destination=PlaceRef.on(self.context.spill_surface)),
                        f"park {held} while opening {dest.target}")
                self.repair(PrimitiveAction(Verb.OPEN, dest.target),
                            f"open {dest.target} before placing into it")
                if held is not None:
                    self.repair(PrimitiveAction(Verb.GRASP, held),
                                f"pick {held} back up")

    def _infer_place_subject(self, dest: PlaceRef) -> str | None:
        goal = self.stage_goals.get(self.stage) or self.stage_goals.get("complete")
        if goal is None:
            return None
        for leaf in _at_leaves(goal.predicate):
            if leaf.place.kind != dest.kind or leaf.place.target != dest.target:
                continue
            subject = leaf.selector.id
            if subject is None or subject not in self.sym.loc:
                continue
            loc = self.sym.loc[subject]
            if loc.kind == dest.kind and loc.target == dest.target:
                continue  # already satisfied
            return subject
        return None


def _at_leaves(pred: Predicate) -> list[At]:
    if isinstance(pred, AllOf):
        out = []
        for c in pred.children:
            out.extend(_at_leaves(c))
        return out
    if isinstance(pred, ForAll):
        return _at_leaves(pred.body)
    if isinstance(pred, At):
        return [pred]
    return []
