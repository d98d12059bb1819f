"""Per-step execution validation: compare the relation graphs captured before
and after a primitive, check the primitive's expected effect, then check the
step's sub-goal.  The simulator's outcome record is deliberately not an
input: failure must be inferred from the graphs alone."""

from __future__ import annotations

from .graph import ContainerState, GraphChangeSet, Location, RelationGraph, graph_diff
from .planner import Feedback, FeedbackReason, blockers_in_front
from .predicates import Goal, Truth, eval_predicate
from .world import PrimitiveAction, Verb


def expected_effect_holds(diff: GraphChangeSet, before: RelationGraph,
                          after: RelationGraph, action: PrimitiveAction) -> bool:
    """Per-verb expected change: GRASP moves the target to the gripper, PLACE
    moves the held object to the destination, OPEN/CLOSE flip container state
    (content nodes may appear or vanish alongside)."""
    if action.verb is Verb.GRASP:
        node = after.node(action.object)
        return node is not None and node.location.kind == "gripper"
    if action.verb is Verb.PLACE:
        held = before.held_object()
        if held is None:
            return False
        moved = after.node(held.id)
        wanted = Location(action.destination.kind, action.destination.target)
        return moved is not None and moved.location == wanted
    wanted_state = (ContainerState.OPEN if action.verb is Verb.OPEN
                    else ContainerState.CLOSED)
    was = before.node(action.object)
    now = after.node(action.object)
    return (was is not None and now is not None
            and was.container_state is not wanted_state
            and now.container_state is wanted_state)


def validate(before: RelationGraph, after: RelationGraph,
             action: PrimitiveAction, subgoal: Goal | None,
             stage: str) -> Feedback:
    diff = graph_diff(before, after)

    if not expected_effect_holds(diff, before, after, action):
        reason, detail = _classify_failure(diff, before, action)
        return Feedback("no", stage, reason, detail)

    if subgoal is None:
        return Feedback("yes", stage)
    truth = eval_predicate(subgoal.predicate, after, subgoal.queries)
    if truth is Truth.TRUE:
        return Feedback("yes", stage)
    # Unknown counts as incomplete, not failure: exploration legitimately
    # leaves its sub-goal undecided mid-stage.
    return Feedback("no", stage, FeedbackReason.SUBGOAL_INCOMPLETE,
                    {"unmet": subgoal.canonical(), "truth": truth.value})


def _classify_failure(diff: GraphChangeSet, before: RelationGraph,
                      action: PrimitiveAction) -> tuple[FeedbackReason, dict]:
    detail = {"action": action.to_json()}

    impossible = _structurally_impossible(before, action)
    if impossible:
        detail["why"] = impossible
        return FeedbackReason.PLAN_LOGIC_ERROR, detail

    if diff.is_empty():
        target = _blocking_target(before, action)
        if target is not None:
            blockers = blockers_in_front(before, target)
            if blockers:
                detail["target"] = target
                detail["blocker"] = blockers[0]
                return FeedbackReason.OBSTACLE_BLOCKING, detail

    return FeedbackReason.PRIMITIVE_FAILED, detail


def _blocking_target(before: RelationGraph, action: PrimitiveAction) -> str | None:
    if action.verb in (Verb.OPEN, Verb.CLOSE):
        return action.object
    if action.verb is Verb.GRASP:
        node = before.node(action.object)
        if node is not None and node.location.kind == "inside":
            return node.location.target
        return action.object
    return None


def _structurally_impossible(before: RelationGraph,
                             action: PrimitiveAction) -> str | None:
    held = before.held_object()
    if action.verb is Verb.GRASP:
        node = before.node(action.object)
        if node is None:
            return f"{action.object} is not in the observed scene"
        if node.location.kind == "gripper":
            return f"{action.object} is already held"
        if held is not None:
            return f"gripper already holds {held.id}"
        if node.location.kind == "covered_by":
            return f"{action.object} is covered by {node.location.target}"
        if node.location.kind == "inside":
            host = before.node(node.location.target)
            if host is not None and host.container_state is ContainerState.CLOSED:
                return f"{node.location.target} is closed"
        return None
    if action.verb is Verb.PLACE:
        if held is None:
            return "nothing is held"
        if action.destination.kind == "inside":
            target = action.destination.target
            if target.startswith("?"):
                return f"destination {target} is an unresolved placeholder"
            host = before.node(target)
            if host is None:
                return f"destination {target} is not in the observed scene"
            if host.container_state is ContainerState.NOT_A_CONTAINER:
                return f"{target} is not a container"
            if host.container_state is ContainerState.CLOSED:
                return f"{target} is closed"
        return None
    # OPEN / CLOSE
    node = before.node(action.object)
    if node is None:
        return f"{action.object} is not in the observed scene"
    if node.container_state is ContainerState.NOT_A_CONTAINER:
        return f"{action.object} is not a container"
    wanted_before = (ContainerState.CLOSED if action.verb is Verb.OPEN
                     else ContainerState.OPEN)
    if node.container_state is not wanted_before:
        return f"{action.object} is already {node.container_state.value}"
    if held is not None:
        return f"gripper holds {held.id} during {action.verb.value}"
    return None
