"""The closed perception-plan-execute-validate loop with step budget, trace
recording, ablation wiring, and episode verdicts."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .graph import RelationGraph
from .perception import (GroundTruthPerception, ObservabilityRules,
                         full_visibility_graph, gate_graph)
from .planner import (BasicSinglePlanner, Feedback, PlannerMemory,
                      StagePlanBundle, SymbolicPlanner, guess_placeholders)
from .predicates import Goal, Truth, eval_predicate
from .reflection import reflect
from .validator import validate
from .world import (PrimitiveAction, Verb, WorldState, apply_primitive,
                    inject_noise, load_scene)


class Mode(Enum):
    FULL = "full"
    NO_GRAPH = "no_graph"
    NO_REFLECTION = "no_reflection"
    NO_VALIDATOR = "no_validator"
    OPEN_LOOP = "open_loop"
    SINGLE_STAGE = "single_stage"


BLIND_MODES = (Mode.NO_VALIDATOR, Mode.OPEN_LOOP)


class BackendError(RuntimeError):
    """Transport-level failure of an external backend; aborts the episode
    without counting as a task failure."""


@dataclass
class EpisodeConfig:
    scene: str | Path | dict
    goal: str | Path | dict | Goal
    seed: int = 0
    max_steps: int = 60
    mode: Mode = Mode.FULL
    noise: dict[Verb, float] | None = None
    restore: bool = True
    planner_backend: str = "symbolic"      # "symbolic" | "external"
    perception_backend: str = "ground_truth"
    planner_client: object = None           # external planner (llm module)
    perception_client: object = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)


@dataclass
class TraceEvent:
    t: int
    graph_before: dict
    bundle: dict
    action: dict | None
    stage: str | None
    subgoal: dict | None
    outcome: dict | None
    graph_after: dict
    feedback: dict | None
    reflection: dict | None
    duration_s: float = 0.0  # informational; excluded from the canonical form

    def to_json(self) -> dict:
        return {"t": self.t, "graph_before": self.graph_before,
                "bundle": self.bundle, "action": self.action,
                "stage": self.stage, "subgoal": self.subgoal,
                "outcome": self.outcome, "graph_after": self.graph_after,
                "feedback": self.feedback, "reflection": self.reflection}


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    trace: list[TraceEvent]
    abort_reason: str | None = None
    goal_achieved: bool = False
    final_world: WorldState | None = None

    def trace_bytes(self) -> bytes:
        lines = [json.dumps(e.to_json(), sort_keys=True, separators=(",", ":"))
                 for e in self.trace]
        return ("\n".join(lines) + "\n").encode() if lines else b""


def write_trace(result: EpisodeResult, path: str | Path) -> None:
    Path(path).write_bytes(result.trace_bytes())


def builtin_scene_path(name: str) -> Path:
    base = resources.files("tableplan") / "scenes"
    return Path(str(base / f"{name}.scene.json"))


def builtin_goal_path(name: str) -> Path:
    base = resources.files("tableplan") / "scenes"
    return Path(str(base / f"{name}.goal.json"))


def _load_world(source) -> WorldState:
    if isinstance(source, str) and not source.endswith(".json") and "\n" not in source:
        source = builtin_scene_path(source)
    return load_scene(source)


def _load_goal(source) -> Goal:
    if isinstance(source, Goal):
        return source
    if isinstance(source, dict):
        return Goal.from_json(source)
    if isinstance(source, str) and not source.endswith(".json") and "\n" not in source:
        source = builtin_goal_path(source)
    return Goal.from_json(json.loads(Path(source).read_text()))


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    world = _load_world(cfg.scene).with_seed(cfg.seed)
    goal = _load_goal(cfg.goal)
    if cfg.noise is not None:
        world = inject_noise(world, cfg.noise)
    ctx = world.context

    if cfg.mode is Mode.SINGLE_STAGE:
        planner = BasicSinglePlanner(ctx)
    elif cfg.planner_backend == "external":
        planner = _ExternalPlanner(cfg.planner_client)
    else:
        planner = SymbolicPlanner(ctx, restore=cfg.restore)

    if cfg.perception_backend == "external":
        perception = cfg.perception_client
    else:
        perception = GroundTruthPerception(ObservabilityRules())

    memory = PlannerMemory(seed=cfg.seed)
    reflect_on = cfg.mode not in (Mode.NO_REFLECTION, Mode.SINGLE_STAGE)
    validate_on = cfg.mode not in BLIND_MODES

    def percept(w: WorldState, t: int) -> RelationGraph:
        try:
            g = gate_graph(perception.observe(w, goal, t))
        except BackendError:
            raise
        if cfg.mode is Mode.NO_GRAPH:
            g = g.without_edges()
        return g

    events: list[TraceEvent] = []
    feedback: Feedback | None = None
    t = 0

    try:
        graph = percept(world, 0)
    except BackendError as exc:
        return EpisodeResult(False, 0, [], abort_reason=str(exc))

    try:
        while t < cfg.max_steps:
            started = time.perf_counter()
            memory.record_percept(graph)
            bundle = planner.plan(graph, goal, feedback, memory)
            bundle.validate()
            if bundle.is_termination():
                return _finish(True, t, events, world, goal)

            if cfg.mode in BLIND_MODES:
                if bundle.placeholders:
                    bundle = guess_placeholders(bundle, graph, ctx)
                report = None
                if reflect_on:
                    bundle, report = reflect(bundle, graph, ctx, cfg.restore)
                world, graph, t = _execute_blind(
                    cfg, world, goal, graph, bundle, report, events, t, percept)
                # Without step-wise validation there is no feedback channel to
                # plan against, so the episode is a single blind pass.
                return _finish(False, t, events, world, goal)

            report = None
            if reflect_on:
                bundle, report = reflect(bundle, graph, ctx, cfg.restore)

            action, subgoal, stage = _choose(bundle)
            if action is None:
                # Unsatisfiable or stalled bundle: burn a step so the budget
                # surfaces the situation as a failure.
                events.append(TraceEvent(
                    t, graph.to_json(), bundle.to_json(), None, stage,
                    subgoal.to_json() if subgoal else None, None,
                    graph.to_json(), None,
                    report.to_json() if report else None,
                    time.perf_counter() - started))
                feedback = None
                t += 1
                continue

            world, outcome = apply_primitive(world, action)
            after = percept(world, t + 1)
            feedback = (validate(graph, after, action, subgoal, stage)
                        if validate_on else None)
            memory.note_transition(graph, after, action)
            events.append(TraceEvent(
                t, graph.to_json(), bundle.to_json(), action.to_json(), stage,
                subgoal.to_json() if subgoal else None, outcome.to_json(),
                after.to_json(),
                feedback.to_json() if feedback else None,
                report.to_json() if report else None,
                time.perf_counter() - started))
            graph = after
            t += 1
    except BackendError as exc:
        result = _finish(False, t, events, world, goal)
        result.abort_reason = str(exc)
        return result

    return _finish(False, t, events, world, goal)


def _choose(bundle: StagePlanBundle
            ) -> tuple[PrimitiveAction | None, Goal | None, str]:
    if bundle.explore_plan:
        return bundle.explore_plan[0], bundle.explore_goal, "explore"
    if bundle.complete_plan:
        return bundle.complete_plan[0], bundle.complete_goal, "complete"
    return None, bundle.complete_goal, "complete"


def _execute_blind(cfg, world, goal, graph, bundle, report, events, t, percept):
    for action in tuple(bundle.explore_plan or ()) + tuple(bundle.complete_plan or ()):
        if t >= cfg.max_steps:
            break
        started = time.perf_counter()
        world, outcome = apply_primitive(world, action)
        after = percept(world, t + 1)
        events.append(TraceEvent(
            t, graph.to_json(), bundle.to_json(), action.to_json(), None, None,
            outcome.to_json(), after.to_json(), None,
            report.to_json() if report else None,
            time.perf_counter() - started))
        graph = after
        t += 1
    return world, graph, t


def _finish(success: bool, steps: int, events: list[TraceEvent],
            world: WorldState, goal: Goal) -> EpisodeResult:
    achieved = eval_predicate(goal.predicate, full_visibility_graph(world),
                              goal.queries) is Truth.TRUE
    return EpisodeResult(success=success, steps=steps, trace=events,
                         goal_achieved=achieved, final_world=world)


@dataclass
class _ExternalPlanner:
    client: object
    name = "external"

    def plan(self, graph, goal, feedback, memory):
        if self.client is None:
            raise BackendError("no external planner client configured")
        return self.client.generate(graph, goal, feedback)


# ---------------------------------------------------------------------------
# Trace replay


def replay_trace_feedback(result: EpisodeResult) -> bool:
    """Re-run the validator over every recorded step and confirm it reproduces
    the recorded feedback exactly."""
    for event in result.trace:
        if event.action is None or event.feedback is None:
            continue
        fb = validate(
            RelationGraph.from_json(event.graph_before),
            RelationGraph.from_json(event.graph_after),
            PrimitiveAction.from_json(event.action),
            Goal.from_json(event.subgoal) if event.subgoal else None,
            event.stage)
        if fb.to_json() != event.feedback:
            return False
    return True
