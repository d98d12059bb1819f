"""Closed-loop tabletop task planning against a seeded simulator: relation
graphs, dual-stage planning with self-reflection, and per-step validation."""

from .graph import (ContainerState, GraphChangeSet, Location, ObjectNode,
                    Relation, RelationEdge, RelationGraph, derive_relations,
                    graph_diff)
from .orchestrator import (EpisodeConfig, EpisodeResult, Mode, TraceEvent,
                           run_episode)
from .perception import ObservabilityRules, perceive
from .planner import (Feedback, FeedbackReason, PlannerMemory, StagePlanBundle,
                      SymbolicPlanner, resolve_placeholders, sufficiency_check)
from .predicates import Goal, Truth, eval_predicate
from .reflection import ReflectionReport, reflect
from .validator import validate
from .world import (PrimitiveAction, PrimitiveOutcome, Verb, WorldState,
                    apply_primitive, inject_noise, load_scene)

__version__ = "0.1.0"
