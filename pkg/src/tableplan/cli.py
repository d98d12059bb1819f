"""Benchmark runner CLI: seeded episode batches per task and mode, aggregated
into a success-rate report."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path

from .orchestrator import (EpisodeConfig, Mode, builtin_goal_path,
                           builtin_scene_path, run_episode, write_trace)
from .world import Verb

BUILTIN_TASKS = ("task1", "task2", "task3", "task4", "task5")


@dataclass(frozen=True)
class BenchmarkRow:
    task: str
    mode: str
    episodes: int
    successes: int
    aborts: int
    mean_steps: float | None
    mean_retries: float | None

    @property
    def success_rate(self) -> float | None:
        if self.episodes == 0:
            return None
        return 100.0 * self.successes / self.episodes


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]

    def average_rate(self) -> float | None:
        rates = [r.success_rate for r in self.rows if r.success_rate is not None]
        if not rates:
            return None
        return sum(rates) / len(rates)

    def row(self, task: str) -> BenchmarkRow:
        for r in self.rows:
            if r.task == task:
                return r
        raise KeyError(task)


def run_benchmark(tasks, mode: Mode, episodes: int, base_seed: int,
                  noise: dict[Verb, float] | None,
                  backend: str = "symbolic", restore: bool = True,
                  trace_dir: str | Path | None = None,
                  planner_client=None) -> BenchmarkReport:
    rows = []
    for task in tasks:
        scene, goal = _resolve_task(task)
        successes = aborts = 0
        steps: list[int] = []
        attempts = wins = 0
        for i in range(episodes):
            cfg = EpisodeConfig(scene=scene, goal=goal, seed=base_seed + i,
                                mode=mode, noise=noise, restore=restore,
                                planner_backend=backend,
                                planner_client=planner_client)
            result = run_episode(cfg)
            if result.abort_reason is not None:
                aborts += 1
                continue
            if result.success and result.goal_achieved:
                successes += 1
            steps.append(result.steps)
            a, w = _noisy_counts(result)
            attempts += a
            wins += w
            if trace_dir is not None:
                name = f"{_task_name(task)}_{mode.value}_{base_seed + i}.trace.jsonl"
                write_trace(result, Path(trace_dir) / name)
        retries = None
        if wins > 0:
            retries = (attempts - wins) / wins
        rows.append(BenchmarkRow(
            task=_task_name(task), mode=mode.value, episodes=episodes,
            successes=successes, aborts=aborts,
            mean_steps=(sum(steps) / len(steps)) if steps else None,
            mean_retries=retries))
    return BenchmarkReport(tuple(rows))


def _noisy_counts(result) -> tuple[int, int]:
    attempts = wins = 0
    for event in result.trace:
        if event.action is None or event.outcome is None:
            continue
        if event.action["verb"] in ("GRASP", "OPEN") and event.outcome["executed"]:
            attempts += 1
            if event.outcome["succeeded"]:
                wins += 1
    return attempts, wins


def _task_name(task) -> str:
    if isinstance(task, str) and not task.endswith(".json"):
        return task
    return Path(str(task)).stem.replace(".scene", "")


def _resolve_task(task):
    if isinstance(task, str) and task in BUILTIN_TASKS:
        scene = builtin_scene_path(task)
        goal = builtin_goal_path(task)
    else:
        scene = Path(str(task))
        goal = scene.with_name(scene.name.replace(".scene.json", ".goal.json"))
    for p in (scene, goal):
        if not Path(p).exists():
            raise FileNotFoundError(f"missing task fixture: {p}")
    return scene, goal


# ---------------------------------------------------------------------------
# Report rendering


_COLUMNS = ("task", "mode", "episodes", "successes", "aborts",
            "success_rate", "mean_steps", "mean_retries")


def _row_values(row: BenchmarkRow) -> list[str]:
    return [row.task, row.mode, str(row.episodes), str(row.successes),
            str(row.aborts),
            _fmt(row.success_rate), _fmt(row.mean_steps), _fmt(row.mean_retries)]


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def emit_report(report: BenchmarkReport, fmt: str = "table") -> str:
    table = [list(_COLUMNS)] + [_row_values(r) for r in report.rows]
    avg = report.average_rate()
    table.append(["Average", "", "", "", "", _fmt(avg), "", ""])
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\r\n")
        writer.writerows(table)
        return out.getvalue()
    if fmt == "table":
        widths = [max(len(line[i]) for line in table) for i in range(len(_COLUMNS))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip()
                 for line in table]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_noise(text: str) -> dict[Verb, float]:
    noise = {}
    if not text:
        return noise
    for part in text.split(","):
        verb, _, prob = part.partition("=")
        noise[Verb(verb.strip().upper())] = float(prob)
    return noise


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tableplan",
        description="Closed-loop tabletop planning benchmark runner.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a benchmark batch")
    run.add_argument("--task", action="append", required=True,
                     help="builtin task name (task1..task5) or scene file; repeatable")
    run.add_argument("--mode", default="full",
                     choices=[m.value for m in Mode])
    run.add_argument("--episodes", type=int, default=10)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--noise", default="",
                     help="e.g. grasp=0.5,open=0.5")
    run.add_argument("--backend", default="symbolic",
                     choices=["symbolic", "external"])
    run.add_argument("--fixture", default=None,
                     help="fixture file for --backend external (replay mode)")
    run.add_argument("--no-restore", action="store_true",
                     help="skip post-task scene restoration")
    run.add_argument("--trace", default=None, help="directory for episode traces")
    run.add_argument("--report", default=None, help="write the report here")
    run.add_argument("--format", default="table", choices=["table", "csv"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        noise = parse_noise(args.noise)
        planner_client = None
        if args.backend == "external":
            if not args.fixture:
                raise ValueError("--backend external requires --fixture")
            from .llm import RemotePlannerBackend
            planner_client = RemotePlannerBackend(mode="replay",
                                                  fixture_path=args.fixture)
        if args.trace:
            Path(args.trace).mkdir(parents=True, exist_ok=True)
        report = run_benchmark(
            tasks=args.task, mode=Mode(args.mode), episodes=args.episodes,
            base_seed=args.seed, noise=noise or None, backend=args.backend,
            restore=not args.no_restore, trace_dir=args.trace,
            planner_client=planner_client)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = emit_report(report, args.format)
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
