"""Scripted-worker harness: drives the service end-to-end under virtual time.

A scenario is an ordered list of phases:

  * ``work(duration_s, chars_per_10s)`` -- one key event per second, character
    deltas spread evenly (integer accumulation), document pushed at phase end
  * ``distract(duration_s)`` -- emits nothing; ``duration_s: null`` means
    "until a notification arrives"
  * ``react(delay_s, then?)`` -- waits for the first notification of the
    pending intervention, clicks ``delay_s`` after it, then optionally runs a
    nested phase

The simulator talks only to the public service surface (create, ingest,
document update, subscribe, end), so every run doubles as an integration test.
With the mock backend everything is a pure function of (scenario, seeds):
two equal runs produce byte-identical logs.
"""

from __future__ import annotations

import argparse
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .clock import VirtualClock
from .core import (
    Condition,
    DocKind,
    EventKind,
    InteractionEvent,
    SessionConfig,
    Slide,
)
from .generation import MockBackend
from .metrics import MetricsReport, export_csv
from .service import SessionService

MS = 1000
_WAIT_SLACK_S = 120  # runtime guard: a pending wait may never exceed T + away + slack


class ScriptDeadlock(ValueError):
    """Scenario would wait forever (e.g. reacting to a notification that cannot come)."""


@dataclass(frozen=True)
class WorkPhase:
    duration_s: float
    chars_per_10s: int = 30


@dataclass(frozen=True)
class DistractPhase:
    duration_s: float | None = None  # None: distract until a notification arrives


@dataclass(frozen=True)
class ReactPhase:
    delay_s: float
    then: "Phase | None" = None


Phase = Union[WorkPhase, DistractPhase, ReactPhase]


@dataclass(frozen=True)
class Scenario:
    phases: tuple[Phase, ...]
    seed: int = 0
    condition: Condition = Condition.PROPOSED
    doc_kind: DocKind = DocKind.TEXT
    idle_threshold_t: float = 45.0
    away_delay: float = 300.0


def _validate_phase(phase: Phase, condition: Condition) -> None:
    if isinstance(phase, WorkPhase):
        if not phase.duration_s > 0:
            raise ValueError(f"work duration must be > 0, got {phase.duration_s}")
        if phase.chars_per_10s < 0:
            raise ValueError("chars_per_10s must be >= 0")
    elif isinstance(phase, DistractPhase):
        if phase.duration_s is None:
            if condition == Condition.NONE:
                raise ScriptDeadlock(
                    "open-ended distraction never ends in the none condition"
                )
        elif not phase.duration_s > 0:
            raise ValueError(f"distract duration must be > 0, got {phase.duration_s}")
    elif isinstance(phase, ReactPhase):
        if condition == Condition.NONE:
            raise ScriptDeadlock("react phase can never fire in the none condition")
        if phase.delay_s < 0:
            raise ValueError("react delay must be >= 0")
        if phase.then is not None:
            _validate_phase(phase.then, condition)
    else:
        raise ValueError(f"unknown phase {phase!r}")


def validate_scenario(scenario: Scenario) -> Scenario:
    if not scenario.phases:
        raise ValueError("scenario needs at least one phase")
    for phase in scenario.phases:
        _validate_phase(phase, scenario.condition)
    return scenario


# -- JSON schema (mirrors the dataclasses) -------------------------------------


def _phase_to_dict(phase: Phase) -> dict:
    if isinstance(phase, WorkPhase):
        return {
            "kind": "work",
            "duration_s": phase.duration_s,
            "chars_per_10s": phase.chars_per_10s,
        }
    if isinstance(phase, DistractPhase):
        return {"kind": "distract", "duration_s": phase.duration_s}
    return {
        "kind": "react",
        "delay_s": phase.delay_s,
        "then": _phase_to_dict(phase.then) if phase.then is not None else None,
    }


def _phase_from_dict(obj: dict) -> Phase:
    kind = obj.get("kind")
    if kind == "work":
        return WorkPhase(
            duration_s=float(obj["duration_s"]),
            chars_per_10s=int(obj.get("chars_per_10s", 30)),
        )
    if kind == "distract":
        dur = obj.get("duration_s")
        return DistractPhase(duration_s=float(dur) if dur is not None else None)
    if kind == "react":
        then = obj.get("then")
        return ReactPhase(
            delay_s=float(obj["delay_s"]),
            then=_phase_from_dict(then) if then else None,
        )
    raise ValueError(f"unknown phase kind {kind!r}")


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "condition": scenario.condition.value,
        "doc_kind": scenario.doc_kind.value,
        "idle_threshold_t": scenario.idle_threshold_t,
        "away_delay": scenario.away_delay,
        "phases": [_phase_to_dict(p) for p in scenario.phases],
    }


def scenario_from_dict(obj: dict) -> Scenario:
    return Scenario(
        phases=tuple(_phase_from_dict(p) for p in obj["phases"]),
        seed=int(obj.get("seed", 0)),
        condition=Condition(obj.get("condition", "proposed")),
        doc_kind=DocKind(obj.get("doc_kind", "text")),
        idle_threshold_t=float(obj.get("idle_threshold_t", 45.0)),
        away_delay=float(obj.get("away_delay", 300.0)),
    )


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- deterministic filler content ----------------------------------------------

_WORDS = (
    "draft outline point detail revise section idea sketch note theme "
    "support claim example evidence summary question answer link bridge close"
).split()


class _TextStream:
    """Supplies exactly-sized character runs, reproducible per seed."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)
        self._buffer = ""

    def take(self, n: int) -> str:
        while len(self._buffer) < n:
            self._buffer += self._rng.choice(_WORDS) + " "
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out


# -- runner ---------------------------------------------------------------------


class _Driver:
    def __init__(self, scenario: Scenario, service: SessionService):
        self.scenario = scenario
        self.service = service
        cfg = SessionConfig(
            idle_threshold_t=scenario.idle_threshold_t,
            away_delay=scenario.away_delay,
            condition=scenario.condition,
        )
        self.sid = service.create_session(cfg, doc_kind=scenario.doc_kind)
        self.start_clock = service.clock.now_ms
        self.notifications: list[dict] = []
        service.subscribe(self.sid, self._collect)
        self.words = _TextStream(scenario.seed)
        self.text = ""
        self.last_interaction = 0
        self.wait_budget_ms = int(
            (scenario.idle_threshold_t + scenario.away_delay + _WAIT_SLACK_S) * MS
        )
        if scenario.doc_kind == DocKind.SLIDE_DECK:
            deck_rng = random.Random(scenario.seed ^ 0x5EED)
            slides = [
                Slide(
                    title=" ".join(deck_rng.choice(_WORDS) for _ in range(3)),
                    body_items=tuple(
                        deck_rng.choice(_WORDS) for _ in range(deck_rng.randint(1, 3))
                    ),
                )
                for _ in range(deck_rng.randint(1, 3))
            ]
            service.update_document(
                self.sid,
                {
                    "doc_kind": "slide_deck",
                    "slides": [
                        {"title": s.title, "body_items": list(s.body_items)}
                        for s in slides
                    ],
                },
            )

    def _collect(self, msg: dict) -> None:
        if msg.get("type") == "notification":
            self.notifications.append(msg)

    @property
    def now(self) -> int:
        return self.service.clock.now_ms - self.start_clock

    def advance_to(self, session_t: int) -> None:
        delta = session_t - self.now
        if delta > 0:
            self.service.advance(delta)

    def emit(self, kind: EventKind, at: int, chars: int = 0) -> None:
        self.service.ingest_event(
            self.sid, InteractionEvent(self.sid, at, kind, chars)
        )
        if kind in (EventKind.KEY, EventKind.CLICK):
            self.last_interaction = at

    def pending_notification_at(self) -> int | None:
        """First notification of the currently unanswered intervention."""
        for msg in self.notifications:
            if msg["at"] > self.last_interaction:
                return msg["at"]
        return None

    def wait_for_notification(self) -> int:
        waited = 0
        while True:
            anchor = self.pending_notification_at()
            if anchor is not None:
                return anchor
            if waited >= self.wait_budget_ms:
                raise ScriptDeadlock(
                    f"no notification after {waited} ms in {self.scenario.condition.value}"
                )
            self.service.advance(self.service.quantum_ms)
            waited += self.service.quantum_ms

    def run(self) -> MetricsReport:
        queue: list[Phase] = list(self.scenario.phases)
        while queue:
            phase = queue.pop(0)
            if isinstance(phase, WorkPhase):
                self._run_work(phase)
            elif isinstance(phase, DistractPhase):
                if phase.duration_s is None:
                    self.wait_for_notification()
                else:
                    self.advance_to(self.now + int(phase.duration_s * MS))
            else:
                anchor = self.wait_for_notification()
                target = max(self.now, anchor + int(phase.delay_s * MS))
                self.advance_to(target)
                self.emit(EventKind.CLICK, target)
                if phase.then is not None:
                    queue.insert(0, phase.then)
        return self.service.end_session(self.sid)

    def _run_work(self, phase: WorkPhase) -> None:
        start = self.now
        seconds = int(phase.duration_s)
        cum_prev = 0
        for k in range(1, seconds + 1):
            at = start + k * MS
            self.advance_to(at)
            cum = phase.chars_per_10s * k // 10
            delta, cum_prev = cum - cum_prev, cum
            self.text += self.words.take(delta)
            self.emit(EventKind.KEY, at, delta)
        end = start + int(phase.duration_s * MS)
        self.advance_to(end)
        if self.scenario.doc_kind == DocKind.TEXT and self.text:
            self.service.update_document(self.sid, {"doc_kind": "text", "text": self.text})
        elif self.scenario.doc_kind == DocKind.SLIDE_DECK:
            title_words = self.words.take(18).strip()
            self.service.update_document(
                self.sid,
                {"append_slide": {"title": title_words or "notes", "body_items": []}},
            )


def run_scenario(scenario: Scenario, service: SessionService) -> tuple[str, MetricsReport]:
    """Run one scripted worker against the service; returns (session_id, report)."""
    validate_scenario(scenario)
    driver = _Driver(scenario, service)
    report = driver.run()
    return driver.sid, report


# -- fuzzing ----------------------------------------------------------------------


def fuzz_scenarios(n: int, seed: int) -> list[Scenario]:
    """Random but always-valid scenarios; the same (n, seed) yields the same list."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    scenarios: list[Scenario] = []
    for _ in range(n):
        condition = rng.choice(list(Condition))
        doc_kind = DocKind.TEXT if rng.random() < 0.7 else DocKind.SLIDE_DECK
        t_seconds = rng.choice([5, 10, 20, 45, 60])
        phases: list[Phase] = []
        n_phases = rng.randint(1, 5)
        while len(phases) < n_phases:
            roll = rng.random()
            if condition == Condition.NONE:
                roll *= 0.7  # only work/finite-distract are legal
            if roll < 0.45:
                phases.append(
                    WorkPhase(
                        duration_s=rng.randrange(3, 40),
                        chars_per_10s=rng.choice([0, 10, 20, 30, 50, 80]),
                    )
                )
            elif roll < 0.7:
                phases.append(
                    DistractPhase(duration_s=rng.randrange(2, max(3 * t_seconds, 30)))
                )
            elif roll < 0.85:
                phases.append(DistractPhase(duration_s=None))
                phases.append(ReactPhase(delay_s=rng.choice([0, 1, 5, 10, 30, 100])))
            else:
                then = (
                    WorkPhase(duration_s=rng.randrange(3, 20), chars_per_10s=30)
                    if rng.random() < 0.4
                    else None
                )
                phases.append(
                    ReactPhase(
                        delay_s=rng.choice([0, 1, 5, 10, 30, 100, 2 * t_seconds]),
                        then=then,
                    )
                )
        scenarios.append(
            validate_scenario(
                Scenario(
                    phases=tuple(phases),
                    seed=rng.randrange(2**31),
                    condition=condition,
                    doc_kind=doc_kind,
                    idle_threshold_t=float(t_seconds),
                )
            )
        )
    return scenarios


def run_suite(
    n: int,
    seed: int,
    data_dir: str | Path,
    csv_path: str | Path | None = None,
    mock_seed: int = 7,
) -> list[MetricsReport]:
    """Run a fuzzed suite on one fresh service; optionally export the session CSV."""
    service = SessionService(
        data_dir, clock=VirtualClock(), backend=MockBackend(seed=mock_seed)
    )
    reports = []
    for scenario in fuzz_scenarios(n, seed):
        _, report = run_scenario(scenario, service)
        reports.append(report)
    if csv_path is not None:
        export_csv(reports, csv_path)
    return reports


# -- CLI -----------------------------------------------------------------------


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="worker-sim")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario file")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--condition", choices=[c.value for c in Condition], default=None)
    run_p.add_argument("--report", default=None, help="CSV output path")
    run_p.add_argument("--data-dir", default="./worker-sim-data")
    run_p.add_argument("--mock-seed", type=int, default=7)

    fuzz_p = sub.add_parser("fuzz", help="run a fuzzed scenario suite")
    fuzz_p.add_argument("--n", type=int, default=100)
    fuzz_p.add_argument("--seed", type=int, default=1)
    fuzz_p.add_argument("--report", default=None, help="CSV output path")
    fuzz_p.add_argument("--aggregate", default=None, help="aggregate JSON output path")
    fuzz_p.add_argument("--data-dir", default="./worker-sim-data")
    fuzz_p.add_argument("--mock-seed", type=int, default=7)

    args = parser.parse_args(argv)
    if args.command == "run":
        scenario = load_scenario(args.scenario)
        if args.condition is not None:
            from dataclasses import replace

            scenario = replace(scenario, condition=Condition(args.condition))
        service = SessionService(
            args.data_dir, clock=VirtualClock(), backend=MockBackend(seed=args.mock_seed)
        )
        sid, report = run_scenario(scenario, service)
        print(json.dumps({"session_id": sid, "report": report.to_dict()}, indent=2))
        if args.report:
            export_csv([report], args.report)
    else:
        reports = run_suite(
            args.n, args.seed, args.data_dir, csv_path=args.report, mock_seed=args.mock_seed
        )
        if args.aggregate:
            from .metrics import aggregate_by_condition

            Path(args.aggregate).write_text(
                json.dumps(aggregate_by_condition(reports), indent=2), encoding="utf-8"
            )
        print(f"ran {len(reports)} scenarios; logs under {args.data_dir}")
        if args.report:
            print(f"per-session metrics: {args.report}")
        if args.aggregate:
            print(f"aggregate by condition: {args.aggregate}")


if __name__ == "__main__":
    main()
