"""Behavioral measures computed from session records.

Four measures per session:

  * interest retrieval time -- first notification of an episode to the first
    interaction after it, one value per resumed episode that was notified
  * ignorance -- each in-page notification is ``worked`` when resumption beat
    the next scheduled prompt, else ``ignored``; reported for all
    notifications and for the session's first intervention episode alone
  * progress after resumption -- characters typed (positive deltas only)
    within the progress window after resuming; the net change is kept as a
    secondary column for sensitivity analysis
  * total task time -- session end minus session start

A notification dangling at session end is counted ignored once a full
threshold elapsed unanswered, and excluded from both counts otherwise.
Away emails never enter the ignorance accounting; they are not prompts the
worker can answer on the page.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .core import (
    Condition,
    EmptyInput,
    InteractionEvent,
    InterventionEpisode,
    SessionNotEnded,
)

CSV_COLUMNS = (
    "session_id",
    "condition",
    "n_episodes",
    "mean_irt_ms",
    "ignored",
    "worked",
    "mean_progress_chars",
    "total_time_ms",
    "mean_net_progress_chars",
)


@dataclass(frozen=True)
class IgnoranceCounts:
    ignored: int = 0
    worked: int = 0
    excluded: int = 0

    def __add__(self, other: "IgnoranceCounts") -> "IgnoranceCounts":
        return IgnoranceCounts(
            self.ignored + other.ignored,
            self.worked + other.worked,
            self.excluded + other.excluded,
        )

    @property
    def rate(self) -> float | None:
        classified = self.ignored + self.worked
        return self.ignored / classified if classified else None


@dataclass
class SessionData:
    """Everything the measures need, assembled by the service or a log replay."""

    session_id: str
    condition: Condition
    idle_threshold_ms: int
    progress_window_ms: int
    episodes: list[InterventionEpisode] = field(default_factory=list)
    events: list[InteractionEvent] = field(default_factory=list)
    started_at: int = 0
    ended_at: int | None = None


@dataclass
class MetricsReport:
    session_id: str
    condition: Condition
    n_episodes: int
    interest_retrieval_times: list[int]
    ignorance_all: IgnoranceCounts
    ignorance_first: IgnoranceCounts
    progress_after_resumption: list[int]
    net_progress_after_resumption: list[int]
    total_task_time_ms: int

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "condition": self.condition.value,
            "n_episodes": self.n_episodes,
            "interest_retrieval_times": list(self.interest_retrieval_times),
            "ignorance": {
                "all": {
                    "ignored": self.ignorance_all.ignored,
                    "worked": self.ignorance_all.worked,
                    "excluded": self.ignorance_all.excluded,
                },
                "first_only": {
                    "ignored": self.ignorance_first.ignored,
                    "worked": self.ignorance_first.worked,
                    "excluded": self.ignorance_first.excluded,
                },
            },
            "progress_after_resumption": list(self.progress_after_resumption),
            "net_progress_after_resumption": list(self.net_progress_after_resumption),
            "total_task_time_ms": self.total_task_time_ms,
        }


def interest_retrieval_time(episode: InterventionEpisode) -> int | None:
    """Resumption minus the first in-page notification; absent when either is missing."""
    prompts = episode.in_page_notifications()
    if not prompts or episode.resumed_at is None:
        return None
    return episode.resumed_at - prompts[0].at


def classify_episode(
    episode: InterventionEpisode, idle_threshold_ms: int, end_at: int
) -> IgnoranceCounts:
    """Apply the worked/ignored rule to one episode's in-page notifications."""
    prompts = episode.in_page_notifications()
    ignored = worked = excluded = 0
    resumed = episode.resumed_at
    for i, prompt in enumerate(prompts):
        is_last = i == len(prompts) - 1
        if not is_last:
            nxt = prompts[i + 1].at
            if resumed is not None and resumed < nxt:
                worked += 1
            else:
                ignored += 1
        elif resumed is not None:
            if resumed - prompt.at < idle_threshold_ms:
                worked += 1
            else:
                ignored += 1
        else:
            # dangling at session end: ignored once a full threshold passed
            if end_at - prompt.at >= idle_threshold_ms:
                ignored += 1
            else:
                excluded += 1
    return IgnoranceCounts(ignored=ignored, worked=worked, excluded=excluded)


def ignorance_counts(
    episodes: Iterable[InterventionEpisode], idle_threshold_ms: int, end_at: int
) -> tuple[IgnoranceCounts, IgnoranceCounts]:
    """All-notification counts plus the first intervention episode alone."""
    total = IgnoranceCounts()
    first = IgnoranceCounts()
    seen_first = False
    for episode in episodes:
        counts = classify_episode(episode, idle_threshold_ms, end_at)
        total = total + counts
        if not seen_first and episode.in_page_notifications():
            first = counts
            seen_first = True
    return total, first


def ignorance_rate(
    episodes: Iterable[InterventionEpisode], idle_threshold_ms: int, end_at: int
) -> dict[str, float | None]:
    total, first = ignorance_counts(episodes, idle_threshold_ms, end_at)
    return {"all": total.rate, "first_only": first.rate}


def progress_after_resumption(
    episode: InterventionEpisode, events: Iterable[InteractionEvent], window_ms: int
) -> int:
    """Characters typed in [resumed_at, resumed_at + window): positive deltas only."""
    if episode.resumed_at is None:
        raise ValueError("episode was never resumed")
    start = episode.resumed_at
    stop = start + window_ms
    return sum(
        ev.chars_delta
        for ev in events
        if ev.chars_delta > 0 and start <= ev.at < stop
    )


def net_progress_after_resumption(
    episode: InterventionEpisode, events: Iterable[InteractionEvent], window_ms: int
) -> int:
    """Net character change over the same window, floored at zero."""
    if episode.resumed_at is None:
        raise ValueError("episode was never resumed")
    start = episode.resumed_at
    stop = start + window_ms
    net = sum(ev.chars_delta for ev in events if start <= ev.at < stop)
    return max(0, net)


def total_task_time(data: SessionData) -> int:
    if data.ended_at is None:
        raise SessionNotEnded(f"session {data.session_id} has not ended")
    return data.ended_at - data.started_at


def build_report(data: SessionData) -> MetricsReport:
    end_at = total_task_time(data) + data.started_at
    irts = [
        irt
        for ep in data.episodes
        if (irt := interest_retrieval_time(ep)) is not None
    ]
    total, first = ignorance_counts(data.episodes, data.idle_threshold_ms, end_at)
    resumed = [ep for ep in data.episodes if ep.resumed_at is not None]
    progress = [
        progress_after_resumption(ep, data.events, data.progress_window_ms)
        for ep in resumed
    ]
    net = [
        net_progress_after_resumption(ep, data.events, data.progress_window_ms)
        for ep in resumed
    ]
    return MetricsReport(
        session_id=data.session_id,
        condition=data.condition,
        n_episodes=len(data.episodes),
        interest_retrieval_times=irts,
        ignorance_all=total,
        ignorance_first=first,
        progress_after_resumption=progress,
        net_progress_after_resumption=net,
        total_task_time_ms=total_task_time(data),
    )


def _summary(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "sd": None, "n": 0}
    if len(values) == 1:
        # sd undefined for a single observation; reported as 0 and flagged
        return {"mean": float(values[0]), "sd": 0.0, "n": 1, "sd_undefined": True}
    return {
        "mean": statistics.fmean(values),
        "sd": statistics.stdev(values),
        "n": len(values),
    }


def aggregate(reports: list[MetricsReport]) -> dict:
    """Pooled mean/SD per measure across sessions."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    irts: list[float] = []
    progress: list[float] = []
    net: list[float] = []
    totals: list[float] = []
    ignorance_all = IgnoranceCounts()
    ignorance_first = IgnoranceCounts()
    for r in reports:
        irts.extend(r.interest_retrieval_times)
        progress.extend(r.progress_after_resumption)
        net.extend(r.net_progress_after_resumption)
        totals.append(r.total_task_time_ms)
        ignorance_all = ignorance_all + r.ignorance_all
        ignorance_first = ignorance_first + r.ignorance_first
    return {
        "n_sessions": len(reports),
        "interest_retrieval_ms": _summary(irts),
        "progress_chars": _summary(progress),
        "net_progress_chars": _summary(net),
        "total_time_ms": _summary(totals),
        "ignorance": {
            "all": {
                "ignored": ignorance_all.ignored,
                "worked": ignorance_all.worked,
                "excluded": ignorance_all.excluded,
                "rate": ignorance_all.rate,
            },
            "first_only": {
                "ignored": ignorance_first.ignored,
                "worked": ignorance_first.worked,
                "excluded": ignorance_first.excluded,
                "rate": ignorance_first.rate,
            },
        },
    }


def aggregate_by_condition(reports: list[MetricsReport]) -> dict:
    if not reports:
        raise EmptyInput("no reports to aggregate")
    out: dict[str, dict] = {}
    for condition in Condition:
        subset = [r for r in reports if r.condition == condition]
        if subset:
            out[condition.value] = aggregate(subset)
    return out


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text if text else "0"


def _mean_or_none(values: list[int]) -> float | None:
    return statistics.fmean(values) if values else None


def csv_row(report: MetricsReport) -> list[str]:
    return [
        report.session_id,
        report.condition.value,
        str(report.n_episodes),
        _fmt(_mean_or_none(report.interest_retrieval_times)),
        str(report.ignorance_all.ignored),
        str(report.ignorance_all.worked),
        _fmt(_mean_or_none(report.progress_after_resumption)),
        str(report.total_task_time_ms),
        _fmt(_mean_or_none(report.net_progress_after_resumption)),
    ]


def export_csv(reports: Iterable[MetricsReport], path: str | Path) -> Path:
    """One row per session; stable formatting so equal runs are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(csv_row(report))
    return path
