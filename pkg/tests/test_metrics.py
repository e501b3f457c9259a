from __future__ import annotations

import random

import pytest

from stallcue import (
    Condition,
    EventKind,
    InteractionEvent,
    InterventionEpisode,
    NotificationRecord,
    PayloadKind,
)
from stallcue.core import EmptyInput, SessionNotEnded
from stallcue.metrics import (
    MetricsReport,
    IgnoranceCounts,
    SessionData,
    aggregate,
    aggregate_by_condition,
    build_report,
    classify_episode,
    csv_row,
    export_csv,
    ignorance_counts,
    ignorance_rate,
    interest_retrieval_time,
    net_progress_after_resumption,
    progress_after_resumption,
    total_task_time,
)

T_MS = 45_000


def _notif(at: int, kind=PayloadKind.CONTINUATION) -> NotificationRecord:
    return NotificationRecord(at=at, payload_kind=kind, headline="h")


def _episode(eid, detected, notif_ats, resumed=None, email_at=None):
    notifs = [_notif(at) for at in notif_ats]
    if email_at is not None:
        notifs.append(_notif(email_at, PayloadKind.AWAY_EMAIL))
    return InterventionEpisode(
        episode_id=eid, detected_at=detected, notifications=notifs, resumed_at=resumed
    )


def _key(at, delta):
    return InteractionEvent("s", at, EventKind.KEY, delta)


class TestInterestRetrievalTime:
    def test_scale_matches_reported_mean(self):
        # 18.8 s from notification to first interaction
        ep = _episode("ep0001", 100_000, [100_000], resumed=118_800)
        assert interest_retrieval_time(ep) == 18_800

    def test_absent_when_never_resumed(self):
        assert interest_retrieval_time(_episode("e", 0, [0])) is None

    def test_zero_when_resumed_at_notification_instant(self):
        ep = _episode("e", 0, [0], resumed=0)
        assert interest_retrieval_time(ep) == 0

    def test_absent_without_notifications(self):
        ep = _episode("e", 0, [], resumed=5_000)
        assert interest_retrieval_time(ep) is None

    def test_email_does_not_anchor_irt(self):
        ep = InterventionEpisode(
            episode_id="e",
            detected_at=0,
            notifications=[
                _notif(500_000, PayloadKind.AWAY_EMAIL),
            ],
            resumed_at=600_000,
        )
        assert interest_retrieval_time(ep) is None


class TestIgnoranceClassification:
    def test_three_prompts_late_reaction(self):
        # hand-applied rule: prompts at 100/145/190 s, resumed at 200 s
        ep = _episode("e", 100_000, [100_000, 145_000, 190_000], resumed=200_000)
        counts = classify_episode(ep, T_MS, end_at=250_000)
        assert (counts.ignored, counts.worked, counts.excluded) == (2, 1, 0)

    def test_single_prompt_quick_reaction(self):
        ep = _episode("e", 100_000, [100_000], resumed=110_000)
        counts = classify_episode(ep, T_MS, end_at=250_000)
        assert (counts.ignored, counts.worked) == (0, 1)

    def test_single_prompt_never_resumed(self):
        ep = _episode("e", 100_000, [100_000])
        counts = classify_episode(ep, T_MS, end_at=250_000)
        assert (counts.ignored, counts.worked) == (1, 0)

    def test_dangling_prompt_younger_than_threshold_excluded(self):
        ep = _episode("e", 100_000, [100_000])
        counts = classify_episode(ep, T_MS, end_at=130_000)
        assert (counts.ignored, counts.worked, counts.excluded) == (0, 0, 1)

    def test_resumption_exactly_threshold_after_last_prompt_is_ignored(self):
        # the next prompt would have fired at that instant
        ep = _episode("e", 0, [0], resumed=T_MS)
        counts = classify_episode(ep, T_MS, end_at=200_000)
        assert (counts.ignored, counts.worked) == (1, 0)

    def test_away_email_not_classified(self):
        ep = _episode("e", 0, [0], resumed=400_000, email_at=300_000)
        counts = classify_episode(ep, T_MS, end_at=500_000)
        assert counts.ignored + counts.worked + counts.excluded == 1

    def test_first_only_covers_whole_first_episode(self):
        episodes = [
            _episode("e1", 0, [0, 45_000], resumed=50_000),
            _episode("e2", 200_000, [200_000], resumed=201_000),
        ]
        total, first = ignorance_counts(episodes, T_MS, end_at=300_000)
        assert (total.ignored, total.worked) == (1, 2)
        assert (first.ignored, first.worked) == (1, 1)

    def test_rates(self):
        episodes = [_episode("e1", 0, [0, 45_000, 90_000], resumed=100_000)]
        rates = ignorance_rate(episodes, T_MS, end_at=200_000)
        assert rates["all"] == pytest.approx(2 / 3)
        assert rates["first_only"] == pytest.approx(2 / 3)

    def test_conservation_over_random_episodes(self):
        rng = random.Random(5)
        for _ in range(200):
            t = rng.choice([5_000, 45_000])
            detected = rng.randrange(0, 50_000)
            prompts = [detected + i * t for i in range(rng.randint(1, 5))]
            resumed = (
                prompts[-1] + rng.randrange(0, 2 * t) if rng.random() < 0.7 else None
            )
            end = prompts[-1] + rng.randrange(0, 3 * t)
            ep = _episode("e", detected, prompts, resumed=resumed)
            counts = classify_episode(ep, t, end_at=max(end, resumed or 0))
            assert counts.ignored + counts.worked + counts.excluded == len(prompts)


class TestProgress:
    WINDOW = 45_000

    def test_positive_deltas_summed(self):
        ep = _episode("e", 0, [0], resumed=100_000)
        events = [_key(101_000, 5), _key(110_000, 10), _key(140_000, 3)]
        assert progress_after_resumption(ep, events, self.WINDOW) == 18

    def test_deletions_excluded_but_in_net(self):
        ep = _episode("e", 0, [0], resumed=100_000)
        events = [_key(101_000, 10), _key(102_000, -4)]
        assert progress_after_resumption(ep, events, self.WINDOW) == 10
        assert net_progress_after_resumption(ep, events, self.WINDOW) == 6

    def test_net_floors_at_zero(self):
        ep = _episode("e", 0, [0], resumed=100_000)
        events = [_key(101_000, -9)]
        assert net_progress_after_resumption(ep, events, self.WINDOW) == 0

    def test_window_is_half_open(self):
        ep = _episode("e", 0, [0], resumed=100_000)
        events = [_key(100_000, 1), _key(145_000, 100)]
        assert progress_after_resumption(ep, events, self.WINDOW) == 1

    def test_empty_window(self):
        ep = _episode("e", 0, [0], resumed=100_000)
        assert progress_after_resumption(ep, [], self.WINDOW) == 0


class TestTotalTime:
    def test_scale_matches_reported_total(self):
        data = SessionData("s", Condition.PROPOSED, T_MS, T_MS, ended_at=1_747_300)
        assert total_task_time(data) == 1_747_300

    def test_zero_length_session(self):
        data = SessionData("s", Condition.PROPOSED, T_MS, T_MS, ended_at=0)
        assert total_task_time(data) == 0

    def test_not_ended_raises(self):
        data = SessionData("s", Condition.PROPOSED, T_MS, T_MS)
        with pytest.raises(SessionNotEnded):
            total_task_time(data)


class TestAggregate:
    def _report(self, sid, irts, totals=0, condition=Condition.PROPOSED):
        return MetricsReport(
            session_id=sid,
            condition=condition,
            n_episodes=len(irts),
            interest_retrieval_times=irts,
            ignorance_all=IgnoranceCounts(1, 2, 0),
            ignorance_first=IgnoranceCounts(0, 1, 0),
            progress_after_resumption=[],
            net_progress_after_resumption=[],
            total_task_time_ms=totals,
        )

    def test_textbook_mean_and_sd(self):
        reports = [self._report(f"s{i}", [v]) for i, v in enumerate([10, 20, 30])]
        summary = aggregate(reports)["interest_retrieval_ms"]
        assert summary["mean"] == pytest.approx(20.0)
        assert summary["sd"] == pytest.approx(10.0)
        assert summary["n"] == 3

    def test_single_value_sd_zero_with_flag(self):
        summary = aggregate([self._report("s", [42])])["interest_retrieval_ms"]
        assert summary == {"mean": 42.0, "sd": 0.0, "n": 1, "sd_undefined": True}

    def test_empty_input_rejected(self):
        with pytest.raises(EmptyInput):
            aggregate([])

    def test_keyed_by_condition(self):
        reports = [
            self._report("s1", [10], condition=Condition.PROPOSED),
            self._report("s2", [20], condition=Condition.CONTROL),
        ]
        agg = aggregate_by_condition(reports)
        assert set(agg) == {"proposed", "control"}
        assert agg["proposed"]["ignorance"]["all"]["ignored"] == 1


class TestCsvExport:
    def test_row_shape_and_formatting(self):
        report = MetricsReport(
            session_id="s000001",
            condition=Condition.PROPOSED,
            n_episodes=2,
            interest_retrieval_times=[10_000, 15_000],
            ignorance_all=IgnoranceCounts(2, 1, 0),
            ignorance_first=IgnoranceCounts(1, 1, 0),
            progress_after_resumption=[18, 5],
            net_progress_after_resumption=[12, 5],
            total_task_time_ms=200_000,
        )
        assert csv_row(report) == [
            "s000001",
            "proposed",
            "2",
            "12500",
            "2",
            "1",
            "11.5",
            "200000",
            "8.5",
        ]

    def test_export_is_byte_stable(self, tmp_path):
        report = MetricsReport(
            session_id="s1",
            condition=Condition.NONE,
            n_episodes=0,
            interest_retrieval_times=[],
            ignorance_all=IgnoranceCounts(),
            ignorance_first=IgnoranceCounts(),
            progress_after_resumption=[],
            net_progress_after_resumption=[],
            total_task_time_ms=5,
        )
        a = export_csv([report], tmp_path / "a.csv").read_bytes()
        b = export_csv([report], tmp_path / "b.csv").read_bytes()
        assert a == b
        header = a.decode().splitlines()[0]
        assert header == (
            "session_id,condition,n_episodes,mean_irt_ms,ignored,worked,"
            "mean_progress_chars,total_time_ms,mean_net_progress_chars"
        )


class TestBuildReport:
    def test_none_condition_episodes_counted_with_progress(self):
        episodes = [
            InterventionEpisode("ep0001", 45_000, [], resumed_at=60_000),
        ]
        events = [_key(61_000, 7), _key(62_000, 4)]
        data = SessionData(
            "s",
            Condition.NONE,
            T_MS,
            T_MS,
            episodes=episodes,
            events=events,
            ended_at=120_000,
        )
        report = build_report(data)
        assert report.n_episodes == 1
        assert report.interest_retrieval_times == []
        assert report.progress_after_resumption == [11]
