from __future__ import annotations

import json

import pytest

from stallcue import (
    Condition,
    EventKind,
    MockBackend,
    SessionConfig,
    SessionService,
    VirtualClock,
    replay_report,
)
from stallcue.core import (
    MalformedDocument,
    NonPositiveDuration,
    OutOfOrderEvent,
    UnknownSession,
)
from stallcue.wire import classify_line

from conftest import ev


class TestLifecycle:
    def test_create_returns_distinct_ids_and_opens_logs(self, make_service):
        svc = make_service()
        a = svc.create_session()
        b = svc.create_session()
        assert a != b
        assert (svc.sessions_dir / f"{a}.jsonl").exists()
        assert (svc.sessions_dir / f"{b}.jsonl").exists()

    def test_invalid_config_propagates(self, make_service):
        svc = make_service()
        with pytest.raises(NonPositiveDuration):
            svc.create_session(SessionConfig(idle_threshold_t=0))

    def test_double_end_raises_unknown_session(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.end_session(sid)
        with pytest.raises(UnknownSession):
            svc.end_session(sid)

    def test_end_with_zero_events_reports_total_time_only(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.advance(30_000)
        report = svc.end_session(sid)
        assert report.total_task_time_ms == 30_000
        assert report.n_episodes == 0

    def test_session_end_covers_events_stamped_ahead_of_the_clock(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.advance(1_000)
        svc.ingest_event(sid, ev(sid, 56_000))  # client clock leads the server
        report = svc.end_session(sid)
        assert report.total_task_time_ms == 56_000


class TestIngestion:
    def test_ack_carries_receive_time(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.advance(1_000)
        assert svc.ingest_event(sid, ev(sid, 1_000)) == {"received_at": 1_000}

    def test_unknown_session_rejected(self, make_service):
        svc = make_service()
        with pytest.raises(UnknownSession):
            svc.ingest_event("nope", ev("nope", 0))

    def test_closed_session_rejected(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.end_session(sid)
        with pytest.raises(UnknownSession):
            svc.ingest_event(sid, ev(sid, 10))

    def test_out_of_order_rejected_and_not_logged(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.ingest_event(sid, ev(sid, 1_000))
        with pytest.raises(OutOfOrderEvent):
            svc.ingest_event(sid, ev(sid, 999))
        lines = (svc.sessions_dir / f"{sid}.jsonl").read_text().splitlines()
        event_lines = [json.loads(l) for l in lines if classify_line(json.loads(l)) == "event"]
        assert [e["at"] for e in event_lines] == [1_000]

    def test_every_accepted_event_logged_once_in_order(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        ats = [0, 500, 500, 2_000, 2_000, 9_000]
        for at in ats:
            svc.advance(max(0, at - (svc.clock.now_ms)))
            svc.ingest_event(sid, ev(sid, at))
        lines = (svc.sessions_dir / f"{sid}.jsonl").read_text().splitlines()
        event_ats = [
            json.loads(l)["at"] for l in lines if classify_line(json.loads(l)) == "event"
        ]
        assert event_ats == ats


class TestDocumentUpdates:
    def test_full_text_replace_logs_length_only(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        ack = svc.update_document(sid, {"doc_kind": "text", "text": "hello worker"})
        assert ack == {"length": 12}
        log = (svc.sessions_dir / f"{sid}.jsonl").read_text()
        assert "hello worker" not in log
        update = [json.loads(l) for l in log.splitlines() if "document_update" in l][0]
        assert update["length"] == 12

    def test_slide_patch_appends(self, make_service):
        svc = make_service()
        sid = svc.create_session(doc_kind="slide_deck")
        svc.update_document(
            sid, {"doc_kind": "slide_deck", "slides": [{"title": "One", "body_items": []}]}
        )
        ack = svc.update_document(sid, {"append_slide": {"title": "Two", "body_items": []}})
        assert ack["length"] == 6
        log_lines = (svc.sessions_dir / f"{sid}.jsonl").read_text().splitlines()
        updates = [json.loads(l) for l in log_lines if "document_update" in l]
        assert updates[-1]["slides"] == 2

    def test_kind_mismatch_rejected(self, make_service):
        svc = make_service()
        sid = svc.create_session(doc_kind="text")
        with pytest.raises(MalformedDocument):
            svc.update_document(sid, {"doc_kind": "slide_deck", "slides": []})


class TestThreshold:
    def test_raise_threshold_delays_detection(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        msgs = []
        svc.subscribe(sid, msgs.append)
        svc.advance(10_000)
        svc.ingest_event(sid, ev(sid, 10_000))
        svc.set_threshold(sid, 60)
        svc.advance(46_000)  # a 45 s gap must no longer trigger
        assert [m for m in msgs if m["type"] == "notification"] == []
        svc.advance(14_000)  # 10s + 60s = 70s total
        notifs = [m for m in msgs if m["type"] == "notification"]
        assert [n["at"] for n in notifs] == [70_000]

    def test_lower_threshold_fires_promptly(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        msgs = []
        svc.subscribe(sid, msgs.append)
        svc.advance(30_000)
        svc.set_threshold(sid, 10)
        svc.advance(100)
        notifs = [m for m in msgs if m["type"] == "notification"]
        assert [n["at"] for n in notifs] == [30_100]

    def test_non_positive_rejected(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        with pytest.raises(NonPositiveDuration):
            svc.set_threshold(sid, 0)

    def test_unknown_session_rejected(self, make_service):
        svc = make_service()
        with pytest.raises(UnknownSession):
            svc.set_threshold("ghost", 30)


class TestPrivacy:
    def test_discard_mode_leaves_no_document_bytes_on_disk(self, make_service, tmp_path):
        svc = make_service()
        sid = svc.create_session(SessionConfig(retain_content=False))
        sentinel = "zq1xv9plm2wy" * 5
        svc.update_document(sid, {"doc_kind": "text", "text": f"notes {sentinel} end"})
        svc.advance(50_000)  # generation runs over the content
        svc.end_session(sid)
        for path in svc.data_dir.rglob("*"):
            if path.is_file():
                assert sentinel not in path.read_text(encoding="utf-8")

    def test_retain_mode_persists_document_at_end(self, make_service):
        svc = make_service()
        sid = svc.create_session(SessionConfig(retain_content=True))
        svc.update_document(sid, {"doc_kind": "text", "text": "keep me"})
        svc.end_session(sid)
        doc_path = svc.sessions_dir / f"{sid}.document.json"
        assert json.loads(doc_path.read_text())["text"] == "keep me"


class TestReplay:
    def _scripted_run(self, svc):
        sid = svc.create_session(SessionConfig(condition=Condition.PROPOSED))
        svc.update_document(sid, {"doc_kind": "text", "text": "Chapter one."})
        svc.advance(2_000)
        svc.ingest_event(sid, ev(sid, 2_000, chars=12))
        svc.advance(100_000)  # detection at 47s, repeat at 92s
        svc.ingest_event(sid, ev(sid, 102_000, EventKind.CLICK))
        svc.advance(10_000)
        svc.ingest_event(sid, ev(sid, 112_000, chars=30))
        svc.advance(50_000)
        return sid, svc.end_session(sid)

    def test_replayed_report_equals_live_report(self, make_service):
        svc = make_service()
        sid, live = self._scripted_run(svc)
        replayed = replay_report(svc.sessions_dir / f"{sid}.jsonl")
        assert replayed.to_dict() == live.to_dict()

    def test_replay_covers_away_email_sessions(self, make_service, tmp_path):
        from stallcue.dispatcher import FileMailSink

        svc = make_service(mail_sink=FileMailSink(tmp_path / "mail"))
        sid = svc.create_session(
            SessionConfig(condition=Condition.PROPOSED), recipient="w@x.org"
        )
        svc.ingest_event(sid, ev(sid, 0, EventKind.PAGE_HIDDEN))
        svc.advance(310_000)
        svc.ingest_event(sid, ev(sid, 310_000, EventKind.PAGE_VISIBLE))
        svc.advance(5_000)
        live = svc.end_session(sid)
        replayed = replay_report(svc.sessions_dir / f"{sid}.jsonl")
        assert replayed.to_dict() == live.to_dict()

    def test_reconstructed_episodes_match_dispatcher_records(self, make_service):
        from stallcue.service import read_session_data

        svc = make_service()
        sid = svc.create_session(SessionConfig(condition=Condition.PROPOSED))
        svc.update_document(sid, {"doc_kind": "text", "text": "Once upon a time."})
        svc.advance(95_000)
        svc.ingest_event(sid, ev(sid, 95_000, EventKind.CLICK))
        runtime_episodes = [ep for ep in svc._sessions[sid].dispatcher.episodes]
        svc.advance(1_000)
        svc.end_session(sid)
        data = read_session_data(svc.sessions_dir / f"{sid}.jsonl")
        assert data.episodes == runtime_episodes


class TestDeterminism:
    def _drive(self, svc):
        sid = svc.create_session(SessionConfig(condition=Condition.PROPOSED))
        svc.update_document(sid, {"doc_kind": "text", "text": "Deterministic draft."})
        svc.advance(1_000)
        svc.ingest_event(sid, ev(sid, 1_000, chars=5))
        svc.advance(120_000)
        svc.ingest_event(sid, ev(sid, 121_000, EventKind.CLICK))
        svc.advance(9_000)
        svc.end_session(sid)
        return (svc.sessions_dir / f"{sid}.jsonl").read_bytes()

    def test_identical_runs_produce_identical_logs(self, tmp_path):
        logs = []
        for name in ("a", "b"):
            svc = SessionService(
                tmp_path / name, clock=VirtualClock(), backend=MockBackend(seed=7)
            )
            logs.append(self._drive(svc))
        assert logs[0] == logs[1]


class TestStreamGrace:
    def test_disconnect_synthesizes_page_hidden_after_grace(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.stream_opened(sid)
        svc.advance(5_000)
        svc.stream_closed(sid)
        svc.advance(9_900)
        log = (svc.sessions_dir / f"{sid}.jsonl").read_text()
        assert "page_hidden" not in log
        svc.advance(100)  # grace expires exactly 10 s after the drop
        log_lines = (svc.sessions_dir / f"{sid}.jsonl").read_text().splitlines()
        hidden = [json.loads(l) for l in log_lines if "page_hidden" in l]
        assert [h["at"] for h in hidden] == [15_000]

    def test_reconnect_within_grace_cancels_synthesis(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.stream_closed(sid)
        svc.advance(5_000)
        svc.stream_opened(sid)
        svc.advance(60_000)
        log = (svc.sessions_dir / f"{sid}.jsonl").read_text()
        assert "page_hidden" not in log
        assert "page_visible" not in log

    def test_reconnect_after_synthesis_emits_page_visible(self, make_service):
        svc = make_service()
        sid = svc.create_session()
        svc.stream_closed(sid)
        svc.advance(20_000)
        svc.stream_opened(sid)
        log = (svc.sessions_dir / f"{sid}.jsonl").read_text()
        visible = [json.loads(l) for l in log.splitlines() if "page_visible" in l]
        assert [v["at"] for v in visible] == [20_000]

    def test_away_email_flows_from_disconnect(self, make_service, tmp_path):
        from stallcue.dispatcher import FileMailSink

        svc = make_service(mail_sink=FileMailSink(tmp_path / "mail"))
        sid = svc.create_session(recipient="w@x.org")
        svc.stream_closed(sid)
        # hidden at 10 s (grace), away confirmed 300 s later
        svc.advance(311_000)
        files = list((tmp_path / "mail").iterdir())
        assert len(files) == 1
        assert "X-Queued-At-Ms: 310000" in files[0].read_text()
