"""Cross-cutting behaviors: restart recovery, session isolation, the
non-blocking generation path, mail transport, and oracle insensitivity to
bookkeeping records in the log."""

from __future__ import annotations

import json
import time

import pytest

from stallcue import (
    Condition,
    EventKind,
    MockBackend,
    SessionConfig,
    SessionService,
    VirtualClock,
    WallClock,
    replay_report,
)
from stallcue.dispatcher import AwayEmail, SmtpMailSink
from stallcue.service import load_reports
from stallcue.sim import run_suite

from conftest import ev
from oracles import scan_log_metrics


class TestRestartRecovery:
    def test_new_service_instance_replays_identical_reports(self, tmp_path):
        data_dir = tmp_path / "survivor"
        live = run_suite(5, seed=77, data_dir=data_dir, mock_seed=7)
        # a fresh instance over the same directory sees the same history
        SessionService(data_dir, clock=VirtualClock(), backend=MockBackend(seed=7))
        recovered = load_reports(data_dir)
        assert [r.to_dict() for r in recovered] == [r.to_dict() for r in live]

    def test_unfinished_sessions_are_skipped(self, make_service):
        svc = make_service()
        done = svc.create_session()
        svc.advance(1_000)
        svc.end_session(done)
        svc.create_session()  # never ended
        recovered = load_reports(svc.data_dir)
        assert [r.session_id for r in recovered] == [done]


class TestSessionIsolation:
    def test_interleaved_sessions_keep_independent_thresholds(self, make_service):
        svc = make_service()
        fast = svc.create_session(SessionConfig(idle_threshold_t=5))
        slow = svc.create_session(SessionConfig(idle_threshold_t=60))
        seen: dict[str, list[dict]] = {fast: [], slow: []}
        svc.subscribe(fast, seen[fast].append)
        svc.subscribe(slow, seen[slow].append)
        svc.advance(30_000)
        fast_notifs = [m["at"] for m in seen[fast] if m["type"] == "notification"]
        slow_notifs = [m["at"] for m in seen[slow] if m["type"] == "notification"]
        assert fast_notifs == [5_000, 10_000, 15_000, 20_000, 25_000, 30_000]
        assert slow_notifs == []

    def test_sessions_created_mid_run_use_relative_time(self, make_service):
        svc = make_service()
        first = svc.create_session(SessionConfig(idle_threshold_t=5))
        svc.advance(20_000)
        second = svc.create_session(SessionConfig(idle_threshold_t=5))
        seen: list[dict] = []
        svc.subscribe(second, seen.append)
        svc.advance(5_000)
        notifs = [m["at"] for m in seen if m["type"] == "notification"]
        assert notifs == [5_000]  # session-relative, not engine-absolute
        assert first in svc.open_session_ids()


class TestBackgroundGeneration:
    def test_slow_backend_does_not_block_ticks_and_reanchors_cadence(self, tmp_path):
        class SlowBackend:
            def __init__(self):
                self.calls = 0

            def generate(self, prompt, timeout=None):
                self.calls += 1
                time.sleep(0.25)
                return "Latent continuation. More text."

        svc = SessionService(
            tmp_path / "bg",
            clock=WallClock(),
            backend=SlowBackend(),
            background_generation=True,
        )
        sid = svc.create_session(SessionConfig(idle_threshold_t=0.2))
        seen: list[dict] = []
        svc.subscribe(sid, seen.append)
        deadline = time.time() + 5.0
        while time.time() < deadline:
            svc.tick()
            notifs = [m for m in seen if m["type"] == "notification"]
            if notifs:
                break
            time.sleep(0.02)
        assert notifs, "notification never arrived"
        runtime = svc._sessions[sid]
        episode = runtime.dispatcher.episodes[0]
        # the notification is anchored on payload completion, after the backend delay
        assert notifs[0]["at"] >= episode.detected_at + 200
        assert notifs[0]["headline"] == "Latent continuation."
        svc.shutdown()

    def test_resumption_during_flight_discards_late_notification(self, tmp_path):
        import threading

        release = threading.Event()

        class GatedBackend:
            def generate(self, prompt, timeout=None):
                release.wait(timeout=5)
                return "Too late."

        svc = SessionService(
            tmp_path / "gate",
            clock=WallClock(),
            backend=GatedBackend(),
            background_generation=True,
        )
        sid = svc.create_session(SessionConfig(idle_threshold_t=0.2))
        seen: list[dict] = []
        svc.subscribe(sid, seen.append)
        deadline = time.time() + 5.0
        while time.time() < deadline:
            svc.tick()
            if svc._sessions[sid].dispatcher.episodes:
                break
            time.sleep(0.02)
        assert svc._sessions[sid].dispatcher.episodes
        # worker comes back while generation is still in flight
        svc.ingest_event(sid, ev(sid, svc.clock.now_ms, EventKind.CLICK))
        release.set()
        time.sleep(0.3)
        assert [m for m in seen if m["type"] == "notification"] == []
        episode = svc._sessions[sid].dispatcher.episodes[0]
        assert episode.resumed_at is not None
        assert episode.notifications == []
        svc.shutdown()


class TestSmtpSink:
    def test_message_flows_through_smtp_client(self):
        sent = []

        class FakeSmtp:
            def __init__(self, host, port, timeout=None):
                sent.append(("connect", host, port))

            def __enter__(self):
                return self

            def __exit__(self, *exc):
                return False

            def starttls(self):
                sent.append(("starttls",))

            def login(self, user, password):
                sent.append(("login", user))

            def send_message(self, msg):
                sent.append(("send", msg["To"], msg["Subject"]))

        sink = SmtpMailSink(
            "mail.example", 587, username="u", password="p", starttls=True,
            smtp_factory=FakeSmtp,
        )
        sink.deliver(
            AwayEmail(
                recipient="w@x.org",
                headline="Come back",
                body="The draft continues.",
                continuation_ref="g1",
                queued_at=300_000,
                session_id="s1",
            )
        )
        assert sent == [
            ("connect", "mail.example", 587),
            ("starttls",),
            ("login", "u"),
            ("send", "w@x.org", "Come back"),
        ]


class TestOracleInsensitivity:
    def test_irt_unchanged_by_extra_bookkeeping_records(self, make_service):
        svc = make_service()
        sid = svc.create_session(SessionConfig(condition=Condition.PROPOSED))
        svc.advance(50_000)
        svc.ingest_event(sid, ev(sid, 50_000, EventKind.CLICK))
        svc.advance(1_000)
        svc.end_session(sid)
        log_path = svc.sessions_dir / f"{sid}.jsonl"
        base = scan_log_metrics(log_path.read_text())

        lines = log_path.read_text().splitlines()
        noisy = []
        for line in lines:
            noisy.append(line)
            obj = json.loads(line)
            if obj.get("signal_kind") == "repeat_prompt":
                noisy.append(json.dumps({"at": obj["at"], "signal_kind": "repeat_prompt"}))
            if obj.get("record") == "notification":
                noisy.append(
                    json.dumps({"record": "document_update", "at": obj["at"], "doc_kind": "text", "length": 1})
                )
        padded_path = log_path.with_suffix(".padded.jsonl")
        padded_path.write_text("\n".join(noisy) + "\n")
        padded = scan_log_metrics(padded_path.read_text())
        assert padded["interest_retrieval_times"] == base["interest_retrieval_times"]
        assert replay_report(padded_path).interest_retrieval_times == base[
            "interest_retrieval_times"
        ]


class TestEpisodePromptArithmetic:
    def test_prompt_count_is_one_plus_consumed_repeats(self, make_service):
        svc = make_service()
        sid = svc.create_session(SessionConfig(condition=Condition.PROPOSED))
        svc.advance(200_000)
        svc.ingest_event(sid, ev(sid, 200_000, EventKind.CLICK))
        runtime = svc._sessions[sid]
        episode = runtime.dispatcher.episodes[0]
        log = (svc.sessions_dir / f"{sid}.jsonl").read_text()
        repeats = sum(1 for l in log.splitlines() if '"repeat_prompt"' in l)
        assert len(episode.in_page_notifications()) == 1 + repeats


class TestFuzzCli:
    def test_fuzz_command_writes_csv_and_aggregate(self, tmp_path, capsys):
        from stallcue.sim import main

        csv_path = tmp_path / "suite.csv"
        agg_path = tmp_path / "agg.json"
        main(
            [
                "fuzz",
                "--n",
                "5",
                "--seed",
                "3",
                "--report",
                str(csv_path),
                "--aggregate",
                str(agg_path),
                "--data-dir",
                str(tmp_path / "fuzz-data"),
            ]
        )
        assert csv_path.exists()
        agg = json.loads(agg_path.read_text())
        assert set(agg) <= {"proposed", "control", "none"}
        assert "ran 5 scenarios" in capsys.readouterr().out
