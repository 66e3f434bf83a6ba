import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatewatch.errors import CorruptRecord, StorageFailure, UnsortedInput
from gatewatch.jsonl import JsonlWriter
from gatewatch.ledger import (
    Appearance,
    AppearanceTracker,
    AttendanceStatus,
    AttendanceTable,
    ChangeKind,
    LedgerService,
    PruneWindow,
    load_log,
    prune,
    row_to_json,
    snapshot_attendance,
    update_attendance,
)
from gatewatch.model import GateRole
from gatewatch.recognition import RecognitionRow
from tests.oracles import prune_oracle

W = PruneWindow(10_000)


def row(ts, person="p1", camera="cam-entry", gate=GateRole.ENTRY, sim=0.9, seq=0):
    return RecognitionRow(
        ts=ts, camera_id=camera, gate=gate, person_id=person,
        display_name=f"Person {person}", similarity=sim, frame_seq=seq,
    )


def appearance_keys(appearances):
    return sorted((a.person_id, a.camera_id, a.first_ts, a.last_ts, a.row_count) for a in appearances)


def oracle_keys(rows, window_ms):
    return sorted((p, c, f, l, n) for p, c, f, l, n in prune_oracle(rows, window_ms))


# -- prune: spec examples, each checked against the independent oracle ---------


def test_prune_single_row():
    result = prune([row(0)], W)
    assert appearance_keys(result) == oracle_keys([row(0)], 10_000)
    assert result == [Appearance("p1", "Person p1", "cam-entry", GateRole.ENTRY, 0, 0, 1, 0.9)]


def test_prune_chain_exceeding_window_span():
    rows = [row(t) for t in (0, 3000, 6000, 9000, 12000)]
    result = prune(rows, W)
    assert appearance_keys(result) == oracle_keys(rows, 10_000)
    assert len(result) == 1
    assert (result[0].first_ts, result[0].last_ts, result[0].row_count) == (0, 12000, 5)


def test_prune_gap_splits():
    rows = [row(0), row(11_000)]
    result = prune(rows, W)
    assert appearance_keys(result) == oracle_keys(rows, 10_000)
    assert len(result) == 2


def test_prune_boundary_gap_exactly_window():
    rows = [row(0), row(10_000)]
    assert len(prune(rows, W)) == 1
    rows = [row(0), row(10_001)]
    assert len(prune(rows, W)) == 2


def test_prune_interleaved_keys_do_not_merge():
    rows = [row(0, "A"), row(1000, "B"), row(5000, "A")]
    result = prune(rows, W)
    assert appearance_keys(result) == oracle_keys(rows, 10_000)
    by_person = {a.person_id: a for a in result}
    assert (by_person["A"].first_ts, by_person["A"].last_ts) == (0, 5000)
    assert (by_person["B"].first_ts, by_person["B"].last_ts) == (1000, 1000)


def test_prune_same_person_two_cameras_stay_separate():
    rows = [row(0, camera="cam-entry"), row(2000, camera="cam-exit", gate=GateRole.EXIT)]
    result = prune(rows, W)
    assert len(result) == 2


def test_prune_requires_sorted_input():
    with pytest.raises(UnsortedInput):
        prune([row(5000), row(0)], W)


def test_prune_output_sorted_by_first_ts_then_person():
    rows = [row(0, "B"), row(0, "A"), row(50_000, "A")]
    result = prune(rows, W)
    assert [(a.first_ts, a.person_id) for a in result] == [(0, "A"), (0, "B"), (50_000, "A")]


def test_prune_tracks_max_similarity_and_counts():
    rows = [row(0, sim=0.8), row(100, sim=0.95), row(200, sim=0.85)]
    (a,) = prune(rows, W)
    assert a.max_similarity == 0.95
    assert a.row_count == 3


def _random_rows(rng, n_rows, n_keys, t_max=60_000):
    keys = [(f"p{k}", f"cam-{k % 2}") for k in range(n_keys)]
    rows = []
    for i in range(n_rows):
        person, camera = keys[rng.randrange(n_keys)]
        rows.append(row(rng.randrange(t_max + 1), person, camera, sim=round(rng.random(), 3), seq=i))
    rows.sort(key=lambda r: r.ts)
    return rows


def test_prune_matches_oracle_randomized():
    rng = random.Random(2024)
    for _ in range(300):
        rows = _random_rows(rng, rng.randrange(0, 51), rng.randrange(1, 6))
        window = rng.choice([1, 500, 3000, 10_000, 60_000])
        assert appearance_keys(prune(rows, PruneWindow(window))) == oracle_keys(rows, window)


@given(
    st.lists(st.tuples(st.integers(0, 60_000), st.sampled_from("ABC")), max_size=40),
    st.integers(1, 30_000),
)
@settings(max_examples=200, deadline=None)
def test_prune_matches_oracle_property(pairs, window):
    rows = sorted((row(t, p) for t, p in pairs), key=lambda r: r.ts)
    assert appearance_keys(prune(rows, PruneWindow(window))) == oracle_keys(rows, window)


@given(
    st.lists(st.tuples(st.integers(0, 60_000), st.sampled_from("AB")), max_size=30),
    st.integers(1, 20_000),
)
@settings(max_examples=100, deadline=None)
def test_prune_count_conservation_and_window_monotonicity(pairs, window):
    rows = sorted((row(t, p) for t, p in pairs), key=lambda r: r.ts)
    small = prune(rows, PruneWindow(window))
    assert sum(a.row_count for a in small) == len(rows)
    large = prune(rows, PruneWindow(window * 2))
    assert len(large) <= len(small)


def test_prune_idempotent_on_projection():
    rows = [row(t) for t in (0, 3000, 6000)] + [row(t) for t in (30_000, 31_000)]
    first = prune(rows, W)
    # consecutive appearances of the key separated by > window: re-pruning the
    # one-row-per-appearance projection must map one-to-one
    projection = [row(a.first_ts, a.person_id, a.camera_id) for a in first]
    second = prune(projection, W)
    assert [(a.person_id, a.first_ts) for a in second] == [(a.person_id, a.first_ts) for a in first]


def test_tracker_online_matches_batch():
    rng = random.Random(99)
    rows = _random_rows(rng, 40, 3)
    tracker = AppearanceTracker(W)
    online = []
    for r in rows:
        _, closed = tracker.feed(r)
        online.extend(closed)
    online.extend(tracker.flush())
    assert appearance_keys(online) == appearance_keys(prune(rows, W))


def test_tracker_reports_openings():
    tracker = AppearanceTracker(W)
    opened, closed = tracker.feed(row(0))
    assert opened is not None and opened.first_ts == 0 and closed == []
    opened, closed = tracker.feed(row(5000))
    assert opened is None and closed == []
    opened, closed = tracker.feed(row(30_000))
    assert opened is not None and opened.first_ts == 30_000
    assert len(closed) == 1 and closed[0].last_ts == 5000


# -- attendance ----------------------------------------------------------------


def appearance(person="p1", gate=GateRole.ENTRY, first_ts=0, camera=None):
    camera = camera or ("cam-entry" if gate is GateRole.ENTRY else "cam-exit")
    return Appearance(person, f"Person {person}", camera, gate, first_ts, first_ts + 6000, 5, 0.9)


def test_attendance_entry_then_exit():
    table = AttendanceTable()
    created = update_attendance(appearance(first_ts=1000), table)
    assert created.kind is ChangeKind.CREATED
    assert created.record.entry_ts == 1000
    assert created.record.session_index == 1
    assert created.record.status is AttendanceStatus.INSIDE

    exited = update_attendance(appearance(gate=GateRole.EXIT, first_ts=61_000), table)
    assert exited.kind is ChangeKind.EXIT_RECORDED
    assert exited.record.exit_ts == 61_000
    assert exited.record.status is AttendanceStatus.DEPARTED


def test_attendance_reentry_increments_session():
    table = AttendanceTable()
    update_attendance(appearance(first_ts=0), table)
    update_attendance(appearance(gate=GateRole.EXIT, first_ts=10_000), table)
    again = update_attendance(appearance(first_ts=20_000), table)
    assert again.record.session_index == 2


def test_attendance_already_inside_ignored():
    table = AttendanceTable()
    update_attendance(appearance(first_ts=0), table)
    second = update_attendance(appearance(first_ts=3000), table)
    assert second.kind is ChangeKind.IGNORED
    assert second.reason == "AlreadyInside"


def test_attendance_exit_without_session_ignored():
    table = AttendanceTable()
    change = update_attendance(appearance(gate=GateRole.EXIT, first_ts=100), table)
    assert change.kind is ChangeKind.IGNORED
    assert change.reason == "NoOpenSession"


def test_attendance_exit_before_entry_ignored():
    table = AttendanceTable()
    update_attendance(appearance(first_ts=5000), table)
    change = update_attendance(appearance(gate=GateRole.EXIT, first_ts=100), table)
    assert change.kind is ChangeKind.IGNORED
    assert change.reason == "ExitBeforeEntry"


@given(st.lists(st.tuples(st.sampled_from("AB"), st.booleans()), max_size=30))
def test_attendance_state_machine_property(steps):
    # per person: Created (ExitRecorded)? repeating, Ignored interleaved freely;
    # entry/exit timestamps non-decreasing across sessions
    table = AttendanceTable()
    ts = 0
    history = {}
    for person, is_entry in steps:
        ts += 1000
        gate = GateRole.ENTRY if is_entry else GateRole.EXIT
        change = table.update(appearance(person, gate, first_ts=ts))
        history.setdefault(person, []).append(change.kind)
    for person, kinds in history.items():
        meaningful = [k for k in kinds if k is not ChangeKind.IGNORED]
        state = "out"
        for kind in meaningful:
            if kind is ChangeKind.CREATED:
                assert state == "out"
                state = "in"
            else:
                assert state == "in"
                state = "out"
    for records in table._sessions.values():
        stamps = []
        for r in records:
            stamps.append(r.entry_ts)
            if r.exit_ts is not None:
                stamps.append(r.exit_ts)
        assert stamps == sorted(stamps)


# -- persistence ----------------------------------------------------------------


def test_log_round_trip(tmp_path):
    path = tmp_path / "recognitions.jsonl"
    writer = JsonlWriter(path)
    rows = [row(t * 100, seq=t) for t in range(100)]
    for r in rows:
        writer.append(row_to_json(r))
    writer.close()
    assert load_log(path) == rows


def test_log_truncated_tail_tolerated(tmp_path, caplog):
    path = tmp_path / "recognitions.jsonl"
    writer = JsonlWriter(path)
    rows = [row(t * 100, seq=t) for t in range(10)]
    for r in rows:
        writer.append(row_to_json(r))
    writer.close()
    whole = path.read_text()
    path.write_text(whole[: len(whole) - 25])  # tear the final record
    with caplog.at_level("WARNING"):
        reloaded = load_log(path)
    assert reloaded == rows[:9]
    assert any("torn final line" in message for message in caplog.messages)


def test_log_mid_file_corruption_located(tmp_path):
    path = tmp_path / "recognitions.jsonl"
    writer = JsonlWriter(path)
    for r in [row(0), row(100), row(200), row(300)]:
        writer.append(row_to_json(r))
    writer.close()
    lines = path.read_text().splitlines()
    lines[2] = '{"ts": 200, "camera_id": garbage'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptRecord) as err:
        load_log(path)
    assert err.value.line == 3


def test_log_unwritable_path_fails(tmp_path):
    target = tmp_path / "not-a-dir"
    target.write_text("file, not directory")
    with pytest.raises(StorageFailure):
        JsonlWriter(target / "recognitions.jsonl")


def test_attendance_snapshot_round_trip(tmp_path):
    out = tmp_path / "run"
    ledger = LedgerService(out, W)
    for t in (0, 200, 400):
        ledger.submit(row(t))
    ledger.submit(row(60_000, gate=GateRole.EXIT, camera="cam-exit"))
    ledger.close()
    table = snapshot_attendance(out / "attendance.jsonl")
    records = table.records()
    assert len(records) == 1
    assert records[0].entry_ts == 0
    assert records[0].exit_ts == 60_000
    assert records[0].status is AttendanceStatus.DEPARTED


def test_ledger_service_effects_and_files(tmp_path):
    out = tmp_path / "run"
    events = []
    ledger = LedgerService(out, W, emit=lambda kind, payload: events.append(kind))
    eff = ledger.submit(row(0))
    assert eff.position == 0
    assert eff.opened is not None
    assert eff.change.kind is ChangeKind.CREATED
    eff2 = ledger.submit(row(3000))
    assert eff2.position == 1
    assert eff2.opened is None and eff2.change is None
    ledger.close()

    assert events[:3] == ["recognition_row", "appearance_opened", "attendance_changed"]
    saved = [json.loads(line) for line in (out / "appearances.jsonl").read_text().splitlines()]
    assert len(saved) == 1
    assert saved[0]["row_count"] == 2
    assert load_log(out / "recognitions.jsonl") == [row(0), row(3000)]


def test_ledger_service_audits_anomalies(tmp_path):
    out = tmp_path / "run"
    ledger = LedgerService(out, W)
    ledger.submit(row(0, gate=GateRole.EXIT, camera="cam-exit"))
    ledger.close()
    audit = [json.loads(line) for line in (out / "audit.jsonl").read_text().splitlines()]
    assert audit[0]["event"] == "attendance_ignored"
    assert audit[0]["reason"] == "NoOpenSession"
