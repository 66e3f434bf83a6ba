import json
import random

import pytest

from gatewatch.errors import AlreadyResolved, DataError, UnknownAlert, UnknownPersonId
from gatewatch.frames import FaceObservation
from gatewatch.jsonl import read_jsonl
from gatewatch.ledger import Appearance, ChangeKind
from gatewatch.model import BoundingBox, GateRole, normalize
from gatewatch.notifier import (
    AlertKind,
    AlertState,
    Dismiss,
    Joined,
    NewAlert,
    Register,
    Validate,
)
from gatewatch.recognition import Detection, Recognized
from tests.conftest import build_stack


def entry_appearance(person="p001", first_ts=0, camera="cam-entry"):
    return Appearance(person, f"Person {person}", camera, GateRole.ENTRY, first_ts, first_ts + 6000, 30, 0.99)


def unknown_detection(values, ts=0, camera="cam-entry", seq=0, dim=32):
    padded = list(values) + [0.0] * (dim - len(values))
    obs = FaceObservation(bbox=BoundingBox(0, 0, 10, 10), embedding=normalize(padded))
    return Detection(observation=obs, frame_seq=seq, camera_id=camera, capture_ts=ts)


@pytest.fixture
def stack(tmp_path, gallery_small):
    s = build_stack(tmp_path / "run", gallery_small)
    yield s
    s.close()


class _Subscriberless:
    def push(self, alert):
        return False


def test_raise_recognized_entry_only(stack):
    alert = stack.notifier.raise_recognized(entry_appearance())
    assert alert is not None
    assert alert.kind is AlertKind.RECOGNIZED_NOTIFY
    assert alert.person_id == "p001"
    exit_app = Appearance("p001", "Person p001", "cam-exit", GateRole.EXIT, 0, 100, 1, 0.9)
    assert stack.notifier.raise_recognized(exit_app) is None


def test_raise_recognized_dedup_on_replay(stack):
    first = stack.notifier.raise_recognized(entry_appearance(first_ts=500))
    second = stack.notifier.raise_recognized(entry_appearance(first_ts=500))
    assert first is not None and second is None
    assert len(stack.notifier.alerts(kind=AlertKind.RECOGNIZED_NOTIFY)) == 1


def test_observe_unknown_first_sighting_raises_alert(stack):
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0]), gate=GateRole.ENTRY, snapshot=b"img")
    assert isinstance(out, NewAlert)
    assert out.alert.kind is AlertKind.UNKNOWN_PERSON
    assert out.alert.embedding is not None
    assert out.alert.snapshot == b"img"


def test_observe_unknown_joins_within_window(stack):
    v = [1, 1, 0, 0]
    first = stack.notifier.observe_unknown(unknown_detection(v, ts=0), gate=GateRole.ENTRY)
    assert isinstance(first, NewAlert)
    second = stack.notifier.observe_unknown(unknown_detection(v, ts=2000), gate=GateRole.ENTRY)
    assert isinstance(second, Joined)
    assert second.member_count == 2
    assert len(stack.notifier.alerts(kind=AlertKind.UNKNOWN_PERSON)) == 1


def test_observe_unknown_window_expiry_new_alert(stack):
    v = [1, 1, 0, 0]
    stack.notifier.observe_unknown(unknown_detection(v, ts=0), gate=GateRole.ENTRY)
    boundary = stack.notifier.observe_unknown(unknown_detection(v, ts=10_000), gate=GateRole.ENTRY)
    assert isinstance(boundary, Joined)  # exactly at the window still chains
    expired = stack.notifier.observe_unknown(unknown_detection(v, ts=21_000), gate=GateRole.ENTRY)
    assert isinstance(expired, NewAlert)
    assert len(stack.notifier.alerts(kind=AlertKind.UNKNOWN_PERSON)) == 2


def test_observe_unknown_different_embedding_new_alert(stack):
    stack.notifier.observe_unknown(unknown_detection([1, 0, 0, 0], ts=0), gate=GateRole.ENTRY)
    out = stack.notifier.observe_unknown(unknown_detection([0, 1, 0, 0], ts=100), gate=GateRole.ENTRY)
    assert isinstance(out, NewAlert)


def test_observe_unknown_per_camera_clusters(stack):
    v = [1, 1, 0, 0]
    stack.notifier.observe_unknown(unknown_detection(v, ts=0, camera="cam-entry"), gate=GateRole.ENTRY)
    out = stack.notifier.observe_unknown(unknown_detection(v, ts=100, camera="cam-exit"), gate=GateRole.EXIT)
    assert isinstance(out, NewAlert)


def test_centroid_running_mean(stack):
    a = stack.notifier.observe_unknown(unknown_detection([1, 0, 0, 0], ts=0), gate=GateRole.ENTRY)
    assert isinstance(a, NewAlert)
    # slightly rotated sighting still joins and drags the centroid
    stack.notifier.observe_unknown(unknown_detection([0.95, 0.05, 0, 0], ts=1000), gate=GateRole.ENTRY)
    cluster = stack.notifier._clusters[0]
    assert cluster.member_count == 2
    assert abs(cluster.centroid.norm() - 1.0) < 1e-9
    assert cluster.centroid.values[1] > 0


def test_deliver_with_subscriber_meets_sla(stack):
    sub = stack.bus.subscribe()
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    stack.notifier.pump()
    alert = stack.notifier.get(out.alert.alert_id)
    assert alert.state is AlertState.DELIVERED
    assert alert.sla_met is True
    assert alert.delivered_ts == alert.created_ts
    sub.close()


def test_deliver_late_subscriber_records_sla_failure(stack):
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    stack.notifier.pump()
    assert stack.notifier.get(out.alert.alert_id).state is AlertState.PENDING

    stack.clock.advance(12_000)
    stack.notifier.pump()  # still nobody listening
    assert stack.notifier.get(out.alert.alert_id).state is AlertState.PENDING
    assert stack.notifier.get(out.alert.alert_id).retry_count >= 1

    sub = stack.bus.subscribe()
    stack.clock.advance(1)
    for _ in range(20):
        stack.notifier.pump()
        if stack.notifier.get(out.alert.alert_id).state is AlertState.DELIVERED:
            break
        stack.clock.advance(1000)
    alert = stack.notifier.get(out.alert.alert_id)
    assert alert.state is AlertState.DELIVERED
    assert alert.sla_met is False
    summary = stack.notifier.sla_summary()
    assert summary["delivered"] == 1
    assert summary["within_budget"] == 0
    sub.close()


def test_pump_respects_backoff(stack):
    stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    assert stack.notifier.pump() == 1  # due immediately, fails (no subscriber)
    assert stack.notifier.pump() == 0  # backed off
    stack.clock.advance(500)
    assert stack.notifier.pump() == 1


def test_resolve_validate_creates_attendance(stack):
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    outcome = stack.notifier.resolve_alert(out.alert.alert_id, Validate(person_id="p002"))
    assert outcome.alert.state is AlertState.VALIDATED
    assert outcome.attendance.kind is ChangeKind.CREATED
    assert outcome.attendance.record.person_id == "p002"
    assert outcome.attendance.record.entry_ts == out.alert.created_ts
    records = stack.ledger.attendance_records()
    assert [r.person_id for r in records] == ["p002"]


def test_resolve_validate_unknown_person(stack):
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    with pytest.raises(UnknownPersonId):
        stack.notifier.resolve_alert(out.alert.alert_id, Validate(person_id="nobody"))
    assert stack.notifier.get(out.alert.alert_id).state is AlertState.PENDING  # atomic: nothing happened
    assert stack.ledger.attendance_records() == []


def test_resolve_register_then_recognize(stack):
    stranger = normalize([1, 1, 1, 0])
    det = unknown_detection([1, 1, 1, 0], ts=0)
    out = stack.notifier.observe_unknown(det, gate=GateRole.ENTRY)
    before = len(stack.store.gallery())
    outcome = stack.notifier.resolve_alert(out.alert.alert_id, Register(display_name="Guest X"))
    assert outcome.alert.state is AlertState.REGISTERED
    assert outcome.registered_person_id is not None
    assert len(stack.store.gallery()) == before + 1

    result = stack.store.snapshot().match(det)
    assert isinstance(result, Recognized)
    assert result.person_id == outcome.registered_person_id
    assert result.similarity == pytest.approx(1.0, abs=1e-9)
    records = stack.ledger.attendance_records()
    assert records[0].person_id == outcome.registered_person_id
    assert records[0].display_name == "Guest X"


def test_resolve_register_requires_name(stack):
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0]), gate=GateRole.ENTRY)
    with pytest.raises(DataError):
        stack.notifier.resolve_alert(out.alert.alert_id, Register(display_name=""))


def test_resolve_dismiss_twice_conflicts(stack):
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0]), gate=GateRole.ENTRY)
    outcome = stack.notifier.resolve_alert(out.alert.alert_id, Dismiss())
    assert outcome.alert.state is AlertState.DISMISSED
    assert outcome.attendance is None
    with pytest.raises(AlreadyResolved):
        stack.notifier.resolve_alert(out.alert.alert_id, Dismiss())


def test_resolve_unknown_alert_id(stack):
    with pytest.raises(UnknownAlert):
        stack.notifier.resolve_alert("alert-999999", Dismiss())


def test_resolve_recognized_notify_rejected(stack):
    alert = stack.notifier.raise_recognized(entry_appearance())
    with pytest.raises(DataError):
        stack.notifier.resolve_alert(alert.alert_id, Dismiss())


def test_resolution_audited_exactly_once(stack, tmp_path):
    out1 = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    out2 = stack.notifier.observe_unknown(unknown_detection([0, 0, 1, 1], ts=0), gate=GateRole.ENTRY)
    stack.notifier.resolve_alert(out1.alert.alert_id, Dismiss())
    stack.notifier.resolve_alert(out2.alert.alert_id, Validate(person_id="p001"))
    stack.ledger.close()
    audit = read_jsonl(tmp_path / "run" / "audit.jsonl")
    resolutions = [a for a in audit if a["event"] == "alert_resolved"]
    assert sorted(r["alert_id"] for r in resolutions) == sorted(
        [out1.alert.alert_id, out2.alert.alert_id]
    )


def test_alert_log_records_lifecycle(stack, tmp_path):
    sub = stack.bus.subscribe()
    out = stack.notifier.observe_unknown(unknown_detection([1, 1, 0, 0], ts=0), gate=GateRole.ENTRY)
    stack.notifier.pump()
    stack.notifier.resolve_alert(out.alert.alert_id, Dismiss())
    stack.notifier.close()
    lines = read_jsonl(tmp_path / "run" / "alerts.jsonl")
    assert [l["type"] for l in lines] == ["raised", "delivered", "resolved"]
    sub.close()


def test_state_machine_only_legal_transitions(stack):
    # Pending -> Delivered -> resolved, and Pending -> resolved; nothing else
    rng = random.Random(5)
    sub = None
    observed = []
    for i in range(60):
        action = rng.randrange(5)
        if action == 0:
            v = [rng.random() for _ in range(4)]
            stack.notifier.observe_unknown(
                unknown_detection(v, ts=stack.clock.now_ms(), seq=i), gate=GateRole.ENTRY
            )
        elif action == 1:
            stack.clock.advance(rng.choice([100, 1000, 11_000]))
            stack.notifier.pump()
        elif action == 2:
            if sub is None:
                sub = stack.bus.subscribe()
            else:
                sub.close()
                sub = None
        else:
            alerts = stack.notifier.alerts(kind=AlertKind.UNKNOWN_PERSON)
            if alerts:
                target = rng.choice(alerts)
                act = rng.choice([Dismiss(), Validate(person_id="p001"), Register(display_name="G")])
                try:
                    stack.notifier.resolve_alert(target.alert_id, act)
                except (AlreadyResolved, UnknownPersonId, DataError):
                    pass
        observed.append({a.alert_id: a.state for a in stack.notifier.alerts()})
    legal = {
        AlertState.PENDING: {AlertState.PENDING, AlertState.DELIVERED, AlertState.VALIDATED,
                             AlertState.REGISTERED, AlertState.DISMISSED},
        AlertState.DELIVERED: {AlertState.DELIVERED, AlertState.VALIDATED,
                               AlertState.REGISTERED, AlertState.DISMISSED},
        AlertState.VALIDATED: {AlertState.VALIDATED},
        AlertState.REGISTERED: {AlertState.REGISTERED},
        AlertState.DISMISSED: {AlertState.DISMISSED},
    }
    for before, after in zip(observed, observed[1:]):
        for alert_id, prev_state in before.items():
            assert after[alert_id] in legal[prev_state]
    if sub is not None:
        sub.close()
