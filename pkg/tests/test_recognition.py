import math

import numpy as np
import pytest
from gatewatch.errors import DimensionMismatch, MalformedFrame, NotConfigured
from gatewatch.frames import FaceObservation, Frame
from gatewatch.model import (
    BoundingBox,
    Embedding,
    Gallery,
    GalleryEntry,
    GateRole,
    PoseKind,
    build_gallery,
    normalize,
)
from gatewatch.recognition import (
    EMPTY_GALLERY_SIMILARITY,
    GalleryStore,
    MatcherConfig,
    Recognized,
    RemoteBackend,
    Unknown,
    create_backend,
    detect_faces,
    match_face,
    recognize_frame,
)
from tests.oracles import best_match_oracle

BOX = BoundingBox(10, 10, 80, 120)


def obs(values, **kwargs):
    return FaceObservation(bbox=BOX, embedding=Embedding(tuple(float(v) for v in values)), **kwargs)


def frame(observations, camera="cam-entry", gate=GateRole.ENTRY, seq=0, ts=1000):
    return Frame(camera_id=camera, gate=gate, seq=seq, capture_ts=ts, observations=tuple(observations))


def gallery_2d():
    return build_gallery(2, [
        GalleryEntry("p1", "One", ((PoseKind.FRONT, Embedding((1.0, 0.0))),), 0),
        GalleryEntry("p2", "Two", ((PoseKind.FRONT, Embedding((0.0, 1.0))),), 0),
    ])


def test_detect_empty_frame():
    assert detect_faces(frame([])) == []


def test_detect_preserves_order_and_header():
    f = frame([obs([1, 0]), obs([0, 1]), obs([0.6, 0.8])], camera="cam-x", seq=7, ts=4242)
    detections = detect_faces(f)
    assert len(detections) == 3
    assert [d.observation for d in detections] == list(f.observations)
    assert all(d.camera_id == "cam-x" and d.frame_seq == 7 and d.capture_ts == 4242 for d in detections)


def test_detect_missing_embedding_is_malformed():
    bad = FaceObservation(bbox=BOX, embedding=None)
    with pytest.raises(MalformedFrame):
        detect_faces(frame([obs([1, 0]), bad]))


def test_match_exact_pose():
    g = gallery_2d()
    d = detect_faces(frame([obs([1, 0])]))[0]
    result = match_face(d, g, MatcherConfig(threshold=0.75))
    assert isinstance(result, Recognized)
    assert result.person_id == "p1"
    assert result.similarity == pytest.approx(1.0, abs=1e-9)


def test_match_hand_computed():
    g = gallery_2d()
    d = detect_faces(frame([obs([0.8, 0.6])]))[0]
    result = match_face(d, g, MatcherConfig(threshold=0.75))
    assert isinstance(result, Recognized)
    assert result.person_id == "p1"
    assert result.similarity == pytest.approx(0.8, abs=1e-12)


def test_match_empty_gallery_sentinel():
    d = detect_faces(frame([obs([1, 0])]))[0]
    result = match_face(d, Gallery(dimension=2, entries={}), MatcherConfig())
    assert isinstance(result, Unknown)
    assert result.best_similarity == EMPTY_GALLERY_SIMILARITY == -1.0
    assert result.best_person is None


def test_match_below_threshold_reports_best():
    g = gallery_2d()
    d = detect_faces(frame([obs(normalize([1, 1]).values)]))[0]
    result = match_face(d, g, MatcherConfig(threshold=0.75))
    assert isinstance(result, Unknown)
    assert result.best_person == "p1"  # tie at cos 45 deg; lexicographic
    assert result.best_similarity == pytest.approx(math.sqrt(0.5), abs=1e-9)


def test_match_dimension_mismatch():
    g = gallery_2d()
    d = detect_faces(frame([obs([1, 0, 0])]))[0]
    with pytest.raises(DimensionMismatch):
        match_face(d, g, MatcherConfig())


def test_recognize_frame_fig4_shape():
    # three enrolled exact poses plus one orthogonal stranger in one frame
    g = build_gallery(4, [
        GalleryEntry("p1", "One", ((PoseKind.FRONT, Embedding((1.0, 0.0, 0.0, 0.0))),), 0),
        GalleryEntry("p2", "Two", ((PoseKind.FRONT, Embedding((0.0, 1.0, 0.0, 0.0))),), 0),
        GalleryEntry("p3", "Three", ((PoseKind.FRONT, Embedding((0.0, 0.0, 1.0, 0.0))),), 0),
    ])
    f = frame([
        obs([1, 0, 0, 0]),
        obs([0, 1, 0, 0]),
        obs([0, 0, 1, 0]),
        obs([0, 0, 0, 1]),
    ])
    rows, unknowns = recognize_frame(f, g, MatcherConfig(threshold=0.75))
    assert len(rows) == 3
    assert len(unknowns) == 1
    assert {r.person_id for r in rows} == {"p1", "p2", "p3"}
    assert rows[0].ts == f.capture_ts
    assert rows[0].gate is GateRole.ENTRY


def test_recognize_frame_empty():
    assert recognize_frame(frame([]), gallery_2d(), MatcherConfig()) == ([], [])


def test_recognize_frame_known_similarity():
    g = build_gallery(3, [
        GalleryEntry("p1", "One", ((PoseKind.FRONT, Embedding((1.0, 0.0, 0.0))),), 0),
    ])
    e = (0.9, math.sqrt(1 - 0.81), 0.0)
    rows, unknowns = recognize_frame(frame([obs(e)]), g, MatcherConfig(threshold=0.75))
    assert unknowns == []
    assert rows[0].similarity == pytest.approx(0.9, abs=1e-12)
    assert rows[0].display_name == "One"


def test_max_over_poses_aggregation():
    g = build_gallery(2, [
        GalleryEntry("p1", "One", (
            (PoseKind.FRONT, Embedding((1.0, 0.0))),
            (PoseKind.SIDE, Embedding((0.0, 1.0))),
        ), 0),
    ])
    d = detect_faces(frame([obs([0, 1])]))[0]
    result = match_face(d, g, MatcherConfig(threshold=0.75))
    assert isinstance(result, Recognized)
    assert result.similarity == pytest.approx(1.0, abs=1e-9)


def test_tie_break_lexicographic():
    shared = Embedding((1.0, 0.0))
    g = build_gallery(2, [
        GalleryEntry("pB", "B", ((PoseKind.FRONT, shared),), 0),
        GalleryEntry("pA", "A", ((PoseKind.FRONT, shared),), 0),
    ])
    d = detect_faces(frame([obs([1, 0])]))[0]
    result = match_face(d, g, MatcherConfig(threshold=0.75))
    assert isinstance(result, Recognized)
    assert result.person_id == "pA"


def test_remote_backend_not_configured():
    with pytest.raises(NotConfigured):
        RemoteBackend(gallery_2d())
    with pytest.raises(NotConfigured):
        create_backend("remote", gallery_2d())
    with pytest.raises(NotConfigured):
        create_backend("nope", gallery_2d())


def test_gallery_store_swap_visible():
    store = GalleryStore(gallery_2d(), MatcherConfig(threshold=0.75))
    d = detect_faces(frame([obs(normalize([1, 1]).values)]))[0]
    assert isinstance(store.snapshot().match(d), Unknown)
    store.add_entry(GalleryEntry("p3", "Three", ((PoseKind.FRONT, normalize([1, 1])),), 0))
    result = store.snapshot().match(d)
    assert isinstance(result, Recognized)
    assert result.person_id == "p3"


# -- property suites -----------------------------------------------------------


def random_gallery(rng, n_people, dim):
    entries = []
    for i in range(n_people):
        poses = []
        for kind in list(PoseKind)[: rng.integers(1, 4)]:
            v = rng.standard_normal(dim)
            poses.append((kind, normalize(v)))
        entries.append(GalleryEntry(f"p{i:03d}", f"P{i}", tuple(poses), 0))
    return build_gallery(dim, entries)


def test_matcher_agrees_with_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        dim = int(rng.integers(2, 12))
        g = random_gallery(rng, int(rng.integers(0, 6)), dim)
        e = normalize(rng.standard_normal(dim))
        d = detect_faces(frame([FaceObservation(bbox=BOX, embedding=e)]))[0]
        got = match_face(d, g, MatcherConfig(threshold=0.75))
        pid, score, hit = best_match_oracle(e, g, 0.75)
        if pid is None:
            assert isinstance(got, Unknown) and got.best_person is None
            continue
        if hit:
            assert isinstance(got, Recognized)
            assert got.person_id == pid
            assert got.similarity == pytest.approx(score, abs=1e-9)
        else:
            assert isinstance(got, Unknown)
            assert got.best_person == pid
            assert got.best_similarity == pytest.approx(score, abs=1e-9)


def test_determinism_repeated_calls():
    rng = np.random.default_rng(3)
    g = random_gallery(rng, 5, 8)
    f = frame([FaceObservation(bbox=BOX, embedding=normalize(rng.standard_normal(8))) for _ in range(4)])
    first = recognize_frame(f, g, MatcherConfig(threshold=0.6))
    for _ in range(5):
        assert recognize_frame(f, g, MatcherConfig(threshold=0.6)) == first


def test_threshold_monotonicity_quick():
    rng = np.random.default_rng(11)
    g = random_gallery(rng, 6, 8)
    for _ in range(100):
        f = frame([FaceObservation(bbox=BOX, embedding=normalize(rng.standard_normal(8)))])
        t1, t2 = sorted(rng.uniform(0.05, 0.99, size=2))
        low_rows, _ = recognize_frame(f, g, MatcherConfig(threshold=float(t1)))
        high_rows, _ = recognize_frame(f, g, MatcherConfig(threshold=float(t2)))
        assert {r.person_id for r in high_rows} <= {r.person_id for r in low_rows}


def test_conservation_partition():
    rng = np.random.default_rng(13)
    g = random_gallery(rng, 4, 6)
    for n in range(8):
        f = frame([FaceObservation(bbox=BOX, embedding=normalize(rng.standard_normal(6))) for _ in range(n)])
        rows, unknowns = recognize_frame(f, g, MatcherConfig(threshold=0.8))
        assert len(rows) + len(unknowns) == n


class _Poison:
    def _boom(self, *a, **k):
        raise AssertionError("truth_label must never be read by matching")

    __eq__ = __ne__ = __hash__ = __str__ = __repr__ = __bool__ = _boom


def test_truth_label_never_read():
    g = gallery_2d()
    poisoned = FaceObservation(bbox=BOX, embedding=Embedding((1.0, 0.0)), truth_label=_Poison())
    f = frame([poisoned])
    rows, unknowns = recognize_frame(f, g, MatcherConfig(threshold=0.75))
    assert len(rows) == 1 and unknowns == []
