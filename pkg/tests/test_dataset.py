import struct

import numpy as np
import pytest

from emgformer.dataset import (
    CorruptionError,
    FormatError,
    RecordingSession,
    SplitPlan,
    audit_split_isolation,
    load_canonical,
    make_split,
    save_canonical,
    scope_class_count,
    synth_dataset,
)
from emgformer.preprocess import PipelineConfig


def small_session(subject=1, exercise="D"):
    rng = np.random.default_rng(11)
    t = 4000
    return RecordingSession(
        subject=subject, exercise=exercise, fs_hz=2000,
        signal=rng.standard_normal((t, 12)).astype(np.float32),
        stimulus=np.repeat([0, 1, 0, 2], t // 4),
        repetition=np.repeat([0, 1, 0, 2], t // 4),
    )


def test_canonical_roundtrip_bit_exact(tmp_path):
    session = small_session()
    path = tmp_path / "s1_D.emg1"
    save_canonical(session, path)
    loaded = load_canonical(path)
    np.testing.assert_array_equal(loaded.signal, session.signal)
    np.testing.assert_array_equal(loaded.stimulus, session.stimulus)
    np.testing.assert_array_equal(loaded.repetition, session.repetition)
    assert (loaded.subject, loaded.exercise, loaded.fs_hz) == (1, "D", 2000)
    # writing the loaded session again reproduces the same bytes
    path2 = tmp_path / "again.emg1"
    save_canonical(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_truncated_file_is_rejected(tmp_path):
    session = small_session()
    path = tmp_path / "s.emg1"
    save_canonical(session, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-7])
    with pytest.raises(CorruptionError, match="byte"):
        load_canonical(path)


def test_bad_magic_and_version(tmp_path):
    path = tmp_path / "bad.emg1"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FormatError, match="magic"):
        load_canonical(path)
    session = small_session()
    save_canonical(session, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="version"):
        load_canonical(path)


def test_hand_authored_fixture_loads_exactly(tmp_path):
    # 3 sensors x 10 samples with hand-written values; bytes assembled
    # independently of save_canonical.
    t, s = 10, 3
    signal = np.arange(30, dtype="<f4").reshape(t, s) / 4.0
    stimulus = np.array([0, 0, 1, 1, 1, 1, 0, 2, 2, 2], dtype="<u2")
    repetition = np.array([0, 0, 1, 1, 1, 1, 0, 2, 2, 2], dtype="<u2")
    blob = (b"EMG1" + struct.pack("<IIBIIQ", 1, 7, ord("D"), 2000, s, t)
            + signal.tobytes() + stimulus.tobytes() + repetition.tobytes())
    path = tmp_path / "fixture.emg1"
    path.write_bytes(blob)
    session = load_canonical(path)
    assert session.subject == 7 and session.exercise == "D"
    assert session.signal.shape == (10, 3)
    assert session.signal[5, 2] == np.float32(17 / 4.0)
    np.testing.assert_array_equal(session.stimulus, stimulus)


def test_label_range_validation(tmp_path):
    session = small_session()
    session.stimulus = session.stimulus.copy()
    session.stimulus[0] = 10  # exercise D allows at most 9
    path = tmp_path / "bad_labels.emg1"
    save_canonical(session, path)
    with pytest.raises(CorruptionError, match="movement ids"):
        load_canonical(path)


def test_split_plan_validation():
    with pytest.raises(ValueError, match="overlap"):
        SplitPlan(train_reps=frozenset({1, 2}), test_reps=frozenset({2, 5}))
    with pytest.raises(ValueError, match="scope"):
        SplitPlan(scope="z")
    assert SplitPlan(scope="db2").n_classes == 49
    assert [scope_class_count(s) for s in ("b", "c", "d")] == [17, 23, 9]


def counting_oracle(session, window, step, reps):
    """Enumerate homogeneous windows per repetition straight off the labels."""
    stim, rep = session.stimulus, session.repetition
    boundaries = np.concatenate(([0], np.nonzero(np.diff(stim))[0] + 1, [len(stim)]))
    count = 0
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if stim[a] > 0 and rep[a] in reps and b - a >= window:
            count += (b - a - window) // step + 1
    return count


def test_make_split_counts_match_counting_oracle():
    sessions = synth_dataset(seed=5, subjects=1, classes=9, reps=6, duration_s=0.5)
    plan = SplitPlan(scope="d")
    train, test = make_split(sessions, plan, window_ms=200)
    w, step = 400, 20
    assert len(train) == counting_oracle(sessions[0], w, step, plan.train_reps)
    assert len(test) == counting_oracle(sessions[0], w, step, plan.test_reps)
    assert len(train) + len(test) == counting_oracle(
        sessions[0], w, step, plan.train_reps | plan.test_reps)


def test_make_split_partition_and_remap():
    sessions = synth_dataset(seed=1, subjects=2, classes=9, reps=6, duration_s=0.4)
    plan = SplitPlan(scope="d")
    train, test = make_split(sessions, plan, window_ms=100)
    labels = {s.label for s in train} | {s.label for s in test}
    assert labels == set(range(9))  # contiguous ids, every class present
    assert {s.repetition for s in train} == {1, 3, 4, 6}
    assert {s.repetition for s in test} == {2, 5}
    assert {s.subject for s in train} == {1, 2}
    audit_split_isolation(train, test)
    # class histograms nonempty per split
    for side in (train, test):
        hist = np.bincount([s.label for s in side], minlength=9)
        assert (hist > 0).all()
    # every emitted window stays inside [-1, 1]
    assert max(np.abs(s.x).max() for s in train) <= 1.0


def test_audit_catches_duplicates():
    sessions = synth_dataset(seed=2, subjects=1, classes=2, reps=6, duration_s=0.3)
    train, test = make_split(sessions, SplitPlan(scope="d"), window_ms=100)
    with pytest.raises(AssertionError, match="shared"):
        audit_split_isolation(train, train[:3] + test)


def test_missing_repetition_warns():
    sessions = synth_dataset(seed=3, subjects=1, classes=2, reps=4, duration_s=0.3)
    with pytest.warns(UserWarning, match="missing repetition"):
        make_split(sessions, SplitPlan(scope="d"), window_ms=100)


def test_scale_depends_on_training_reps_only():
    from emgformer.preprocess import filter_bank, fit_mu_law

    session = synth_dataset(seed=8, subjects=1, classes=2, reps=6, duration_s=0.3)[0]
    filtered = filter_bank(session.signal)
    train_mask = np.isin(session.repetition, [1, 3, 4, 6]) & (session.stimulus > 0)
    test_mask = np.isin(session.repetition, [2, 5])
    full = fit_mu_law(filtered, train_mask)
    excised = fit_mu_law(filtered[~test_mask], train_mask[~test_mask])
    np.testing.assert_array_equal(full.per_channel_scale, excised.per_channel_scale)


def test_synth_deterministic_bytes(tmp_path):
    a = synth_dataset(seed=7, subjects=2, classes=3, reps=2, duration_s=0.3)
    b = synth_dataset(seed=7, subjects=2, classes=3, reps=2, duration_s=0.3)
    pa, pb = tmp_path / "a.emg1", tmp_path / "b.emg1"
    save_canonical(a[1], pa)
    save_canonical(b[1], pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = synth_dataset(seed=8, subjects=2, classes=3, reps=2, duration_s=0.3)
    assert not np.array_equal(a[0].signal, c[0].signal)


def test_synth_tiles_labels_as_requested():
    classes, reps = 4, 3
    session = synth_dataset(seed=4, subjects=1, classes=classes, reps=reps,
                            duration_s=0.25)[0]
    runs = []
    stim = session.stimulus
    boundaries = np.concatenate(([0], np.nonzero(np.diff(stim))[0] + 1, [len(stim)]))
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if stim[a] > 0:
            runs.append((int(session.repetition[a]), int(stim[a])))
    assert runs == [(r, c) for r in range(1, reps + 1) for c in range(1, classes + 1)]


def test_synth_two_disjoint_classes_support_linear_probe():
    session = synth_dataset(seed=9, subjects=1, classes=2, reps=3, duration_s=0.5)[0]
    w = 400
    feats, ys = [], []
    stim = session.stimulus
    boundaries = np.concatenate(([0], np.nonzero(np.diff(stim))[0] + 1, [len(stim)]))
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if stim[a] == 0:
            continue
        for i in range(a, b - w + 1, w):
            feats.append(np.abs(session.signal[i:i + w]).mean(axis=0))
            ys.append(int(stim[a]) - 1)
    x = np.array(feats)
    y = np.array(ys)
    onehot = np.eye(2)[y]
    coef, *_ = np.linalg.lstsq(np.hstack([x, np.ones((len(x), 1))]), onehot, rcond=None)
    pred = (np.hstack([x, np.ones((len(x), 1))]) @ coef).argmax(axis=1)
    assert (pred == y).mean() == 1.0


def test_synth_rejects_degenerate_requests():
    with pytest.raises(ValueError, match="2 classes"):
        synth_dataset(seed=0, subjects=1, classes=1)
