"""Recording container, repetition-based splitting, and a synthetic generator.

One ``RecordingSession`` holds a subject's raw multichannel recording for one
exercise together with per-sample movement and repetition labels.  Sessions
round-trip through a small binary container ("EMG1") so converted archives
and synthetic data share one on-disk shape.

The split protocol is fixed by repetition id: repetitions 1, 3, 4, 6 train
and 2, 5 test, per movement.  Class ids are remapped contiguously from 0
according to the selected scope (all three exercises or a single one).
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .preprocess import (
    N_SENSORS,
    PipelineConfig,
    Segment,
    filter_bank,
    fit_mu_law,
    mu_law_normalize,
    segment_windows,
)

__all__ = [
    "RecordingSession",
    "SplitPlan",
    "FormatError",
    "CorruptionError",
    "EXERCISE_CLASSES",
    "SCOPES",
    "scope_class_count",
    "save_canonical",
    "load_canonical",
    "make_split",
    "synth_dataset",
    "audit_split_isolation",
    "segment_digest",
]

MAGIC = b"EMG1"
VERSION = 1
FS_HZ = 2000

EXERCISE_CLASSES = {"B": 17, "C": 23, "D": 9}

# scope -> (exercises included, per-exercise class-id offset)
SCOPES: Dict[str, Dict[str, int]] = {
    "db2": {"B": 0, "C": 17, "D": 40},
    "b": {"B": 0},
    "c": {"C": 0},
    "d": {"D": 0},
}


def scope_class_count(scope: str) -> int:
    return sum(EXERCISE_CLASSES[e] for e in SCOPES[scope])


class FormatError(ValueError):
    """File is not an EMG1 container (bad magic or version)."""


class CorruptionError(ValueError):
    """File parses as EMG1 but its payload is inconsistent or truncated."""


@dataclass
class RecordingSession:
    """One subject/exercise raw recording with per-sample labels."""

    subject: int
    exercise: str              # "B", "C" or "D"
    fs_hz: int
    signal: np.ndarray         # time x sensors, float32
    stimulus: np.ndarray       # per-sample movement id, 0 = rest
    repetition: np.ndarray     # per-sample repetition id, 0..6

    def validate(self, require_db2_sensors: bool = False) -> None:
        t = self.signal.shape[0]
        if self.stimulus.shape != (t,) or self.repetition.shape != (t,):
            raise CorruptionError(
                f"label lengths {self.stimulus.shape}/{self.repetition.shape} "
                f"do not match {t} signal rows")
        if self.exercise not in EXERCISE_CLASSES:
            raise FormatError(f"unknown exercise {self.exercise!r}")
        hi = EXERCISE_CLASSES[self.exercise]
        if self.stimulus.min(initial=0) < 0 or self.stimulus.max(initial=0) > hi:
            raise CorruptionError(
                f"movement ids outside 0..{hi} for exercise {self.exercise}")
        if self.repetition.min(initial=0) < 0 or self.repetition.max(initial=0) > 6:
            raise CorruptionError("repetition ids outside 0..6")
        if require_db2_sensors and self.signal.shape[1] != N_SENSORS:
            raise CorruptionError(
                f"expected {N_SENSORS} sensors, file has {self.signal.shape[1]}")


def save_canonical(session: RecordingSession, path) -> None:
    signal = np.ascontiguousarray(session.signal, dtype="<f4")
    t, s = signal.shape
    with open(Path(path), "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIBIIQ", VERSION, session.subject,
                            ord(session.exercise), session.fs_hz, s, t))
        f.write(signal.tobytes())
        f.write(np.ascontiguousarray(session.stimulus, dtype="<u2").tobytes())
        f.write(np.ascontiguousarray(session.repetition, dtype="<u2").tobytes())


def load_canonical(path) -> RecordingSession:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    header = struct.calcsize("<IIBIIQ")
    if len(blob) < 4 + header:
        raise CorruptionError(f"{path}: truncated header at byte {len(blob)}")
    version, subject, exercise_byte, fs, s, t = struct.unpack_from("<IIBIIQ", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 4 + header
    need = off + 4 * t * s + 2 * t + 2 * t
    if len(blob) != need:
        raise CorruptionError(f"{path}: expected {need} bytes, got {len(blob)} "
                              f"(payload starts at byte {off})")
    signal = np.frombuffer(blob, dtype="<f4", count=t * s, offset=off).reshape(t, s)
    off += 4 * t * s
    stimulus = np.frombuffer(blob, dtype="<u2", count=t, offset=off).astype(np.int64)
    off += 2 * t
    repetition = np.frombuffer(blob, dtype="<u2", count=t, offset=off).astype(np.int64)
    session = RecordingSession(subject=subject, exercise=chr(exercise_byte), fs_hz=fs,
                               signal=signal.copy(), stimulus=stimulus,
                               repetition=repetition)
    session.validate()
    return session


@dataclass(frozen=True)
class SplitPlan:
    """Repetition-disjoint train/test protocol plus the class scope."""

    train_reps: frozenset = frozenset({1, 3, 4, 6})
    test_reps: frozenset = frozenset({2, 5})
    scope: str = "db2"

    def __post_init__(self):
        if self.train_reps & self.test_reps:
            raise ValueError("train and test repetition sets overlap")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}; choose from {sorted(SCOPES)}")

    @property
    def n_classes(self) -> int:
        return scope_class_count(self.scope)


def _preprocess_session(session: RecordingSession, plan: SplitPlan,
                        config: PipelineConfig) -> np.ndarray:
    filtered = filter_bank(session.signal, cutoff_hz=config.cutoff_hz,
                           sample_rate_hz=session.fs_hz, zero_phase=config.zero_phase)
    train_mask = np.isin(session.repetition, list(plan.train_reps)) & (session.stimulus > 0)
    params = fit_mu_law(filtered, train_mask, mu=config.mu)
    return mu_law_normalize(filtered, params)


def make_split(sessions: Iterable[RecordingSession], plan: SplitPlan,
               window_ms: int, config: PipelineConfig | None = None,
               ) -> Tuple[List[Segment], List[Segment]]:
    """Run the conditioning chain and partition windows strictly by repetition.

    Sessions outside the scope's exercises are skipped.  Class ids come out
    contiguous from 0 over the scope.  Windows whose repetition id is in
    neither set (possible with a custom plan) are dropped.
    """
    config = config or PipelineConfig()
    offsets = SCOPES[plan.scope]
    train: List[Segment] = []
    test: List[Segment] = []
    for session in sessions:
        if session.exercise not in offsets:
            continue
        seen_reps = set(np.unique(session.repetition[session.stimulus > 0]).tolist())
        missing = (plan.train_reps | plan.test_reps) - seen_reps
        if missing:
            warnings.warn(f"subject {session.subject} exercise {session.exercise}: "
                          f"missing repetition(s) {sorted(missing)}")
        normalized = _preprocess_session(session, plan, config)
        segs = segment_windows(normalized, session.stimulus, session.repetition,
                               window_ms=window_ms, step_ms=config.step_ms,
                               fs_hz=session.fs_hz, subject=session.subject)
        offset = offsets[session.exercise]
        for seg in segs:
            seg.label = seg.label - 1 + offset
            if seg.repetition in plan.train_reps:
                train.append(seg)
            elif seg.repetition in plan.test_reps:
                test.append(seg)
    return train, test


def segment_digest(seg: Segment) -> bytes:
    return hashlib.sha1(seg.key_bytes()).digest()


def audit_split_isolation(train: Sequence[Segment], test: Sequence[Segment]) -> None:
    """Fail loudly if any window appears on both sides of the split."""
    train_hashes = {segment_digest(s) for s in train}
    overlap = sum(segment_digest(s) in train_hashes for s in test)
    if overlap:
        raise AssertionError(f"{overlap} segment(s) shared between train and test")


def _exercise_for(classes: int) -> str:
    for ex in ("D", "B", "C"):  # smallest range that fits
        if classes <= EXERCISE_CLASSES[ex]:
            return ex
    raise ValueError(f"at most {EXERCISE_CLASSES['C']} synthetic classes, got {classes}")


def synth_dataset(seed: int, subjects: int, classes: int, reps: int = 6,
                  duration_s: float = 1.0, rest_s: float = 0.5,
                  fs_hz: int = FS_HZ) -> List[RecordingSession]:
    """Generate separable synthetic recordings, deterministic per seed.

    Each class activates its own block of sensors (disjoint blocks for up to
    12 classes).  Active sensors carry slow band-limited noise with a
    class-and-sensor-specific amplitude so both the raw mean-absolute level
    and the low-passed waveform separate the classes; every sensor also sees
    a small broadband noise floor.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    exercise = _exercise_for(classes)
    run = int(round(duration_s * fs_hz))
    rest = int(round(rest_s * fs_hz))
    block = max(1, N_SENSORS // classes)

    sessions = []
    for subj in range(1, subjects + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, subj]))
        chunks_sig, chunks_stim, chunks_rep = [], [], []
        for rep in range(1, reps + 1):
            for cls in range(1, classes + 1):
                active = [(block * (cls - 1) + j) % N_SENSORS for j in range(block)]
                amp = np.zeros(N_SENSORS)
                for j, sensor in enumerate(active):
                    amp[sensor] = 0.8 + 0.15 * j + 0.05 * subj
                sig = _slow_noise(rng, run, N_SENSORS) * amp
                sig += 0.02 * rng.standard_normal((run, N_SENSORS))
                chunks_sig.append(sig)
                chunks_stim.append(np.full(run, cls, dtype=np.int64))
                chunks_rep.append(np.full(run, rep, dtype=np.int64))
                chunks_sig.append(0.02 * rng.standard_normal((rest, N_SENSORS)))
                chunks_stim.append(np.zeros(rest, dtype=np.int64))
                chunks_rep.append(np.zeros(rest, dtype=np.int64))
        sessions.append(RecordingSession(
            subject=subj, exercise=exercise, fs_hz=fs_hz,
            signal=np.concatenate(chunks_sig).astype(np.float32),
            stimulus=np.concatenate(chunks_stim),
            repetition=np.concatenate(chunks_rep)))
    return sessions


def _slow_noise(rng: np.random.Generator, n: int, sensors: int) -> np.ndarray:
    """Band-limited (sub ~4 Hz) unit-RMS noise riding on a positive offset."""
    from scipy.ndimage import uniform_filter1d

    kernel = 501
    pad = kernel
    white = rng.standard_normal((n + 2 * pad, sensors))
    smooth = uniform_filter1d(uniform_filter1d(white, kernel, axis=0), kernel, axis=0)
    smooth = smooth[pad:pad + n]
    rms = np.sqrt((smooth ** 2).mean(axis=0))
    smooth /= np.maximum(rms, 1e-12)
    return 0.6 + 0.4 * smooth
