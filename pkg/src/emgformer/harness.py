"""Per-subject training and evaluation, plus the statistical analyses.

Every subject gets an independent model: the repetition split is computed
per subject, the split-isolation hash audit re-runs inside each training
job, and accuracies are aggregated over subjects as mean with population
standard deviation.  Paired per-subject accuracy vectors are compared with
a signed-rank test (exact enumeration up to n = 25, normal approximation
with continuity correction beyond).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .dataset import SCOPES, EXERCISE_CLASSES, audit_split_isolation
from .model import (
    ModelConfig,
    ModelParams,
    forward,
    init_params,
    loss as model_loss,
    stack_segments,
)
from .optim import Adam
from .preprocess import PipelineConfig, Segment
from .tensor import no_grad

__all__ = [
    "RunManifest",
    "DivergenceError",
    "EpochStats",
    "SubjectMetrics",
    "MetricsReport",
    "train_subject",
    "evaluate",
    "wilcoxon_signed_rank",
    "position_similarity",
    "aggregate",
    "write_pgm",
    "HEAD_NAMES",
]

HEAD_NAMES = ("fused", "temporal", "featural")

EXACT_LIMIT = 25  # enumerate the signed-rank distribution up to this n

MARKER_BANDS = (  # (upper bound on p, marker); checked in order
    (0.0001, "****"),
    (0.001, "***"),
    (0.01, "**"),
    (0.05, "*"),
    (1.0, "ns"),
)


class DivergenceError(FloatingPointError):
    """Training loss became non-finite."""


@dataclass
class RunManifest:
    """Everything that determines a run, serializable as key=value text."""

    variant: str = "base"
    window_ms: int = 200
    scope: str = "db2"
    seed: int = 0
    epochs: int = 100
    batch_size: int = 512
    lr: float = 1e-4
    weight_decay: float = 1e-3
    loss_mode: str = "three-term"
    cutoff_hz: float = 1.0
    mu: float = 255.0
    step_ms: int = 10
    zero_phase: bool = False
    data: str = ""
    out: str = ""

    def model_config(self) -> ModelConfig:
        from .dataset import scope_class_count
        return ModelConfig.from_variant(self.variant, self.window_ms,
                                        scope_class_count(self.scope))

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(cutoff_hz=self.cutoff_hz, mu=self.mu,
                              window_ms=self.window_ms, step_ms=self.step_ms,
                              zero_phase=self.zero_phase)

    def to_text(self) -> str:
        lines = []
        for key, value in vars(self).items():
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunManifest":
        manifest = cls()
        casts = {k: type(v) for k, v in vars(manifest).items()}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in casts:
                raise ValueError(f"manifest line {lineno}: unknown key {key!r}")
            kind = casts[key]
            if kind is bool:
                setattr(manifest, key, value.lower() in ("1", "true", "yes"))
            else:
                setattr(manifest, key, kind(value))
        return manifest

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_text(Path(path).read_text())


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float  # training accuracy of the reported head, percent


def train_subject(train_segments: Sequence[Segment], test_segments: Sequence[Segment],
                  manifest: RunManifest, subject: int,
                  ) -> Tuple[ModelParams, List[EpochStats]]:
    """Seeded mini-batch training of one subject's model.

    The test segments take no part in training; they are passed in so the
    split-isolation audit can re-run inside the job.  Returns the final
    parameters and the per-epoch loss/accuracy history.
    """
    if not train_segments:
        raise ValueError(f"subject {subject}: empty training split")
    audit_split_isolation(train_segments, test_segments)

    config = manifest.model_config()
    params = init_params(config, seed=_mix_seed(manifest.seed, subject))
    opt = Adam(params.named(), lr=manifest.lr, weight_decay=manifest.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, manifest.seed, subject]))

    x_all, y_all = stack_segments(train_segments)
    n = len(train_segments)
    history: List[EpochStats] = []
    for epoch in range(manifest.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        hits = 0
        for start in range(0, n, manifest.batch_size):
            batch_idx = order[start:start + manifest.batch_size]
            output = forward(x_all[batch_idx], params)
            bundle = model_loss(output, y_all[batch_idx], mode=manifest.loss_mode)
            value = bundle.value
            if not math.isfinite(value):
                raise DivergenceError(
                    f"subject {subject}: non-finite loss at epoch {epoch}, "
                    f"batch {start // manifest.batch_size}")
            opt.zero_grad()
            bundle.total.backward()
            opt.step()
            epoch_loss += value * len(batch_idx)
            hits += int((output.primary().data.argmax(axis=1) == y_all[batch_idx]).sum())
        history.append(EpochStats(epoch=epoch, loss=epoch_loss / n,
                                  accuracy=100.0 * hits / n))
    return params, history


def _mix_seed(seed: int, subject: int) -> int:
    return int(np.random.SeedSequence([seed, subject]).generate_state(1)[0])


@dataclass
class SubjectMetrics:
    """Evaluation of one subject's model on its test split."""

    subject: int
    accuracies: Dict[str, float]            # head -> percent
    confusion: np.ndarray                   # K x K, rows = true class
    n_windows: int
    per_exercise: Dict[str, float] = field(default_factory=dict)


def evaluate(params: ModelParams, segments: Sequence[Segment], subject: int = 0,
             scope: Optional[str] = None, batch_size: int = 512) -> SubjectMetrics:
    """Top-1 accuracy of every available head plus the reported head's
    confusion matrix, from one shared forward pass per batch."""
    k = params.config.n_classes
    if not segments:
        return SubjectMetrics(subject, {}, np.zeros((k, k), dtype=np.int64), 0)
    x_all, y_all = stack_segments(segments)
    hits: Dict[str, int] = {}
    confusion = np.zeros((k, k), dtype=np.int64)
    with no_grad():
        for start in range(0, len(segments), batch_size):
            x = x_all[start:start + batch_size]
            y = y_all[start:start + batch_size]
            output = forward(x, params)
            heads = output.available()
            for name, logits in heads.items():
                pred = logits.data.argmax(axis=1)
                hits[name] = hits.get(name, 0) + int((pred == y).sum())
            primary = output.primary().data.argmax(axis=1)
            np.add.at(confusion, (y, primary), 1)
    n = len(segments)
    accuracies = {name: 100.0 * h / n for name, h in hits.items()}
    per_exercise = _per_exercise_breakdown(confusion, scope) if scope else {}
    return SubjectMetrics(subject=subject, accuracies=accuracies, confusion=confusion,
                          n_windows=n, per_exercise=per_exercise)


def _per_exercise_breakdown(confusion: np.ndarray, scope: str) -> Dict[str, float]:
    out = {}
    for exercise, offset in SCOPES[scope].items():
        k = EXERCISE_CLASSES[exercise]
        block = confusion[offset:offset + k]
        total = block.sum()
        if total:
            correct = np.trace(confusion[offset:offset + k, offset:offset + k])
            out[exercise] = 100.0 * correct / total
    return out


# -- statistics ---------------------------------------------------------------


def marker_for(p: float) -> str:
    for bound, marker in MARKER_BANDS:
        if p <= bound:
            return marker
    return "ns"


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float, str]:
    """Paired signed-rank test: returns (W, two-sided p, significance marker).

    Zero differences are dropped and tied absolute differences share averaged
    ranks.  W is min(W+, W-).  The p-value enumerates the exact sign-flip
    distribution up to n = 25 and falls back to the normal approximation with
    continuity correction beyond that.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in length: {a.shape} vs {b.shape}")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return 0.0, 1.0, "ns"
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = float(ranks.sum())
    w = min(w_plus, total - w_plus)

    if n <= EXACT_LIMIT:
        p = _exact_two_sided(ranks, w_plus)
    else:
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
        z = (w - mu + 0.5) / math.sqrt(sigma2)
        p = min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))
    return w, p, marker_for(p)


def _exact_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    # Doubling makes averaged (x.5) ranks integral, so the distribution of
    # 2 W+ over all sign assignments is an exact integer convolution.
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    top = int(doubled.sum())
    counts = np.zeros(top + 1, dtype=np.float64)
    counts[0] = 1.0
    upto = 0
    for r in doubled:
        prior = counts[0:upto + 1].copy()  # the slices overlap when r <= upto
        counts[r:upto + r + 1] += prior
        upto += r
    denom = counts.sum()
    target = int(np.rint(2.0 * w_plus))
    p_le = counts[:target + 1].sum() / denom
    p_ge = counts[target:].sum() / denom
    return min(1.0, 2.0 * min(p_le, p_ge))


def position_similarity(pos) -> np.ndarray:
    """Cosine similarity between every pair of positional-embedding rows."""
    table = np.asarray(pos.data if hasattr(pos, "data") else pos, dtype=np.float64)
    norms = np.linalg.norm(table, axis=1)
    zero = norms == 0.0
    if zero.any():
        warnings.warn(f"zero-norm positional row(s) {np.nonzero(zero)[0].tolist()}; "
                      "their similarities are reported as 0")
    safe = np.where(zero, 1.0, norms)
    unit = table / safe[:, None]
    sim = unit @ unit.T
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    good = ~zero
    sim[good, good] = 1.0
    return sim


# -- aggregation --------------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-subject accuracies for one run plus their aggregate."""

    variant: str
    window_ms: int
    scope: str
    subjects: List[SubjectMetrics]

    def accuracy_vector(self, head: str) -> np.ndarray:
        return np.array([s.accuracies[head] for s in self.subjects
                         if head in s.accuracies])

    def heads(self) -> List[str]:
        seen = []
        for s in self.subjects:
            for h in s.accuracies:
                if h not in seen:
                    seen.append(h)
        return seen

    def mean_std(self, head: str) -> Tuple[float, float]:
        v = self.accuracy_vector(head)
        # population STD over subjects, by convention
        return float(v.mean()), float(v.std())

    def reported_head(self) -> str:
        return "fused" if "fused" in self.heads() else self.heads()[0]

    def to_csv(self) -> str:
        lines = ["subject,head,accuracy"]
        for s in self.subjects:
            for head, acc in s.accuracies.items():
                lines.append(f"{s.subject},{head},{acc:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, variant: str = "", window_ms: int = 0,
                 scope: str = "") -> "MetricsReport":
        rows: Dict[int, Dict[str, float]] = {}
        lines = [ln for ln in text.splitlines() if ln.strip()]
        for line in lines[1:]:
            subject, head, acc = line.split(",")
            rows.setdefault(int(subject), {})[head] = float(acc)
        subjects = [SubjectMetrics(subject=s, accuracies=heads,
                                   confusion=np.zeros((0, 0), dtype=np.int64), n_windows=0)
                    for s, heads in sorted(rows.items())]
        return cls(variant=variant, window_ms=window_ms, scope=scope, subjects=subjects)


def aggregate(reports: Sequence[MetricsReport], reference: Optional[str] = None) -> str:
    """Render a markdown summary table with significance markers.

    One row per (variant, window): mean +- population STD per head, the
    per-exercise breakdown when present, and, when `reference` names one of
    the variants, the signed-rank marker of reference vs. each other row on
    the reported head's per-subject accuracies.
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    ref_report = None
    if reference is not None:
        matches = [r for r in reports if r.variant == reference]
        if not matches:
            raise ValueError(f"reference variant {reference!r} not among reports")
        ref_report = matches[0]

    all_heads = [h for h in HEAD_NAMES if any(h in r.heads() for r in reports)]
    lines = ["| model | window | " + " | ".join(f"{h} acc" for h in all_heads)
             + " | exercises | vs reference |",
             "|---|---|" + "---|" * (len(all_heads) + 2)]
    for r in reports:
        cells = [r.variant, f"{r.window_ms} ms"]
        for head in all_heads:
            if head in r.heads():
                m, s = r.mean_std(head)
                cells.append(f"{m:.2f} +- {s:.2f}")
            else:
                cells.append("-")
        if r.subjects and r.subjects[0].per_exercise:
            parts = {}
            for s in r.subjects:
                for ex, acc in s.per_exercise.items():
                    parts.setdefault(ex, []).append(acc)
            cells.append(", ".join(f"{ex}: {np.mean(v):.2f}" for ex, v in sorted(parts.items())))
        else:
            cells.append("-")
        if ref_report is None or r is ref_report:
            cells.append("-")
        else:
            va = ref_report.accuracy_vector(ref_report.reported_head())
            vb = r.accuracy_vector(r.reported_head())
            if len(va) == len(vb) and len(va) > 0:
                w, p, marker = wilcoxon_signed_rank(va, vb)
                cells.append(f"{marker} (W={w:g}, p={p:.4g})")
            else:
                cells.append("n/a")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_pgm(matrix: np.ndarray, path, lo: float = -1.0, hi: float = 1.0) -> None:
    """Write a matrix as a binary portable graymap, mapping [lo, hi] -> 0..255."""
    m = np.asarray(matrix, dtype=np.float64)
    scaled = np.clip((m - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    with open(Path(path), "wb") as f:
        f.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


# -- run orchestration ----------------------------------------------------------


def _train_worker(payload):
    """One subject end to end; module-level so process pools can pickle it."""
    from .checkpoint import save_checkpoint
    from .dataset import SplitPlan, make_split

    subject, sessions, manifest, out_dir = payload
    plan = SplitPlan(scope=manifest.scope)
    train_segs, test_segs = make_split(sessions, plan, manifest.window_ms,
                                       manifest.pipeline_config())
    params, history = train_subject(train_segs, test_segs, manifest, subject)
    metrics = evaluate(params, test_segs, subject=subject, scope=manifest.scope)
    if out_dir is not None:
        save_checkpoint(Path(out_dir) / f"subject_{subject:02d}.thgr", params.named())
    return subject, metrics, [(e.epoch, e.loss, e.accuracy) for e in history]


def run_training(sessions, manifest: RunManifest, out_dir=None, jobs: int = 1,
                 ) -> MetricsReport:
    """Train one model per subject and assemble the run directory.

    Writes manifest.txt before any compute, then per-subject checkpoints,
    metrics.csv, history.csv and report.md.  Subjects are independent, so
    `jobs` > 1 trains them in parallel without changing any result.
    """
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest.save(out / "manifest.txt")

    by_subject: Dict[int, list] = {}
    for s in sessions:
        by_subject.setdefault(s.subject, []).append(s)
    if not by_subject:
        raise ValueError("no sessions to train on")
    payloads = [(subject, subj_sessions, manifest, str(out) if out else None)
                for subject, subj_sessions in sorted(by_subject.items())]

    if jobs > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(min(jobs, len(payloads))) as pool:
            results = pool.map(_train_worker, payloads)
    else:
        results = [_train_worker(p) for p in payloads]

    results.sort(key=lambda r: r[0])
    report = MetricsReport(variant=manifest.variant, window_ms=manifest.window_ms,
                           scope=manifest.scope,
                           subjects=[metrics for _, metrics, _ in results])
    if out is not None:
        (out / "metrics.csv").write_text(report.to_csv())
        history_lines = ["subject,epoch,loss,train_accuracy"]
        for subject, _, history in results:
            for epoch, lo, acc in history:
                history_lines.append(f"{subject},{epoch},{lo:.6f},{acc:.4f}")
        (out / "history.csv").write_text("\n".join(history_lines) + "\n")
        (out / "report.md").write_text(
            f"# Run report: {manifest.variant} / {manifest.window_ms} ms / "
            f"scope {manifest.scope}\n\n" + aggregate([report]))
    return report
