"""Command-line entry point wiring the library for batch use.

Subcommands: convert-validate, synth, preprocess, train, eval, stats,
possim, report.  Every producing subcommand writes a manifest into its
output directory before any compute, so a run is reproducible from its
manifest alone.

Exit codes: 0 success, 2 usage error, 66 missing input file/dir,
70 training diverged (non-finite loss), 1 other structured errors.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

EX_OK = 0
EX_USAGE = 2
EX_NOINPUT = 66
EX_SOFTWARE = 70


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: missing input: {e}", file=sys.stderr)
        return EX_NOINPUT
    except _divergence_types() as e:
        print(f"error: diverged: {e}", file=sys.stderr)
        return EX_SOFTWARE
    except (ValueError, AssertionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _divergence_types():
    from .harness import DivergenceError
    return DivergenceError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgformer",
        description="dual-path transformer pipeline for sEMG gesture recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert-validate", help="validate canonical recordings")
    p.add_argument("--data", required=True, help="EMG1 file or directory of files")
    p.add_argument("--strict-sensors", action="store_true",
                   help="require the 12-sensor layout")
    p.set_defaults(func=cmd_convert_validate)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--reps", type=int, default=6)
    p.add_argument("--duration-s", type=float, default=1.0)
    p.add_argument("--rest-s", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="run the conditioning chain, report windows")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.add_argument("--scope", default="db2", choices=["db2", "b", "c", "d"])
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one model per subject")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="huge",
                   choices=["base", "large", "huge", "tnet", "fnet"])
    p.add_argument("--scope", default="db2", choices=["db2", "b", "c", "d"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--loss-mode", default="three-term",
                   choices=["three-term", "fused-only"])
    p.add_argument("--jobs", type=int, default=1,
                   help="subject-level parallelism")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a run's checkpoints")
    p.add_argument("--run", required=True, help="run directory with manifest.txt")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="directory for metrics (default: the run dir)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="signed-rank comparison between runs")
    p.add_argument("--root", default=".", help="directory holding <variant>/ run dirs")
    p.add_argument("--ref", required=True)
    p.add_argument("--against", required=True, help="comma-separated variant list")
    p.add_argument("--head", default=None, help="head to compare (default: reported)")
    p.add_argument("--out", help="output directory (default: print only)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("possim", help="positional-embedding cosine similarity maps")
    p.add_argument("--run", required=True)
    p.add_argument("--subject", type=int, default=None,
                   help="checkpoint to inspect (default: first found)")
    p.add_argument("--path", choices=["temporal", "featural", "both"], default="both")
    p.add_argument("--out", help="output directory (default: the run dir)")
    p.set_defaults(func=cmd_possim)

    p = sub.add_parser("report", help="aggregate table across runs")
    p.add_argument("--runs", required=True, help="comma-separated run directories")
    p.add_argument("--ref", default=None, help="reference variant for markers")
    p.add_argument("--out", help="output directory (default: print only)")
    p.set_defaults(func=cmd_report)
    return parser


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", dest="window_ms", type=int, default=200,
                   choices=[200, 150, 100])
    p.add_argument("--step-ms", type=int, default=10)
    p.add_argument("--cutoff-hz", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=255.0)
    p.add_argument("--zero-phase", action="store_true")


def _manifest_from_args(args) -> "RunManifest":
    from .harness import RunManifest
    return RunManifest(
        variant=getattr(args, "variant", "base"),
        window_ms=args.window_ms,
        scope=args.scope,
        seed=getattr(args, "seed", 0),
        epochs=getattr(args, "epochs", 0),
        batch_size=getattr(args, "batch_size", 512),
        lr=getattr(args, "lr", 1e-4),
        weight_decay=getattr(args, "weight_decay", 1e-3),
        loss_mode=getattr(args, "loss_mode", "three-term"),
        cutoff_hz=args.cutoff_hz,
        mu=args.mu,
        step_ms=args.step_ms,
        zero_phase=args.zero_phase,
        data=str(args.data),
        out=str(getattr(args, "out", "")),
    )


def _load_sessions(data):
    from .dataset import load_canonical

    path = Path(data)
    if path.is_file():
        return [load_canonical(path)]
    if not path.is_dir():
        raise FileNotFoundError(path)
    files = sorted(path.glob("*.emg1"))
    if not files:
        raise FileNotFoundError(f"no .emg1 files under {path}")
    return [load_canonical(f) for f in files]


def cmd_convert_validate(args) -> int:
    from .dataset import load_canonical

    path = Path(args.data)
    files = [path] if path.is_file() else sorted(path.glob("*.emg1"))
    if not files:
        raise FileNotFoundError(f"no .emg1 files under {path}")
    for f in files:
        session = load_canonical(f)
        session.validate(require_db2_sensors=args.strict_sensors)
        sidecar = f.with_suffix(f.suffix + ".sha256")
        side_note = ""
        if sidecar.exists():
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            recorded = sidecar.read_text().split()[0].strip()
            if digest != recorded:
                raise ValueError(f"{f}: sha256 mismatch against sidecar")
            side_note = ", sha256 ok"
        moves = int((session.stimulus > 0).sum())
        print(f"{f.name}: subject {session.subject} exercise {session.exercise} "
              f"{session.signal.shape[0]} samples x {session.signal.shape[1]} sensors, "
              f"{moves} movement samples{side_note}")
    print(f"validated {len(files)} file(s)")
    return EX_OK


def cmd_synth(args) -> int:
    from .dataset import save_canonical, synth_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(
        "command=synth\n"
        + "".join(f"{k}={v}\n" for k, v in (
            ("seed", args.seed), ("subjects", args.subjects), ("classes", args.classes),
            ("reps", args.reps), ("duration_s", args.duration_s), ("rest_s", args.rest_s))))
    sessions = synth_dataset(seed=args.seed, subjects=args.subjects,
                             classes=args.classes, reps=args.reps,
                             duration_s=args.duration_s, rest_s=args.rest_s)
    for s in sessions:
        name = f"s{s.subject:02d}_{s.exercise}.emg1"
        save_canonical(s, out / name)
        print(f"wrote {out / name}")
    return EX_OK


def cmd_preprocess(args) -> int:
    from .dataset import SplitPlan, audit_split_isolation, make_split

    sessions = _load_sessions(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_from_args(args)
    manifest.save(out / "manifest.txt")
    plan = SplitPlan(scope=args.scope)
    lines = ["subject,exercise,train_windows,test_windows"]
    for session in sessions:
        if session.exercise not in {"db2": "BCD", "b": "B", "c": "C", "d": "D"}[args.scope]:
            continue
        train, test = make_split([session], plan, args.window_ms,
                                 manifest.pipeline_config())
        audit_split_isolation(train, test)
        lines.append(f"{session.subject},{session.exercise},{len(train)},{len(test)}")
        print(lines[-1])
    (out / "windows.csv").write_text("\n".join(lines) + "\n")
    return EX_OK


def cmd_train(args) -> int:
    from .harness import run_training

    sessions = _load_sessions(args.data)
    manifest = _manifest_from_args(args)
    report = run_training(sessions, manifest, out_dir=args.out, jobs=args.jobs)
    head = report.reported_head()
    mean, std = report.mean_std(head)
    print(f"{args.variant}/{args.window_ms}ms scope={args.scope}: "
          f"{head} accuracy {mean:.2f} +- {std:.2f} over {len(report.subjects)} subject(s)")
    print(f"run directory: {args.out}")
    return EX_OK


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .dataset import SplitPlan, make_split
    from .harness import MetricsReport, RunManifest, SubjectMetrics, evaluate
    from .model import params_from_arrays

    run = Path(args.run)
    manifest = RunManifest.load(run / "manifest.txt")
    sessions = _load_sessions(args.data)
    plan = SplitPlan(scope=manifest.scope)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)

    by_subject = {}
    for s in sessions:
        by_subject.setdefault(s.subject, []).append(s)
    subjects = []
    for subject, subj_sessions in sorted(by_subject.items()):
        ckpt = run / f"subject_{subject:02d}.thgr"
        if not ckpt.exists():
            print(f"note: no checkpoint for subject {subject}, skipping")
            continue
        params = params_from_arrays(manifest.model_config(), load_checkpoint(ckpt))
        _, test = make_split(subj_sessions, plan, manifest.window_ms,
                             manifest.pipeline_config())
        subjects.append(evaluate(params, test, subject=subject, scope=manifest.scope))
    if not subjects:
        raise ValueError("no (checkpoint, data) pairs to evaluate")
    report = MetricsReport(variant=manifest.variant, window_ms=manifest.window_ms,
                           scope=manifest.scope, subjects=subjects)
    (out / "metrics.csv").write_text(report.to_csv())
    for s in subjects:
        print(f"subject {s.subject}: " + ", ".join(
            f"{h}={a:.2f}" for h, a in s.accuracies.items()))
    print(f"wrote {out / 'metrics.csv'}")
    return EX_OK


def _report_for_variant(root: Path, variant: str):
    from .harness import MetricsReport

    csv_path = root / variant / "metrics.csv"
    if not csv_path.exists():
        raise FileNotFoundError(csv_path)
    window = 0
    manifest_path = root / variant / "manifest.txt"
    scope = ""
    if manifest_path.exists():
        from .harness import RunManifest
        m = RunManifest.load(manifest_path)
        window, scope = m.window_ms, m.scope
    return MetricsReport.from_csv(csv_path.read_text(), variant=variant,
                                  window_ms=window, scope=scope)


def cmd_stats(args) -> int:
    from .harness import wilcoxon_signed_rank

    root = Path(args.root)
    ref = _report_for_variant(root, args.ref)
    head = args.head or ref.reported_head()
    lines = [f"reference: {args.ref} ({head} head)",
             "variant,W,p,marker"]
    for variant in args.against.split(","):
        variant = variant.strip()
        other = _report_for_variant(root, variant)
        other_head = args.head or other.reported_head()
        a = ref.accuracy_vector(head)
        b = other.accuracy_vector(other_head)
        if len(a) != len(b):
            raise ValueError(f"{variant}: subject counts differ ({len(a)} vs {len(b)})")
        w, p, marker = wilcoxon_signed_rank(a, b)
        lines.append(f"{variant},{w:g},{p:.6g},{marker}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.txt").write_text(
            f"command=stats\nroot={root}\nref={args.ref}\nagainst={args.against}\n"
            f"head={head}\n")
        (out / "markers.csv").write_text(table)
        print(f"wrote {out / 'markers.csv'}")
    return EX_OK


def cmd_possim(args) -> int:
    from .checkpoint import load_checkpoint
    from .harness import position_similarity, write_pgm

    run = Path(args.run)
    checkpoints = sorted(run.glob("subject_*.thgr"))
    if not checkpoints:
        raise FileNotFoundError(f"no checkpoints under {run}")
    if args.subject is not None:
        wanted = run / f"subject_{args.subject:02d}.thgr"
        if not wanted.exists():
            raise FileNotFoundError(wanted)
        ckpt = wanted
    else:
        ckpt = checkpoints[0]
    arrays = load_checkpoint(ckpt)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    paths = ["temporal", "featural"] if args.path == "both" else [args.path]
    for kind in paths:
        key = f"{kind}.embed.pos"
        if key not in arrays:
            print(f"note: {ckpt.name} has no {kind} path, skipping")
            continue
        sim = position_similarity(arrays[key])
        np.savetxt(out / f"possim_{kind}.csv", sim, delimiter=",", fmt="%.8f")
        write_pgm(sim, out / f"possim_{kind}.pgm")
        print(f"wrote {out / f'possim_{kind}.csv'} and .pgm "
              f"({sim.shape[0]}x{sim.shape[1]}, from {ckpt.name})")
    return EX_OK


def cmd_report(args) -> int:
    from .harness import MetricsReport, RunManifest, aggregate

    reports = []
    for run_dir in args.runs.split(","):
        run = Path(run_dir.strip())
        manifest = RunManifest.load(run / "manifest.txt")
        csv_path = run / "metrics.csv"
        if not csv_path.exists():
            raise FileNotFoundError(csv_path)
        reports.append(MetricsReport.from_csv(
            csv_path.read_text(), variant=manifest.variant,
            window_ms=manifest.window_ms, scope=manifest.scope))
    text = aggregate(reports, reference=args.ref)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.txt").write_text(
            f"command=report\nruns={args.runs}\nref={args.ref}\n")
        (out / "report.md").write_text("# Aggregate report\n\n" + text)
        print(f"wrote {out / 'report.md'}")
    return EX_OK


if __name__ == "__main__":
    sys.exit(main())
