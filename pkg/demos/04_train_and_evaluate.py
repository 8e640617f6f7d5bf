"""End-to-end: synthetic recordings -> repetition split -> training -> metrics.

A desk-scale version of the full pipeline.  Two synthetic subjects, five
gestures; each subject gets an independent model on the fixed repetition
split (1/3/4/6 train, 2/5 test).  Takes about a minute on one core.
"""

from emgformer.dataset import SplitPlan, make_split, synth_dataset
from emgformer.harness import RunManifest, evaluate, train_subject

print("== synthesize five separable gestures for two subjects ==")
sessions = synth_dataset(seed=2024, subjects=2, classes=5, reps=6, duration_s=1.0)
print(f"{len(sessions)} sessions, {sessions[0].signal.shape[0]} samples each, "
      f"exercise {sessions[0].exercise}")

manifest = RunManifest(variant="base", window_ms=200, scope="d", seed=7,
                       epochs=8, batch_size=128, lr=1e-3)
plan = SplitPlan(scope=manifest.scope)

for subject in (1, 2):
    subj_sessions = [s for s in sessions if s.subject == subject]
    train_segs, test_segs = make_split(subj_sessions, plan, manifest.window_ms,
                                       manifest.pipeline_config())
    print(f"\nsubject {subject}: {len(train_segs)} train / {len(test_segs)} test windows")
    params, history = train_subject(train_segs, test_segs, manifest, subject)
    for e in history[::3] + history[-1:]:
        print(f"  epoch {e.epoch:2d}: loss {e.loss:.4f}, train acc {e.accuracy:6.2f}%")
    metrics = evaluate(params, test_segs, subject=subject, scope=manifest.scope)
    accs = ", ".join(f"{head} {acc:.2f}%" for head, acc in metrics.accuracies.items())
    print(f"  test: {accs}")
    print(f"  confusion diagonal: {metrics.confusion.diagonal().tolist()}")

print("\nthe same loop at scale: `emgformer train --variant huge --window 200 "
      "--scope db2 --data <dir> --out <run>`")
