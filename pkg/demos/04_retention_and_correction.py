"""The full test-time pipeline against its own baseline.

One benchmark run produces paired accuracy matrices: plain argmax and the
online pipeline (single-gradient-step retention on confidently recognized
past samples, task-score correction of suspected misclassifications). The
gap in average accuracy and forgetting is the pipeline's contribution.

This one runs the full default benchmark (10 tasks x 10 classes), so it
takes ~30 s.
"""

from arcbench import ArcConfig, SyntheticSpec, TrainConfig, generate_synthetic, run_stream

spec = SyntheticSpec(seed=3)
stream = generate_synthetic(spec)

result = run_stream(stream, TrainConfig(), ArcConfig(), seed=3)


def show(name, r):
    print(f"{name} accuracy matrix (rows: after stage t, cols: task):")
    for t in range(1, r.num_tasks + 1):
        cells = " ".join(f"{v:.2f}" for v in r.row(t))
        print(f"  t={t}: {cells}")


show("baseline", result.r_without_arc)
print()
show("with test-time pipeline", result.r_with_arc)

base, arc = result.metrics_without_arc, result.metrics_with_arc
print(f"\naverage accuracy: {base.average_accuracy:.4f} -> {arc.average_accuracy:.4f} "
      f"({arc.average_accuracy - base.average_accuracy:+.4f})")
print(f"forgetting:       {base.forgetting:.4f} -> {arc.forgetting:.4f} "
      f"({arc.forgetting - base.forgetting:+.4f})")
updates = [trace.retention_updates for trace in result.arc_traces]
print(f"retention updates per stage: {updates}")

variants = {
    "retention only ": ArcConfig(correction_enabled=False),
    "correction only": ArcConfig(retention_enabled=False),
    "last stage only": ArcConfig(arc_last=True),
}
print("\ncomponent breakdown (average accuracy):")
for name, cfg in variants.items():
    res = run_stream(stream, TrainConfig(), cfg, seed=3)
    delta = res.metrics_with_arc.average_accuracy - base.average_accuracy
    print(f"  {name}: {res.metrics_with_arc.average_accuracy:.4f} ({delta:+.4f})")
