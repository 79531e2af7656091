"""The features still know; only the shared classifier forgot.

For each stage, trains a fresh per-task head on each past task's (frozen)
features and compares it with the single shared head on the same test sets.
A large gap means the representation kept the information and the shared
classifier's bias is what loses it.
"""

from arcbench import SyntheticSpec, TrainConfig, generate_synthetic, linear_probe_experiment

spec = SyntheticSpec(num_tasks=5, step=5, dim=48, train_per_class=60,
                     test_per_class=60, seed=1)
stream = generate_synthetic(spec)

rows = linear_probe_experiment(stream, TrainConfig(), seed=1)

print("stage  task  per-task head  shared head   gap")
for row in rows:
    gap = row.independent_accuracy - row.shared_accuracy
    print(f"{row.stage:5d} {row.task:5d} {row.independent_accuracy:13.3f} "
          f"{row.shared_accuracy:12.3f} {gap:+.3f}")

final = [r for r in rows if r.stage == spec.num_tasks]
mean_gap = sum(r.independent_accuracy - r.shared_accuracy for r in final) / len(final)
print(f"\nmean final-stage gap: {mean_gap:+.3f}")
