"""Shipping feature streams as EMB1 files.

Any external extractor can export frozen embeddings in this little-endian
format (header: magic, version, dim, tasks, step, count; then one record per
example) and the benchmark will consume them exactly like synthetic data.
"""

import os
import tempfile

from arcbench import SyntheticSpec, generate_synthetic, load_embeddings, streams_equal, write_embeddings

spec = SyntheticSpec(num_tasks=3, step=4, dim=16, train_per_class=20,
                     test_per_class=10, seed=9)
stream = generate_synthetic(spec)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "features.emb1")
    write_embeddings(stream, path)
    examples = sum(len(d) for d in stream.train) + sum(len(d) for d in stream.test)
    print(f"wrote {examples} examples, {os.path.getsize(path)} bytes "
          f"(26-byte header + {examples} x (7 + 4*{spec.dim}) bytes)")

    loaded = load_embeddings(path)
    print("round trip bit-exact:", streams_equal(stream, loaded))
    print("layout from header:", loaded.layout)

print("\nthe same file drives the command line, e.g.:")
print("  arcbench run --data.source embeddings --data.path features.emb1")
