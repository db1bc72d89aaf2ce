"""Regenerates the checked-in synthetic binary-classification dataset.

The file mimics the shape of the classic mushrooms benchmark: binary one-hot
features, d=112, 21 active features per row, and near-perfect linear
separability (mushrooms has class-exclusive indicator features such as odor).
Experiment configs point at the checked-in copy. Run from the repository root:

    python3 scripts/generate_data.py
"""

import os

from markosparse.objectives import separable_binary_dataset, serialize_libsvm

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "mushrooms_synth.libsvm")

dataset = separable_binary_dataset(n_rows=2000, d=112, nnz_per_row=21, seed=20240501)
with open(OUT, "w", encoding="utf-8", newline="\n") as fh:
    fh.write(serialize_libsvm(dataset))
print(f"wrote {dataset.n_rows} rows, d={dataset.d}, "
      f"positives={int((dataset.y > 0).sum())} -> {os.path.normpath(OUT)}")
