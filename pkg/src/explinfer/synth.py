"""Synthetic tabular data with a perfectly recoverable sensitive attribute.

The sensitive flag is a deterministic function of the first numeric feature,
whose two classes are separated by a margin (no mass near the decision
point), and the label equals the flag. An attack with explanation access can
therefore recover the flag exactly. Used by the test suite and handy for
pipeline demos.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .data import TabularSchema


def write_synthetic_dataset(
    directory: str, n: int = 300, seed: int = 0
) -> tuple[str, str]:
    """Write synthetic.csv and synthetic_schema.json; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    x0 = sign * (0.5 + np.abs(rng.normal(size=n)))  # |x0| >= 0.5: class margin
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    group = rng.choice(["a", "b", "c"], size=n)
    s = (x0 > 0.0).astype(int)
    y = s.copy()  # label coincides with the sensitive flag

    csv_path = os.path.join(directory, "synthetic.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0", "x1", "x2", "group", "flag", "outcome"])
        for i in range(n):
            writer.writerow(
                [repr(float(x0[i])), repr(float(x1[i])), repr(float(x2[i])),
                 group[i], "yes" if s[i] else "no", y[i]])

    schema = TabularSchema(
        columns=[("x0", "numeric"), ("x1", "numeric"), ("x2", "numeric"),
                 ("group", "categorical")],
        label_column="outcome",
        sensitive_column="flag",
        sensitive_positive_value="yes",
    )
    schema_path = os.path.join(directory, "synthetic_schema.json")
    schema.to_json(schema_path)
    return csv_path, schema_path
