import os

import numpy as np
import pytest

from explinfer import nn
from explinfer.nn import TrainConfig


@pytest.fixture(scope="session")
def small_trained_net():
    """A small ReLU net trained on a nonlinear 5-feature task."""
    rng = np.random.default_rng(1234)
    X = rng.normal(size=(400, 5))
    y = ((X[:, 0] * X[:, 1] + X[:, 2] - 0.5 * X[:, 3]) > 0).astype(float)
    model = nn.init_model([5, 16, 8, 1], seed=7)
    cfg = TrainConfig(epochs=20, learning_rate=5e-3, batch_size=64, seed=3)
    return nn.train(model, X, y, cfg), X


# --- public Adult census data (used by the desk-scale tests) ----------------

ADULT_NUMERIC = ["age", "fnlwgt", "education-num", "capital-gain",
                 "capital-loss", "hours-per-week"]
ADULT_CATEGORICAL = ["workclass", "education", "marital-status", "occupation",
                     "relationship", "sex", "native-country"]


def adult_csv_path():
    """Path of the merged Adult CSV, or None when it is not available."""
    path = os.environ.get("EXPLINFER_ADULT_CSV")
    if path and os.path.exists(path):
        return path
    default = os.path.join(os.path.dirname(__file__), "..", "data", "adult.csv")
    if os.path.exists(default):
        return default
    return None


def adult_schema_dict():
    """Schema used by the desk-scale census tests: race is the sensitive
    attribute, binarized as White vs. the rest."""
    return {
        "columns": ([{"name": n, "kind": "numeric"} for n in ADULT_NUMERIC]
                    + [{"name": n, "kind": "categorical"}
                       for n in ADULT_CATEGORICAL]),
        "label_column": "income",
        "label_positive_value": ">50K",
        "sensitive_column": "race",
        "sensitive_positive_value": "White",
    }
