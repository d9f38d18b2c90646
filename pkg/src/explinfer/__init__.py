"""explinfer: attribute inference attacks against tabular model explanations.

Trains small tabular classifiers, produces attribute-based explanations
(IntegratedGradients, DeepLift, GradientSHAP, SmoothGrad), and measures how
accurately an adversary recovers a sensitive attribute from those
explanations under two threat models, with F1-maximizing threshold
calibration.
"""

from .attack import (AttackModel, AttackSurface, CalibratedThreshold,
                     ThreatModel, build_surface, calibrate, infer, score,
                     train_attack)
from .data import DatasetSplits, TabularDataset, TabularSchema, encode, load_csv, split
from .explain import (Algorithm, Attribution, ExplainerConfig, deeplift,
                      gradient_shap, integrated_gradients, mean_baseline,
                      restrict, smoothgrad, to_attack_vector)
from .metrics import ConfusionCounts, PrCurve, confusion, f1, pearson, pr_curve, precision, recall
from .nn import (MlpModel, ScalarTarget, TrainConfig, evaluate_accuracy,
                 forward, init_model, input_gradient, train)
from .pipeline import AttackReport, ExperimentConfig, emit_report, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "Attribution", "AttackModel", "AttackReport", "AttackSurface",
    "CalibratedThreshold", "ConfusionCounts", "DatasetSplits",
    "ExperimentConfig", "ExplainerConfig", "MlpModel", "PrCurve",
    "ScalarTarget", "TabularDataset", "TabularSchema", "ThreatModel",
    "TrainConfig", "build_surface", "calibrate", "confusion", "deeplift",
    "emit_report", "encode", "evaluate_accuracy", "f1", "forward",
    "gradient_shap", "infer", "init_model", "input_gradient",
    "integrated_gradients", "load_csv", "mean_baseline", "pearson",
    "pr_curve", "precision", "recall", "restrict", "run_experiment", "score",
    "smoothgrad", "split", "to_attack_vector", "train", "train_attack",
]
