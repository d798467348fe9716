"""Predict a multiclass classifier's accuracy on many classes from a small pilot sample."""

from .baselines import KdeConfig, RegressionModel, kde_extrapolate, regression_extrapolate, regression_fit
from .cleanex import CleanexModel, FeatureSet, build_features, extrapolate, forward, train
from .curves import AccuracyCurve, PointStats, brute_force_accuracy, compute_rank_stats, observed_accuracy_curve
from .harness import ExperimentConfig, ExperimentReport, rmse, run_experiment
from .rroc import RRocCurve, accuracy_from_discriminability, discriminability, reversed_auc, rroc_average, rroc_point
from .score_model import ScoreMatrix, ScoreOrientation, load_scores, subsample_classes, write_scores
from .simulation import ClassDist, PointDist, SimulationConfig, generate

__version__ = "0.1.0"
