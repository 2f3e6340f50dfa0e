"""Hierarchical random forests for prediction with latent protected attributes.

A bottom forest predicts the protected attribute from proxy columns; a top
forest predicts the outcome from the remaining covariates plus that
prediction, so the raw protected column never enters the outcome model.
"""

from .dataset import (ColumnSchema, Dataset, DatasetError, DegenerateSplitError, ParseError,
                      SchemaError, SplitSpec, load_csv, load_schema, quarter_dummies, split)
from .forest import (Forest, ForestConfig, ForestError, PredictionError, fit, leaf_of,
                     predict_class, predict_mean)
from .hier import HierarchicalModel, HierarchicalSpec, fit_hier, fit_naive, predict_hier
from .metrics import (ConfusionMatrix, RegressionReport, accuracy, confusion, pi_coverage,
                      regression_report, replicate_average)
from .quantile import PredictionInterval, QuantileIndex
from .simulate import ScenarioSpec, generate, run_study
from .text_cluster import cluster_labels, jaro, jaro_winkler, soundex

__version__ = "0.1.0"
