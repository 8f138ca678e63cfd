"""Random forests with random and spatial cross-validation and spatial
forward feature selection."""

__version__ = "0.1.0"

from .cv import CvReport, TuneGrid, cross_validate, default_mtry_grid, refit
from .folds import FoldPlan, cluster_folds, random_folds, spatial_block_folds
from .forest import Forest, ForestConfig, importance_ranking, predict, train
from .metrics import ConfusionMatrix, MetricValue, accuracy, aggregate, kappa, r_squared, rmse
from .raster import RasterGrid, RasterStack, read_ascii_grid, write_ascii_grid
from .samples import SampleRow, SampleTable, Task, read_samples_csv, write_samples_csv
from .selection import (
    SelectionTrace,
    forward_feature_selection,
    recursive_feature_elimination,
    refit_selected,
)
