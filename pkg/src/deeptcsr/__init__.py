"""Discrete-time dynamic survival regression with a slow-moving target network."""

from .hazard_model import (FEEDFORWARD, LINEAR, HazardMatrix, HazardModel, NumericalFailure,
                           ParameterVector, ema_update, hazard, hazard_matrix, init_params,
                           loss_and_grad, survival, survival_curves)
from .metrics import (EvalReport, KmCurve, brier_curve, concordance_index, evaluate, ibs,
                      kaplan_meier, variability_delta)
from .seqdata import (Dataset, DatasetError, SequenceRecord, chunk_sequences, dataset_stats,
                      load_dataset, save_dataset)
from .synthgen import (CalibrationError, RwConfig, calibrate_intercept, default_coefficients,
                       generate_random_walk)
from .targets import TargetTable, hard_labels, pseudo_table, pseudo_table_oracle
from .trainer import TrainConfig, TrainLog, adam_step, fit, sgd_step

__version__ = "0.1.0"
