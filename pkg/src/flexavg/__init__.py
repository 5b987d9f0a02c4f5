"""Cross-validated model averaging under asymmetric power losses.

The loss ``rho(tau, p)`` covers quantile (``p = 1``) and expectile
(``p = 2``) regression.  Candidate models are fitted by linear programming or
iteratively reweighted least squares; their weights on the unit simplex
minimise a J-fold cross-validation criterion.
"""

from .errors import (ConfigError, CycleGuardTripped, FlexavgError, Infeasible, MissingColumn,
                     NonNumericCell, NotConverged, ParseError, RankDeficient, Unbounded)
from .loss import LossSpec, loss_gradient, mean_loss, rho
from .optim import (LinearProgram, LpResult, SimplexQp, WeightVector, project_simplex,
                    solve_lp, solve_weight_lp, solve_weight_qp)
from .regress import CandidateModel, Coefficients, Dataset, fit, objective
from .jcvma import (CandidateSet, CvPredictionMatrix, FoldPlan, JcvmaFit, cv_predictions,
                    fit_jcvma, jcv_criterion, make_folds, predict, select_weights)
from .baselines import (CriterionScore, ewa_weights, info_criterion, select_model,
                        smooth_weights)

__version__ = "0.1.0"

__all__ = [
    "CandidateModel", "CandidateSet", "Coefficients", "ConfigError", "CriterionScore",
    "CvPredictionMatrix", "CycleGuardTripped", "Dataset", "FlexavgError", "FoldPlan",
    "Infeasible", "JcvmaFit", "LinearProgram", "LossSpec", "LpResult", "MissingColumn",
    "NonNumericCell", "NotConverged", "ParseError", "RankDeficient", "SimplexQp",
    "Unbounded", "WeightVector", "cv_predictions", "ewa_weights", "fit", "fit_jcvma",
    "info_criterion", "jcv_criterion", "loss_gradient", "make_folds", "mean_loss",
    "objective", "predict", "project_simplex", "rho", "select_model", "select_weights",
    "smooth_weights", "solve_lp", "solve_weight_lp", "solve_weight_qp", "__version__",
]
