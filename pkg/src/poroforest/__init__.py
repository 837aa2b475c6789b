"""Porosity modeling for cement-based mixes.

Two complementary model families under one roof: regression-tree ensembles
(random forests and least-squares boosting, with out-of-bag error, Bayesian
hyperparameter tuning, permutation importance, and partial dependence)
learned from mix-design records, and a closed-form chemo-mechanical porosity
model for cement / fly-ash pastes. A stratified 34-mix corpus ships with the
package; the `poroforest` command exposes the full workflow.

Tree growing runs on a compiled kernel when available and falls back to a
pure-Python implementation that produces bit-identical models
(`poroforest._kernels.BACKEND` names the one in use).
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .cart import RegressionTree, SplitCandidate, TreeParams, best_split, fit_tree, predict_tree, prune
from .chemomech import (
    ActiveFractions,
    ChemoMixInput,
    ChemoResult,
    CompositionSet,
    OxideComposition,
    default_composition,
    gypsum_branch,
    load_composition,
    mix_input_from_record,
    p_max,
    papadakis_porosity,
)
from .dataset import (
    Dataset,
    MixRecord,
    SplitAssignment,
    apply_assignment,
    concrete_type,
    load_corpus,
    load_csv,
    stratified_split,
    summarize,
    write_csv,
)
from .ensemble import (
    BoostedModel,
    BoostParams,
    ErrorTrace,
    ForestModel,
    ForestParams,
    ImportanceReport,
    boost_error_trace,
    fit_lsboost,
    fit_random_forest,
    forest_error_trace,
    load_model,
    oob_mse,
    oob_predictions,
    permutation_importance,
    predict_boosted,
    predict_forest,
    save_model,
)
from .errors import DataError, NumericError, PoroforestError
from .interpret import PDPCurve, PDPSurface, partial_dependence_1d, partial_dependence_2d
from .metrics import EvalReport, evaluate, mape, r_squared, rmse
from .tuning import (
    BOOST_SPACE,
    FOREST_SPACE,
    HyperparamSpace,
    ParamSpec,
    TuneResult,
    bayes_optimize,
    expected_improvement,
    fit_gp,
    gp_posterior,
    kfold_indices,
    objective_gbt,
    objective_rf,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    # errors
    "PoroforestError",
    "DataError",
    "NumericError",
    # data
    "MixRecord",
    "Dataset",
    "SplitAssignment",
    "load_csv",
    "write_csv",
    "load_corpus",
    "summarize",
    "concrete_type",
    "stratified_split",
    "apply_assignment",
    # trees
    "TreeParams",
    "RegressionTree",
    "SplitCandidate",
    "best_split",
    "fit_tree",
    "predict_tree",
    "prune",
    # ensembles
    "ForestParams",
    "BoostParams",
    "ForestModel",
    "BoostedModel",
    "ErrorTrace",
    "ImportanceReport",
    "fit_random_forest",
    "predict_forest",
    "fit_lsboost",
    "predict_boosted",
    "oob_predictions",
    "oob_mse",
    "permutation_importance",
    "forest_error_trace",
    "boost_error_trace",
    "save_model",
    "load_model",
    # metrics
    "EvalReport",
    "evaluate",
    "rmse",
    "mape",
    "r_squared",
    # interpretation
    "PDPCurve",
    "PDPSurface",
    "partial_dependence_1d",
    "partial_dependence_2d",
    # tuning
    "ParamSpec",
    "HyperparamSpace",
    "FOREST_SPACE",
    "BOOST_SPACE",
    "TuneResult",
    "kfold_indices",
    "objective_rf",
    "objective_gbt",
    "fit_gp",
    "gp_posterior",
    "expected_improvement",
    "bayes_optimize",
    # chemistry
    "OxideComposition",
    "ActiveFractions",
    "CompositionSet",
    "ChemoMixInput",
    "ChemoResult",
    "gypsum_branch",
    "p_max",
    "papadakis_porosity",
    "mix_input_from_record",
    "default_composition",
    "load_composition",
]
