"""Utility measures for synthetic tabular data.

General utility is the propensity-score mean-squared error (pMSE) with its
null distribution under correct synthesis; specific utility compares a
regression fitted to original and synthetic data through confidence-interval
overlap and standardized coefficient differences.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .dataset import (CATEGORICAL, NUMERIC, ColumnSchema, DataError, Dataset, SynthesisMask,
                      from_arrays, harmonize_levels, load_csv, load_schema, write_csv)
from .design import DesignMatrix, DesignSpec, FormulaError, ModelFormula, build_design, parse_formula
from .glm import GlmFit, fit_linear, fit_logistic, fit_multinomial
from .cart import TreeConfig, fit_classification_tree, fit_regression_tree
from .synth import (MvnSpec, SynthesisPlan, equicorrelation, mvn_correct_synthesis,
                    mvn_incorrect_synthesis, mvn_sample, synthesize)
from .general import (NullEstimate, NullMethodError, PropensityModelSpec, UtilityReport, analytic_null,
                      compute_pmse, general_utility, pairwise_null, permutation_null)
from .specific import FitComparison, compare_fits, interval_overlap, standardized_difference
from .sim import SimConfig, SimResultRow, preset, render_table, run_simulation
from .standin import load_standin

__all__ = [
    "CATEGORICAL", "NUMERIC", "ColumnSchema", "DataError", "Dataset", "SynthesisMask", "from_arrays",
    "harmonize_levels", "load_csv", "load_schema", "write_csv",
    "DesignMatrix", "DesignSpec", "FormulaError", "ModelFormula", "build_design", "parse_formula",
    "GlmFit", "fit_linear", "fit_logistic", "fit_multinomial",
    "TreeConfig", "fit_classification_tree", "fit_regression_tree",
    "MvnSpec", "SynthesisPlan", "equicorrelation", "mvn_correct_synthesis", "mvn_incorrect_synthesis",
    "mvn_sample", "synthesize",
    "NullEstimate", "NullMethodError", "PropensityModelSpec", "UtilityReport", "analytic_null",
    "compute_pmse", "general_utility", "pairwise_null", "permutation_null",
    "FitComparison", "compare_fits", "interval_overlap", "standardized_difference",
    "SimConfig", "SimResultRow", "preset", "render_table", "run_simulation",
    "load_standin",
]
