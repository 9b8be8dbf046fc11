"""Furnace setpoint optimization with tree surrogates, evolutionary
multi-objective search and two-player Nash bargaining."""

from .bargain import BargainResult, DisagreementPoint, PayoffMatrix, bargain, disagreement, nash_product, nash_solve, payoff_matrix
from .dataset import Dataset, FurnaceRecord, SyntheticSpec, correlation_matrix, load_csv, synthesize, train_test_split
from .evolve import BoundsBox, GaParams, ga_maximize
from .moo import Objective, ParetoFront, ProblemSpec, RnsgaParams, dominates, nsga2_run, rnsga2_run
from .pipeline import PipelineConfig, brute_force_oracle, run_pipeline
from .surrogate import CartParams, ModelMetrics, RegressionTree, evaluate, fit_cart, select_models

__version__ = "0.1.0"
