"""Closed-form linear recommenders: low-rank ridge regression, shrunken SVD, EASE, DLAE."""

from .closed_form import (
    FactorModel,
    RegularizerSpec,
    SimilarityModel,
    fit_dlae,
    fit_ease,
    fit_lrr,
    fit_mf,
    lrr_delta,
    lrr_ratio,
    mf_as_encoder,
    mf_ratio,
)
from .data import Dataset, Fold, InteractionMatrix, Protocol, SplitSpec, load_interactions, split
from .errors import DataError, NumericalError
from .evaluation import EvalReport, evaluate, ndcg_at_k, recall_at_k, score_user
from .iterative import WmfConfig, fit_wmf
from .nearby import HeadTailParams, SparsifyParams, apply_ht, apply_sparsify, remove_diagonal, tune_nearby
from .search import GridSpec, TuneConfig, TunedModel, bpr_loss, grid_search, tune_lambdas
from .spectral import SpectralDecomposition, gram_eigen, left_factors

__all__ = [
    "apply_ht",
    "apply_sparsify",
    "bpr_loss",
    "DataError",
    "Dataset",
    "EvalReport",
    "evaluate",
    "FactorModel",
    "fit_dlae",
    "fit_ease",
    "fit_lrr",
    "fit_mf",
    "fit_wmf",
    "Fold",
    "gram_eigen",
    "grid_search",
    "GridSpec",
    "HeadTailParams",
    "InteractionMatrix",
    "left_factors",
    "load_interactions",
    "lrr_delta",
    "lrr_ratio",
    "mf_as_encoder",
    "mf_ratio",
    "ndcg_at_k",
    "NumericalError",
    "Protocol",
    "recall_at_k",
    "RegularizerSpec",
    "remove_diagonal",
    "score_user",
    "SimilarityModel",
    "SparsifyParams",
    "SpectralDecomposition",
    "split",
    "SplitSpec",
    "tune_lambdas",
    "tune_nearby",
    "TuneConfig",
    "TunedModel",
    "WmfConfig",
]

__version__ = "0.1.0"
