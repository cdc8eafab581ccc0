"""Surrogate-guided search over quantization hyperparameters."""

from .search import (
    STRATEGIES, HistoryEntry, Proposal, RandomStrategy, SearchBudget, SearchResult, Strategy,
    propose, random_search, read_history, search, write_history,
)
from .space import Dimension, HparamConfig, HparamSpace, encode
from .surrogate import ProxyRecord, Surrogate, fit_proxy
from .synthetic import SyntheticEvaluator, exhaustive_scores, synthetic_space
from .toy import ToyQuantEvaluator, toy_space

__all__ = [
    "Dimension", "HistoryEntry", "HparamConfig", "HparamSpace", "Proposal", "ProxyRecord",
    "RandomStrategy", "STRATEGIES", "SearchBudget", "SearchResult", "Strategy", "Surrogate",
    "SyntheticEvaluator", "ToyQuantEvaluator", "encode", "exhaustive_scores", "fit_proxy",
    "propose", "random_search", "read_history", "search", "synthetic_space", "toy_space",
    "write_history",
]
