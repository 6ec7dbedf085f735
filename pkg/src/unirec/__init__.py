"""Unified semantic and ID tokenization for sequential recommendation.

Items are represented by the sum of residual-quantized codewords learned from
their content embedding, concatenated with a small learnable ID embedding, and
ranked by a causal self-attention recommender trained end to end.
"""

from .data import (Dataset, DataError, EmbeddingMatrix, InteractionRecord, SplitAssignment,
                   five_core_filter, generate_corpus, leave_one_out_split, load_interactions,
                   load_item_embeddings, sample_eval_candidates, synthesize_embeddings)
from .diagnostics import category_histogram, codebook_stats, export_tokens
from .evaluator import MetricReport, evaluate, metrics_from_rank, rank_ground_truth
from .model import QuantizerConfig, RecommenderSettings, TokenizerConfig, UnifiedRecommender
from .quantizer import RQVAE, DistancePolicy, init_codebooks, nearest_code, quantize
from .tokenizer import TokenBudget, budget_for_mode, token_budget, unify
from .trainer import TrainConfig, TrainReport, fit, initialize_model, train_step

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DataError", "EmbeddingMatrix", "InteractionRecord", "SplitAssignment",
    "five_core_filter", "generate_corpus", "leave_one_out_split", "load_interactions",
    "load_item_embeddings", "sample_eval_candidates", "synthesize_embeddings",
    "category_histogram", "codebook_stats", "export_tokens",
    "MetricReport", "evaluate", "metrics_from_rank", "rank_ground_truth",
    "QuantizerConfig", "RecommenderSettings", "TokenizerConfig", "UnifiedRecommender",
    "RQVAE", "DistancePolicy", "init_codebooks", "nearest_code", "quantize",
    "TokenBudget", "budget_for_mode", "token_budget", "unify",
    "TrainConfig", "TrainReport", "fit", "initialize_model", "train_step",
]
