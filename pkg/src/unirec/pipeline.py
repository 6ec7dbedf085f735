"""Glue between a resolved run configuration and the library: data loading,
model construction, checkpoint round trips."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from . import config as C
from .data import (Dataset, SplitAssignment, SyntheticCorpus, five_core_filter, generate_corpus,
                   leave_one_out_split, load_interactions, load_item_embeddings, load_labels,
                   align_embeddings, synthesize_embeddings)
from .model import UnifiedRecommender
from .nn import assign_parameters, load_checkpoint, parameter_dict, save_checkpoint
from .evaluator import evaluate
from .trainer import fit, initialize_model


@dataclass
class PreparedData:
    dataset: Dataset
    split: SplitAssignment
    features: np.ndarray
    labels: Optional[np.ndarray]


def synthetic_corpus(cfg: Dict[str, Any]) -> SyntheticCorpus:
    s = cfg["data"]["synthetic"]
    return generate_corpus(num_items=s["num_items"], num_users=s["num_users"], num_clusters=s["num_clusters"],
                           seq_len_mean=s["seq_len_mean"], noise=s["noise"], seed=s["seed"], dim=s["dim"],
                           follow_prob=s["follow_prob"], clusters_per_user=s["clusters_per_user"])


def prepare(cfg: Dict[str, Any]) -> PreparedData:
    """Filtered dataset, leave-one-out split, aligned content features and
    (when available) per-item category labels."""
    data = cfg["data"]
    corpus = None
    if data["interactions_path"] is None:
        corpus = synthetic_corpus(cfg)
        records = corpus.records
    else:
        records = load_interactions(data["interactions_path"])
    dataset = five_core_filter(records, core=data["core"], items_too=data["filter_items"])
    split = leave_one_out_split(dataset)
    labels = None
    if corpus is not None:
        emb = align_embeddings(corpus, dataset)
        labels = emb.labels
    elif cfg["embeddings"]["path"] is not None:
        emb = load_item_embeddings(cfg["embeddings"]["path"], dataset)
    else:
        s = data["synthetic"]
        emb = synthesize_embeddings(dataset.num_items, min(s["num_clusters"], dataset.num_items), s["dim"],
                                    s["noise"], s["seed"])
        labels = emb.labels
    if data["labels_path"] is not None:
        labels = load_labels(data["labels_path"], dataset)
    return PreparedData(dataset, split, emb.rows, labels)


def build_model(cfg: Dict[str, Any], prepared: PreparedData, initialize: bool = True) -> UnifiedRecommender:
    """Model with codebooks initialised from the first training batch, or a
    bare shell to receive checkpoint parameters."""
    q, t, s = C.quantizer_config(cfg), C.tokenizer_config(cfg), C.recommender_settings(cfg)
    if initialize:
        return initialize_model(prepared.features, prepared.split, q, t, s, C.train_config(cfg))
    return UnifiedRecommender(prepared.features, q, t, s, cfg["train"]["seed"])


def save_model(model: UnifiedRecommender, cfg: Dict[str, Any], path: str | Path, extra: Optional[dict] = None) -> None:
    meta = {"config": cfg}
    meta.update(extra or {})
    save_checkpoint(parameter_dict(model), path, meta)


def load_model(path: str | Path, prepared: Optional[PreparedData] = None):
    """Rebuild a model from a checkpoint; the embedded config drives data
    preparation unless ``prepared`` is supplied."""
    params, meta = load_checkpoint(path)
    if "config" not in meta:
        raise ValueError(f"{path}: checkpoint carries no run configuration")
    cfg = C.resolve(meta["config"])
    prepared = prepared or prepare(cfg)
    model = build_model(cfg, prepared, initialize=False)
    assign_parameters(model, params)
    return model, cfg, prepared, meta


def train(cfg: Dict[str, Any], prepared: Optional[PreparedData] = None, on_epoch=None):
    """Initialise and fit; returns (model, TrainReport, PreparedData)."""
    prepared = prepared or prepare(cfg)
    model = build_model(cfg, prepared)
    e = cfg["eval"]
    report = fit(model, prepared.split, C.train_config(cfg), num_negatives=e["num_negatives"],
                 eval_seed=e["seed"], ks=tuple(e["k_list"]), on_epoch=on_epoch)
    return model, report, prepared


def evaluate_model(model: UnifiedRecommender, cfg: Dict[str, Any], prepared: PreparedData, target: str = "test"):
    e = cfg["eval"]
    return evaluate(model, prepared.split, target, e["num_negatives"], e["seed"], tuple(e["k_list"]))
