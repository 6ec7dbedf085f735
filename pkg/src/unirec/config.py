"""Declarative run configuration: strict JSON schema, defaults, ``--set`` overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .model import QuantizerConfig, RecommenderSettings, TokenizerConfig
from .tokenizer import MODES
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Raised with every violated key listed, one per line."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


SYNTHETIC_DEFAULTS: Dict[str, Any] = {
    "num_items": 500, "num_users": 2000, "num_clusters": 20, "seq_len_mean": 10,
    "noise": 0.05, "seed": 0, "dim": 768, "follow_prob": 0.5, "clusters_per_user": 2,
}

DEFAULTS: Dict[str, Any] = {
    "data": {"interactions_path": None, "labels_path": None, "synthetic": SYNTHETIC_DEFAULTS,
             "core": 5, "filter_items": True},
    "embeddings": {"path": None, "synthetic": True},
    "quantizer": {"L": 3, "K": 256, "D_prime": 64, "beta": 0.25, "policy": "hybrid",
                  "hidden": [512, 256, 128]},
    "tokenizer": {"mode": "unified", "D": 8},
    "model": {"blocks": 2, "heads": 2, "max_seq_len": 50, "dropout": 0.0},
    "train": {"lr": 0.001, "batch_size": 256, "max_epochs": 30, "patience": 10, "lambda": 0.0,
              "seed": 0, "warmup_epochs": 0},
    "eval": {"num_negatives": 99, "k_list": [5, 10], "seed": 0},
}

# expected python types per leaf; bool is not accepted where a number is expected
_INT, _REAL, _BOOL, _STR, _OPT_STR = "int", "real", "bool", "str", "optional str"
SCHEMA: Dict[str, Dict[str, Any]] = {
    "data": {"interactions_path": _OPT_STR, "labels_path": _OPT_STR, "core": _INT, "filter_items": _BOOL,
             "synthetic": {"num_items": _INT, "num_users": _INT, "num_clusters": _INT,
                           "seq_len_mean": _REAL, "noise": _REAL, "seed": _INT, "dim": _INT,
                           "follow_prob": _REAL, "clusters_per_user": _INT}},
    "embeddings": {"path": _OPT_STR, "synthetic": _BOOL},
    "quantizer": {"L": _INT, "K": _INT, "D_prime": _INT, "beta": _REAL, "policy": _STR, "hidden": "int list"},
    "tokenizer": {"mode": _STR, "D": _INT},
    "model": {"blocks": _INT, "heads": _INT, "max_seq_len": _INT, "dropout": _REAL},
    "train": {"lr": _REAL, "batch_size": _INT, "max_epochs": _INT, "patience": _INT, "lambda": _REAL,
              "seed": _INT, "warmup_epochs": _INT},
    "eval": {"num_negatives": _INT, "k_list": "int list", "seed": _INT},
}


def _type_ok(kind: str, value: Any) -> bool:
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _REAL:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == _BOOL:
        return isinstance(value, bool)
    if kind == _STR:
        return isinstance(value, str)
    if kind == _OPT_STR:
        return value is None or isinstance(value, str)
    if kind == "int list":
        return isinstance(value, list) and all(_type_ok(_INT, v) for v in value)
    raise AssertionError(kind)


def _merge(base: Dict[str, Any], override: Dict[str, Any], schema: Dict[str, Any], prefix: str,
           problems: List[str]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    if not isinstance(override, dict):
        problems.append(f"{prefix.rstrip('.') or '<root>'}: expected an object")
        return out
    for key, value in override.items():
        path = prefix + key
        if key not in schema:
            problems.append(f"{path}: unknown key")
        elif isinstance(schema[key], dict):
            out[key] = _merge(base[key], value, schema[key], path + ".", problems)
        elif not _type_ok(schema[key], value):
            problems.append(f"{path}: expected {schema[key]}, got {json.dumps(value)}")
        else:
            out[key] = value
    return out


def _check_values(cfg: Dict[str, Any], problems: List[str]) -> None:
    def need(cond: bool, msg: str) -> None:
        if not cond:
            problems.append(msg)

    syn = cfg["data"]["synthetic"]
    for key in ("num_items", "num_users", "num_clusters", "dim"):
        need(syn[key] >= 1, f"data.synthetic.{key}: must be >= 1")
    need(syn["num_clusters"] <= syn["num_items"], "data.synthetic.num_clusters: must be <= num_items")
    need(syn["noise"] >= 0, "data.synthetic.noise: must be >= 0")
    need(syn["seq_len_mean"] >= 3, "data.synthetic.seq_len_mean: must be >= 3")
    need(0 <= syn["follow_prob"] <= 1, "data.synthetic.follow_prob: must lie in [0, 1]")
    need(syn["clusters_per_user"] >= 1, "data.synthetic.clusters_per_user: must be >= 1")
    need(cfg["data"]["core"] >= 1, "data.core: must be >= 1")
    if cfg["data"]["interactions_path"] is None:
        need(cfg["embeddings"]["path"] is None, "embeddings.path: requires data.interactions_path")
    else:
        need(cfg["embeddings"]["path"] is not None or cfg["embeddings"]["synthetic"],
             "embeddings: give a path or set synthetic=true")
    q = cfg["quantizer"]
    need(q["L"] >= 1, "quantizer.L: must be >= 1")
    need(q["K"] >= 1, "quantizer.K: must be >= 1")
    need(q["D_prime"] >= 1, "quantizer.D_prime: must be >= 1")
    need(q["beta"] >= 0, "quantizer.beta: must be >= 0")
    need(q["policy"] in ("hybrid", "cosine", "euclidean"), "quantizer.policy: one of hybrid, cosine, euclidean")
    need(all(h >= 1 for h in q["hidden"]), "quantizer.hidden: sizes must be >= 1")
    t = cfg["tokenizer"]
    need(t["mode"] in MODES, f"tokenizer.mode: one of {', '.join(MODES)}")
    need(t["D"] >= 0, "tokenizer.D: must be >= 0")
    m = cfg["model"]
    need(m["blocks"] >= 1, "model.blocks: must be >= 1")
    need(m["heads"] >= 1, "model.heads: must be >= 1")
    need(m["max_seq_len"] >= 1, "model.max_seq_len: must be >= 1")
    need(0 <= m["dropout"] < 1, "model.dropout: must lie in [0, 1)")
    if m["heads"] >= 1:
        width = q["D_prime"] + t["D"] if t["mode"] == "unified" else q["D_prime"]
        need(width % m["heads"] == 0, f"model.heads: representation width {width} not divisible by heads")
    tr = cfg["train"]
    need(tr["lr"] >= 0, "train.lr: must be >= 0")
    need(tr["batch_size"] >= 1, "train.batch_size: must be >= 1")
    need(tr["max_epochs"] >= 0, "train.max_epochs: must be >= 0")
    need(tr["patience"] >= 1, "train.patience: must be >= 1")
    need(tr["lambda"] >= 0, "train.lambda: must be >= 0")
    need(tr["warmup_epochs"] >= 0, "train.warmup_epochs: must be >= 0")
    e = cfg["eval"]
    need(e["num_negatives"] >= 1, "eval.num_negatives: must be >= 1")
    need(len(e["k_list"]) >= 1 and all(k >= 1 for k in e["k_list"]), "eval.k_list: positive integers")


def resolve(override: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Defaults merged with ``override``; raises ConfigError listing every problem."""
    problems: List[str] = []
    cfg = _merge(DEFAULTS, override or {}, SCHEMA, "", problems)
    if not problems:
        _check_values(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_assignment(text: str) -> tuple:
    """``section.key=value`` (value parsed as JSON, else kept as a string)."""
    if "=" not in text:
        raise ConfigError([f"--set {text!r}: expected section.key=value"])
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(doc: Dict[str, Any], assignments: Sequence[str]) -> Dict[str, Any]:
    out = copy.deepcopy(doc)
    problems = []
    for text in assignments:
        key, value = parse_assignment(text)
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                problems.append(f"--set {key}: {part} is not a section")
                break
            node = nxt
        else:
            node[parts[-1]] = value
    if problems:
        raise ConfigError(problems)
    return out


def load(path: Optional[str | Path] = None, assignments: Sequence[str] = ()) -> Dict[str, Any]:
    doc: Dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {path}"]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return resolve(apply_overrides(doc, assignments))


def canonical(cfg: Dict[str, Any]) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical(cfg).encode("utf-8")).hexdigest()[:12]


def quantizer_config(cfg: Dict[str, Any]) -> QuantizerConfig:
    q = cfg["quantizer"]
    return QuantizerConfig(q["L"], q["K"], q["D_prime"], q["beta"], q["policy"], tuple(q["hidden"]))


def tokenizer_config(cfg: Dict[str, Any]) -> TokenizerConfig:
    return TokenizerConfig(cfg["tokenizer"]["mode"], cfg["tokenizer"]["D"])


def recommender_settings(cfg: Dict[str, Any]) -> RecommenderSettings:
    m = cfg["model"]
    return RecommenderSettings(m["blocks"], m["heads"], m["max_seq_len"], m["dropout"])


def train_config(cfg: Dict[str, Any]) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(t["lr"], t["batch_size"], t["max_epochs"], t["patience"], t["lambda"], t["seed"],
                       t["warmup_epochs"])
