"""Command-line entry point.

Every command resolves a run configuration (defaults, then ``--config``, then
``--set`` overrides), writes its artifacts into a fresh run directory named by
config hash and timestamp, and records a ``manifest.json`` there. Passing a
manifest back as ``--config`` reruns with the identical resolved config.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from . import config as C
from . import pipeline as P
from .data import DataError, write_corpus
from .diagnostics import category_histogram, codebook_stats, export_tokens
from .nn import load_checkpoint
from .tokenizer import ID_ONLY, SEMANTIC_ONLY, UNIFIED, budget_for_mode

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("unirec")


def _config_document(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise C.ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise C.ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    if isinstance(doc, dict) and "manifest_version" in doc:
        doc = doc["config"]
    return doc


def resolve_config(args: argparse.Namespace, base: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    doc = base if base is not None else _config_document(args.config)
    sets = list(args.set or [])
    if args.seed is not None:
        sets += [f"train.seed={args.seed}", f"eval.seed={args.seed}"]
    return C.resolve(C.apply_overrides(doc, sets))


def run_directory(out: str, cfg: Dict[str, Any], command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(out) / f"{command}-{C.config_hash(cfg)}-{stamp}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{n}")
        n += 1
    path.mkdir(parents=True)
    return path


def write_manifest(run_dir: Path, command: str, cfg: Dict[str, Any], artifacts: Dict[str, str],
                   extra: Optional[Dict[str, Any]] = None) -> None:
    manifest = {
        "manifest_version": 1,
        "command": command,
        "config_hash": C.config_hash(cfg),
        "config": cfg,
        "seeds": {"data": cfg["data"]["synthetic"]["seed"], "train": cfg["train"]["seed"],
                  "eval": cfg["eval"]["seed"]},
        "artifacts": artifacts,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    manifest.update(extra or {})
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return path.name


def _log_epoch(record) -> None:
    log.info("epoch %d total %.6f valid HIT@10 %.4f MRR %.4f", record.epoch, record.losses.total,
             record.valid["HIT@10"], record.valid["MRR"])


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, cfg, run_dir):
    if cfg["data"]["interactions_path"] is not None:
        raise C.ConfigError(["data.interactions_path: gen-data only synthesizes; unset it"])
    paths = write_corpus(P.synthetic_corpus(cfg), run_dir)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return {k: p.name for k, p in paths.items()}


def cmd_prepare(args, cfg, run_dir):
    prepared = P.prepare(cfg)
    ds, sp = prepared.dataset, prepared.split
    arts = {}
    with open(run_dir / "sequences.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, user in enumerate(ds.user_ids):
            train = " ".join(ds.item_ids[i] for i in sp.train[u])
            fh.write(f"{user}\t{train}\t{ds.item_ids[sp.valid[u]]}\t{ds.item_ids[sp.test[u]]}\n")
    arts["sequences"] = "sequences.tsv"
    summary = (f"users={ds.num_users}\nitems={ds.num_items}\naverage_length={ds.average_length():.6f}\n"
               f"feature_dim={prepared.features.shape[1]}\n")
    arts["summary"] = _write(run_dir / "summary.txt", summary)
    print(summary, end="")
    return arts


def cmd_train(args, cfg, run_dir):
    model, report, prepared = P.train(cfg, on_epoch=_log_epoch)
    arts = {"checkpoint": "checkpoint.ckpt"}
    P.save_model(model, cfg, run_dir / "checkpoint.ckpt")
    arts["train_report"] = _write(run_dir / "train_report.txt", report.lines())
    print(report.lines(), end="")
    print(f"best_epoch={report.best_epoch}")
    return arts


def cmd_eval(args, cfg, run_dir):
    model, _, prepared, _ = P.load_model(args.checkpoint)
    result = P.evaluate_model(model, cfg, prepared, args.split)
    text = result.as_lines()
    print(text, end="")
    return {"metrics": _write(run_dir / f"metrics_{args.split}.txt", text)}


def cmd_diagnose(args, cfg, run_dir):
    model, _, prepared, _ = P.load_model(args.checkpoint)
    _, codes = model.catalog()
    if codes.shape[1] == 0:
        raise C.ConfigError(["tokenizer.mode: id_only checkpoints carry no semantic codes"])
    q = cfg["quantizer"]
    stats = codebook_stats(codes, q["K"], q["L"], codes.shape[0])
    arts = {"codebook_stats": _write(run_dir / "codebook_stats.txt", stats.as_lines())}
    print(stats.as_lines(), end="")
    if prepared.labels is not None:
        rows = ["layer code category count"]
        for layer in range(codes.shape[1]):
            rows += category_histogram(codes, list(prepared.labels), layer, args.top_n).rows()
        arts["histograms"] = _write(run_dir / "histograms.txt", "\n".join(rows) + "\n")
    return arts


def cmd_export(args, cfg, run_dir):
    model, _, prepared, _ = P.load_model(args.checkpoint)
    reprs, codes = model.catalog()
    books = [b.detach().numpy() for b in model.rqvae.codebooks]
    ids = model.id_table.weight.detach().numpy() if model.id_table is not None else None
    labels = list(prepared.labels) if prepared.labels is not None else None
    paths = export_tokens(books, prepared.dataset.item_ids, codes, ids, reprs.numpy(), run_dir, labels)
    print(f"wrote {', '.join(p.name for p in paths.values())}")
    return {k: p.name for k, p in paths.items()}


def _budget(cfg: Dict[str, Any], mode: str, m: int):
    q = cfg["quantizer"]
    return budget_for_mode(mode, m, cfg["tokenizer"]["D"], q["L"], q["K"], q["D_prime"])


def metric_names(cfg: Dict[str, Any]) -> list:
    names = []
    for k in cfg["eval"]["k_list"]:
        names += [f"HIT@{k}", f"NDCG@{k}"]
    return names + ["MRR"]


def _metric_row(label: str, values: Dict[str, float], budget) -> str:
    cells = [f"{v:.4f}" for v in values.values()]
    cells += [str(budget.id_size), str(budget.semantic_size), str(budget.total), f"{100 * budget.reduction:.2f}%"]
    return "\t".join([label] + cells)


def _sub_run(cfg: Dict[str, Any], prepared, run_dir: Path, label: str):
    model, report, _ = P.train(cfg, prepared, on_epoch=_log_epoch)
    sub = run_dir / label
    sub.mkdir()
    P.save_model(model, cfg, sub / "checkpoint.ckpt")
    (sub / "train_report.txt").write_text(report.lines(), encoding="utf-8")
    return P.evaluate_model(model, cfg, prepared, "test").values


def cmd_ablate(args, cfg, run_dir):
    prepared = P.prepare(cfg)
    m = prepared.dataset.num_items
    header = "\t".join(["mode", *metric_names(cfg), "id_size", "semantic_size", "total_size", "reduction"])
    rows = [header]
    for mode in (ID_ONLY, SEMANTIC_ONLY, UNIFIED):
        sub_cfg = C.resolve(C.apply_overrides(cfg, [f"tokenizer.mode={mode}"]))
        values = _sub_run(sub_cfg, prepared, run_dir, mode)
        rows.append(_metric_row(mode, values, _budget(sub_cfg, mode, m)))
        log.info("%s done", mode)
    text = "\n".join(rows) + "\n"
    print(text, end="")
    return {"ablation": _write(run_dir / "ablation.tsv", text)}


SWEEP_KEYS = {"D": "tokenizer.D", "K": "quantizer.K"}


def cmd_sweep(args, cfg, run_dir):
    prepared = P.prepare(cfg)
    m = prepared.dataset.num_items
    key = SWEEP_KEYS[args.param]
    header = "\t".join([args.param, *metric_names(cfg), "id_size", "semantic_size", "total_size", "reduction"])
    rows = [header]
    for value in args.values:
        sub_cfg = C.resolve(C.apply_overrides(cfg, [f"{key}={value}"]))
        values = _sub_run(sub_cfg, prepared, run_dir, f"{args.param}{value}")
        rows.append(_metric_row(str(value), values, _budget(sub_cfg, sub_cfg["tokenizer"]["mode"], m)))
    text = "\n".join(rows) + "\n"
    print(text, end="")
    return {"sweep": _write(run_dir / "sweep.tsv", text)}


COMMANDS = {
    "gen-data": (cmd_gen_data, "write a deterministic synthetic corpus (interactions, embeddings, clusters)"),
    "prepare": (cmd_prepare, "filter and split the configured data; write sequences and a summary"),
    "train": (cmd_train, "train a model; write checkpoint and per-epoch report"),
    "eval": (cmd_eval, "evaluate a checkpoint with sampled-negative ranking"),
    "diagnose": (cmd_diagnose, "codebook activation, coverage and per-category code histograms"),
    "export": (cmd_export, "write codewords, code assignments, ID rows and unified vectors"),
    "ablate": (cmd_ablate, "train id_only, semantic_only and unified with shared seeds; compare"),
    "sweep": (cmd_sweep, "train one model per ID dimension or codebook size"),
}
NEEDS_CHECKPOINT = {"eval", "diagnose", "export"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unirec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON run configuration or a manifest.json from an earlier run")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config key (value parsed as JSON); repeatable")
        p.add_argument("--out", default="runs", help="parent directory for run directories (default: runs)")
        p.add_argument("--seed", type=int, help="shorthand for train.seed and eval.seed")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name in NEEDS_CHECKPOINT:
            p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
        if name == "eval":
            p.add_argument("--split", choices=("test", "valid"), default="test")
        if name == "diagnose":
            p.add_argument("--top-n", type=int, default=3, help="codes per layer in the histograms")
        if name == "sweep":
            p.add_argument("--param", choices=sorted(SWEEP_KEYS), default="D")
            p.add_argument("--values", type=int, nargs="+", default=[0, 4, 8, 16])
    return parser


def _checkpoint_config(path: str) -> Dict[str, Any]:
    try:
        _, meta = load_checkpoint(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    if "config" not in meta:
        raise DataError(f"{path}: checkpoint carries no run configuration")
    return meta["config"]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    handler, _ = COMMANDS[args.command]
    try:
        base = None
        if args.command in NEEDS_CHECKPOINT:
            base = _checkpoint_config(args.checkpoint)
            if args.config is not None:
                raise C.ConfigError(["--config: the configuration comes from the checkpoint; use --set"])
        cfg = resolve_config(args, base)
        run_dir = run_directory(args.out, cfg, args.command)
        artifacts = handler(args, cfg, run_dir)
        extra = {"checkpoint": str(Path(args.checkpoint).resolve())} if args.command in NEEDS_CHECKPOINT else None
        write_manifest(run_dir, args.command, cfg, artifacts, extra)
        print(f"run_dir={run_dir}")
        return EXIT_OK
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
