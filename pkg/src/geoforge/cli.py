"""``forge`` command line: generate, validate, stats, eval.

Usage:
    forge generate --config run.yaml --offline --seed 7 --output out/
    forge generate --config run.yaml --tasks refer,region
    forge validate data/manifest.jsonl
    forge stats out/train.jsonl
    forge eval ground --pred preds.jsonl --truth out/benchmark/grounding.jsonl
    forge eval classify --pred preds.jsonl --truth aid_truth.jsonl

Flags given on the command line override the config file. The chat endpoint
can also be set with GEOFORGE_CHAT_ENDPOINT.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import yaml

from geoforge.annotations import ManifestError, iter_records, load_corpus, merge_pseudo_labels, parse_record
from geoforge.attributes import AttributeConfig, FileRasterSource, compute_size_thresholds, extract_attributes
from geoforge.chat import ENDPOINT_ENV, HttpChatClient, OfflineChatClient
from geoforge.evaluation import (
    ClosedKind,
    format_table,
    load_predictions,
    load_truth,
    missing_fraction,
    score_closed_answers,
    score_grounded_description,
    score_grounding,
    score_region_captions,
)
from geoforge.forge import (
    DEFAULT_BUDGET,
    ChatConfig,
    ForgeConfig,
    InstructionRecord,
    Task,
    build_benchmark,
    build_contexts,
    config_hash,
    describe,
    emit_shards,
    generate,
    _rng,
)

log = logging.getLogger("geoforge")


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    manifest: str
    output: str = "out"
    pseudo_manifest: str | None = None
    registry: Any = None
    images_root: str | None = None
    log_level: str = "INFO"
    forge: ForgeConfig = field(default_factory=ForgeConfig)
    raw: dict = field(default_factory=dict)


def _resolve(base: Path, p: str | None) -> str | None:
    if p is None:
        return None
    path = Path(p)
    return str(path if path.is_absolute() else base / path)


def load_run_config(path: str | Path) -> RunConfig:
    """Read a YAML run config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict) or "manifest" not in raw:
        raise CliError(f"config {path} must be a mapping with a 'manifest' key")
    base = path.parent
    counts = dict(DEFAULT_BUDGET)
    if "tasks" in raw:
        counts = {t: 0 for t in Task}
        for name, n in (raw["tasks"] or {}).items():
            try:
                counts[Task.parse(name)] = int(n)
            except ValueError:
                raise CliError(f"config {path}: unknown task {name!r}") from None
    attrs = AttributeConfig(**(raw.get("attributes") or {}))
    chat = ChatConfig(**(raw.get("chat") or {}))
    if chat.prompts_dir:
        chat = ChatConfig(**{**asdict(chat), "prompts_dir": _resolve(base, chat.prompts_dir)})
    try:
        forge = ForgeConfig(
            task_counts=counts,
            seed=int(raw.get("seed", 0)),
            split=float(raw.get("split", 0.95)),
            attributes=attrs,
            chat=chat,
            pseudo_iou=float(raw.get("pseudo_iou", 0.5)),
        )
    except ValueError as exc:
        raise CliError(f"config {path}: {exc}") from None
    return RunConfig(
        manifest=_resolve(base, raw["manifest"]),
        output=_resolve(base, raw.get("output", "out")),
        pseudo_manifest=_resolve(base, raw.get("pseudo_manifest")),
        registry=raw.get("registry"),
        images_root=_resolve(base, raw.get("images_root")),
        log_level=str(raw.get("log_level", "INFO")),
        forge=forge,
        raw=raw,
    )


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def cmd_generate(args: argparse.Namespace) -> int:
    if not args.config:
        raise CliError("generate needs --config")
    cfg = load_run_config(args.config)
    forge_cfg = cfg.forge
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    chat = forge_cfg.chat
    if args.offline:
        chat = ChatConfig(**{**asdict(chat), "offline": True})
    forge_cfg = ForgeConfig(
        task_counts=forge_cfg.task_counts,
        seed=overrides.get("seed", forge_cfg.seed),
        split=forge_cfg.split,
        attributes=AttributeConfig(**{**asdict(forge_cfg.attributes), "seed": overrides.get("seed", forge_cfg.seed)}),
        chat=chat,
        pseudo_iou=forge_cfg.pseudo_iou,
    )
    out = Path(args.output or cfg.output)
    tasks = None
    if args.tasks:
        try:
            tasks = [Task.parse(t) for t in args.tasks.split(",") if t.strip()]
        except ValueError as exc:
            raise CliError(f"--tasks: {exc}") from None

    for p in filter(None, (cfg.manifest, cfg.pseudo_manifest)):
        if not Path(p).exists():
            raise CliError(f"manifest not found: {p}")
    corpus = load_corpus(cfg.manifest, cfg.registry)
    if cfg.pseudo_manifest:
        corpus = merge_pseudo_labels(corpus, load_corpus(cfg.pseudo_manifest), forge_cfg.pseudo_iou)
    rasters = FileRasterSource(cfg.images_root or corpus.root)
    extraction = extract_attributes(corpus, rasters, forge_cfg.attributes, jobs=args.jobs)

    if forge_cfg.chat.offline:
        client = OfflineChatClient()
    else:
        client = HttpChatClient.from_env(
            endpoint=forge_cfg.chat.endpoint or os.environ.get(ENDPOINT_ENV) or "http://localhost:8000/v1",
            model=forge_cfg.chat.model,
            temperature=forge_cfg.chat.temperature,
            timeout=forge_cfg.chat.timeout,
        )
    result = generate(corpus, extraction, forge_cfg, client, tasks)

    provenance = {
        "config_hash": config_hash({"raw": cfg.raw, "seed": forge_cfg.seed, "offline": forge_cfg.chat.offline,
                                    "tasks": sorted(t.value for t in tasks) if tasks else None}),
        "seed": forge_cfg.seed,
        "offline": forge_cfg.chat.offline,
        "failed_images": extraction.failed_images,
        "budget": {t.value: asdict(r) for t, r in result.report.items()},
    }
    stats = emit_shards(result.records, out, forge_cfg.seed, forge_cfg.split, provenance)

    test_ids = set(stats["test_images"])
    contexts = [c for c in build_contexts(corpus, extraction) if c.image.path in test_ids]
    exprs = {c.image.id: describe(c, _rng(forge_cfg.seed, "describe", c.image.id)) for c in contexts}
    bench = build_benchmark(contexts, exprs, forge_cfg.seed)
    (out / "benchmark").mkdir(exist_ok=True)
    for name, rows in bench.items():
        _write_jsonl(out / "benchmark" / f"{name}.jsonl", rows)

    print(format_table(f"records (seed {forge_cfg.seed})",
                       [(t.value, f"{r.emitted}/{r.requested}") for t, r in result.report.items()]))
    print(f"train: {stats['shards']['train']['records']}  test: {stats['shards']['test']['records']}  -> {out}")
    warnings = bool(extraction.failed_images) or any(r.failures for r in result.report.values())
    return 1 if (args.strict and warnings) else 0


def _detect_kind(obj: Any) -> str:
    if isinstance(obj, dict):
        if "conversations" in obj:
            return "shard"
        if isinstance(obj.get("image"), dict):
            return "manifest"
        if "output" in obj:
            return "predictions"
        if "answer" in obj:
            return "truth"
    return "unknown"


def cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.exists():
        raise CliError(f"file not found: {path}")
    kind = None
    n = 0
    try:
        for lineno, obj in iter_records(path):
            k = _detect_kind(obj)
            kind = kind or k
            if kind == "unknown":
                raise ManifestError("unrecognized record type", lineno)
            if k != kind:
                raise ManifestError(f"expected a {kind} record, got {k}", lineno)
            try:
                if kind == "manifest":
                    parse_record(obj, lineno)
                elif kind == "shard":
                    InstructionRecord.from_json(obj)
                elif kind == "predictions":
                    if "id" not in obj:
                        raise ValueError("missing 'id'")
                elif kind == "truth":
                    if "id" not in obj:
                        raise ValueError("missing 'id'")
            except ManifestError:
                raise
            except (KeyError, ValueError, TypeError) as exc:
                raise ManifestError(str(exc), lineno) from None
            n += 1
    except ManifestError as exc:
        print(f"{path}: invalid: {exc}", file=sys.stderr)
        return 1
    print(f"{path}: ok ({n} {kind or 'empty'} records)")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.exists():
        raise CliError(f"file not found: {path}")
    first = next(iter_records(path), (0, None))[1]
    kind = _detect_kind(first)
    report: dict[str, Any] = {"path": str(path), "kind": kind, "seed": args.seed}
    if kind == "manifest":
        corpus = load_corpus(path)
        hist: dict[str, int] = {}
        for _, inst in corpus.all_instances():
            hist[inst.class_name] = hist.get(inst.class_name, 0) + 1
        thresholds = compute_size_thresholds(corpus) if len(corpus) else None
        report.update(
            images=len(corpus.images),
            instances=len(corpus),
            classes=dict(sorted(hist.items())),
            area_percentiles={c: {"p20": p20, "p80": p80}
                              for c, (p20, p80) in sorted(thresholds.per_class.items())} if thresholds else {},
        )
        print(format_table(f"{path.name}: {len(corpus.images)} images, {len(corpus)} instances",
                           [(c, n) for c, n in sorted(hist.items())]))
    elif kind == "shard":
        per_task: dict[str, int] = {}
        images = set()
        for _, obj in iter_records(path):
            per_task[obj["task"]] = per_task.get(obj["task"], 0) + 1
            images.add(obj["image"])
        report.update(records=sum(per_task.values()), images=len(images), per_task=dict(sorted(per_task.items())))
        print(format_table(f"{path.name}: {report['records']} records, {len(images)} images",
                           sorted(per_task.items())))
    else:
        raise CliError(f"stats supports manifests and shards, not {kind}")
    if args.output:
        Path(args.output).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def _scorecard_rows(card) -> list[tuple[str, Any]]:
    rows = []
    for k, v in card.to_json().items():
        if k == "warnings":
            continue
        if isinstance(v, dict):
            for k2, v2 in v.items():
                if isinstance(v2, dict):
                    rows.extend((f"{k}.{k2}.{k3}", v3) for k3, v3 in v2.items())
                else:
                    rows.append((f"{k}.{k2}", v2))
        else:
            rows.append((k, v))
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    for p in (args.pred, args.truth):
        if not Path(p).exists():
            raise CliError(f"file not found: {p}")
    try:
        preds = load_predictions(args.pred)
        truth = load_truth(args.truth)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    miss = missing_fraction(preds, truth)
    sub = args.eval_command
    if sub == "ground":
        card = score_grounding(preds, truth, args.tau)
    elif sub == "describe":
        card = score_grounded_description(preds, truth)
    elif sub == "region":
        card = score_region_captions(preds, truth)
    elif sub == "vqa":
        card = score_closed_answers(preds, truth, ClosedKind(args.kind))
    else:
        classes = None
        if args.classes:
            p = Path(args.classes)
            classes = [c.strip() for c in (p.read_text().splitlines() if p.exists() else args.classes.split(","))
                       if c.strip()]
        card = score_closed_answers(preds, truth, ClosedKind.CLASSIFICATION, classes)
    print(format_table(f"eval {sub}: {len(truth)} questions", _scorecard_rows(card)))
    out = Path(args.output) if args.output else Path(args.pred).with_suffix(f".{sub}.scorecard.json")
    settings = {k: v for k, v in vars(args).items() if k != "func"}
    report = {"subcommand": sub, "pred": str(args.pred), "truth": str(args.truth), "seed": args.seed,
              "config_hash": config_hash(settings), "missing_fraction": miss, "scorecard": card.to_json()}
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if miss > args.max_missing:
        print(f"error: {miss:.1%} of questions have no prediction (limit {args.max_missing:.1%})", file=sys.stderr)
        return 1
    if args.strict and card.warnings:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--strict", action="store_true", help="treat warnings as errors")
    common.add_argument("--output", help="output directory or report file")
    common.add_argument("--log-level", default=None)

    ap = argparse.ArgumentParser(prog="forge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="build instruction shards and benchmark files")
    g.add_argument("--offline", action="store_true", help="use the deterministic chat stub")
    g.add_argument("--tasks", help="comma-separated task filter, e.g. refer,region")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", parents=[common], help="check a manifest, shard, truth or prediction file")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", parents=[common], help="summarize a manifest or shard")
    s.add_argument("path")
    s.set_defaults(func=cmd_stats)

    e = sub.add_parser("eval", help="score predictions against a benchmark file")
    esub = e.add_subparsers(dest="eval_command", required=True)
    for name, helptext in (("ground", "referring/grounding acc@tau"), ("describe", "grounded descriptions"),
                           ("region", "region captions"), ("vqa", "closed VQA answers"),
                           ("classify", "scene classification")):
        p = esub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--pred", required=True)
        p.add_argument("--truth", required=True)
        p.add_argument("--max-missing", type=float, default=0.1,
                       help="fail when more than this fraction of questions lack predictions")
        if name == "ground":
            p.add_argument("--tau", type=float, default=0.5)
        if name == "vqa":
            p.add_argument("--kind", default="vqa_yesno", choices=["vqa_yesno", "rural_urban"])
        if name == "classify":
            p.add_argument("--classes", help="file with one class per line, or comma-separated list")
        p.set_defaults(func=cmd_eval)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or "WARNING"
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING),
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ManifestError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
