"""Command-line entry point.

Subcommands: prepare, train, eval, explain, sweep, report. Runs are driven
by one declarative YAML/JSON config file; flags override config keys. Exit
codes: 0 success, 1 runtime failure, 2 configuration/validation error. All
outputs land under the configured output directory. The FALLACYLAB_CACHE
environment variable names a directory for reusable case-base encodings.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import augment as augment_mod
from . import corpus as corpus_mod
from .baseline import BaselinePipeline, train_baseline
from .curriculum import CurriculumPlan, run_plan, write_lineage
from .encoders import EncoderHandle, TinyEncoderConfig, resolve_encoder
from .errors import ConfigError, FallacyLabError, UnknownKnob, UnsupportedMethod
from .evalreport import EvalReport, aggregate_runs, render_per_class, render_table, zero_shot_eval
from .ibr import IbrConfig, IbrModel, IbrPipeline, train_ibr
from .ki import KiConfig, KiModel, KiPipeline, TripleStore, train_ki
from .models import EncoderClassifier, load_checkpoint, save_checkpoint
from .pbr import PbrConfig, PbrModel, PbrPipeline, train_pbr
from .retrieval import CaseBase, Retriever, build_case_base
from .taxonomy import FallacyTaxonomy
from .text import stable_hash

METHODS = ("baseline", "ibr", "pbr", "ki")
TASKS = ("binary", "coarse", "fine")

SWEEP_KNOBS = {
    "k_cases": ("ibr", int),
    "retriever": ("retriever", str),
    "attention_enabled": ("ibr", lambda v: v.lower() in ("1", "true", "on", "yes")),
    "num_positive_prototypes": ("pbr", int),
    "num_negative_prototypes": ("pbr", int),
    "similarity_ranking": ("ki", lambda v: v.lower() in ("1", "true", "on", "yes")),
    "branching_factor": ("ki", int),
    "hops": ("ki", int),
}


def _load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return cfg


def _encoder_cfg(cfg: dict) -> TinyEncoderConfig:
    enc = cfg.get("encoder", {})
    return TinyEncoderConfig(
        dim=enc.get("dim", 32),
        heads=enc.get("heads", 2),
        layers=enc.get("layers", 2),
        ffn_dim=enc.get("ffn_dim", 64),
        max_len=enc.get("max_len", 64),
        vocab_buckets=enc.get("vocab_buckets", 2048),
        dropout=enc.get("dropout", 0.0),
        seed=enc.get("seed", 0),
    )


def _retriever_handle(cfg: dict) -> EncoderHandle:
    r = cfg.get("retriever", {})
    return EncoderHandle(
        checkpoint_id=r.get("checkpoint_id", "hash"),
        embedding_dim=r.get("embedding_dim", 256),
        pooling=r.get("pooling", "mean"),
    )


def _prepared_dir(cfg: dict) -> Path:
    return Path(cfg.get("output_dir", "out")) / "prepared"


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config key {key!r} is required")
    return cfg[key]


# ---------------------------------------------------------------------------
# prepare


def _prepare_task(cfg: dict, task: str, taxonomy: FallacyTaxonomy, provenance, seed: int):
    data_cfg = cfg.get("data", {})
    if task not in data_cfg:
        raise ConfigError(f"no data entry for task {task!r}")
    entry = data_cfg[task]
    path = Path(entry["path"])
    if not path.exists():
        raise ConfigError(f"dataset path {path} does not exist")
    source = entry.get("source", "synthetic")
    granularity = "fine" if entry.get("derive_from_fine") else task
    splits = corpus_mod.load_dataset(
        path, source, granularity, taxonomy=taxonomy,
        ratios=tuple(entry.get("ratios", corpus_mod.DEFAULT_RATIOS)),
        seed=seed, provenance=provenance,
    )
    if entry.get("derive_from_fine"):
        splits = corpus_mod.derive_coarse_splits(splits, taxonomy, provenance=provenance)

    ptc_cfg = cfg.get("ptc")
    if ptc_cfg and task == "coarse" and "train" in splits:
        articles_path = Path(ptc_cfg["articles_path"])
        if not articles_path.exists():
            raise ConfigError(f"ptc articles path {articles_path} does not exist")
        articles = []
        with open(articles_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    articles.append((obj["sentences"], obj["labels"]))
        mapping = corpus_mod.load_ptc_mapping(ptc_cfg.get("mapping_path"))
        adapted = corpus_mod.adapt_ptc(articles, mapping, taxonomy, provenance=provenance)
        train = splits["train"]
        splits["train"] = corpus_mod.DatasetSplit(
            "train", list(train.arguments) + adapted, "coarse"
        )
        provenance.record("ptc_merged", count=len(adapted))

    aug_cfg = cfg.get("augment")
    if aug_cfg and aug_cfg.get("class_quota") and "train" in splits:
        acfg = augment_mod.AugmentationConfig(
            strategy=aug_cfg.get("strategy", "ress"),
            substitution_candidates=aug_cfg.get("substitution_candidates", 5),
            similarity_threshold=aug_cfg.get("similarity_threshold", 0.85),
            max_replacements_per_argument=aug_cfg.get("max_replacements_per_argument", 3),
            class_quota=aug_cfg.get("class_quota", {}),
        )
        syn_path = aug_cfg.get("synonyms_path")
        if not syn_path or not Path(syn_path).exists():
            raise ConfigError("augment.class_quota needs an existing synonyms_path table")
        candidates = augment_mod.TableCandidates.from_tsv(syn_path)
        scorer_cfg = aug_cfg.get("scorer", {})
        scorer = resolve_encoder(
            EncoderHandle(
                scorer_cfg.get("checkpoint_id", "hash"),
                scorer_cfg.get("embedding_dim", 256),
                scorer_cfg.get("pooling", "mean"),
            )
        )
        augmenter = augment_mod.build_augmenter(acfg, candidates, scorer)
        splits["train"] = augment_mod.augment_to_quota(
            splits["train"], acfg, seed, augmenter=augmenter, provenance=provenance
        )
    return splits


def cmd_prepare(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 13)
    taxonomy = FallacyTaxonomy.load(cfg.get("taxonomy_path"))
    out = _prepared_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    provenance = corpus_mod.ProvenanceLog()
    tasks = [args.task] if args.task else sorted(cfg.get("data", {}))
    for task in tasks:
        splits = _prepare_task(cfg, task, taxonomy, provenance, seed)
        for name, split in splits.items():
            corpus_mod.write_split(split, out / f"{task}_{name}.jsonl")
        counts = {name: split.class_counts() for name, split in splits.items()}
        print(f"prepared {task}: " + json.dumps(counts, sort_keys=True))
    provenance.write(out / "provenance.jsonl")
    return 0


# ---------------------------------------------------------------------------
# training


def _load_prepared_splits(cfg: dict, task: str, taxonomy: FallacyTaxonomy, seed: int):
    prepared = _prepared_dir(cfg)
    paths = {name: prepared / f"{task}_{name}.jsonl" for name in corpus_mod.SPLIT_NAMES}
    if all(p.exists() for p in paths.values()):
        splits = {}
        for name, p in paths.items():
            loaded = corpus_mod.load_dataset(p, "synthetic", task, taxonomy=taxonomy)
            splits[name] = corpus_mod.DatasetSplit(name, loaded[name].arguments, task)
        return splits
    provenance = corpus_mod.ProvenanceLog()
    return _prepare_task(cfg, task, taxonomy, provenance, seed)


def _cached_case_base(split, handle: EncoderHandle):
    encoder = resolve_encoder(handle)
    cache_dir = os.environ.get("FALLACYLAB_CACHE")
    if not cache_dir:
        return build_case_base(split, encoder)
    key = stable_hash(encoder.fingerprint, *(a.id for a in split.arguments))
    path = Path(cache_dir) / f"casebase-{key:x}.bin"
    if path.exists():
        return CaseBase.load(path)
    base = build_case_base(split, encoder)
    path.parent.mkdir(parents=True, exist_ok=True)
    base.save(path)
    return base


def _train_one(cfg: dict, method: str, task: str, splits, seed: int) -> tuple[object, EvalReport, dict]:
    """Train one (method, seed) run; returns (pipeline, report, extras)."""
    encoder_cfg = _encoder_cfg(cfg)
    epochs = cfg.get("epochs", 10)
    batch_size = cfg.get("batch_size", 16)
    lr = cfg.get("learning_rate", 5e-4)
    dataset_name = cfg.get("dataset_name", task)

    if method == "baseline":
        plan_cfg = cfg.get("curriculum", {})
        if plan_cfg.get("variant", "none") != "none":
            return _train_curriculum(cfg, task, seed)
        pipeline, report = train_baseline(
            splits, encoder_cfg, epochs=epochs, batch_size=batch_size,
            learning_rate=lr, seed=seed, dataset_name=dataset_name,
        )
        return pipeline, report, {}
    if method == "ibr":
        ibr_cfg = cfg.get("ibr", {})
        icfg = IbrConfig(
            k_cases=ibr_cfg.get("k_cases", 3),
            num_attention_heads=ibr_cfg.get("num_attention_heads", 8),
            attention_enabled=ibr_cfg.get("attention_enabled", True),
            classifier_hidden_dim=ibr_cfg.get("classifier_hidden_dim", 64),
            dropout=ibr_cfg.get("dropout", 0.1),
            encoder=encoder_cfg,
            separator_token=ibr_cfg.get("separator_token", "<SEP>"),
            retriever=_retriever_handle(cfg),
            similarity_threshold=ibr_cfg.get("similarity_threshold", 0.5),
            weight_decay=ibr_cfg.get("weight_decay", 0.0),
        )
        base = _cached_case_base(splits["train"], icfg.retriever)
        pipeline, report = train_ibr(
            splits, icfg, epochs=epochs, batch_size=batch_size, learning_rate=lr,
            seed=seed, dataset_name=dataset_name, case_base=base,
        )
        extras = {
            "case_base": {
                "ids": list(base.ids),
                "labels": list(base.labels),
                "texts": list(base.texts) if base.texts else None,
                "vectors": base.vectors,
                "fingerprint": base.fingerprint,
            },
            "retriever": vars(icfg.retriever) | {},
            "ibr": {
                "k_cases": icfg.k_cases,
                "num_attention_heads": icfg.num_attention_heads,
                "attention_enabled": icfg.attention_enabled,
                "classifier_hidden_dim": icfg.classifier_hidden_dim,
                "dropout": icfg.dropout,
                "separator_token": icfg.separator_token,
                "similarity_threshold": icfg.similarity_threshold,
            },
        }
        return pipeline, report, extras
    if method == "pbr":
        pbr_cfg = cfg.get("pbr", {})
        pcfg = PbrConfig(
            num_positive_prototypes=pbr_cfg.get("num_positive_prototypes", 49),
            num_negative_prototypes=pbr_cfg.get("num_negative_prototypes", 1),
            use_none_class=pbr_cfg.get("use_none_class", True),
            aux_loss_weight_examples_to_prototypes=pbr_cfg.get("aux1", 1.0),
            aux_loss_weight_prototypes_to_examples=pbr_cfg.get("aux2", 1.0),
            class_weighting=pbr_cfg.get("class_weighting", True),
            early_stopping_patience=pbr_cfg.get("early_stopping_patience", 10),
            encoder=encoder_cfg,
        )
        pipeline, report = train_pbr(
            splits, pcfg, epochs=epochs, batch_size=batch_size, learning_rate=lr,
            seed=seed, dataset_name=dataset_name,
        )
        from .pbr import write_prototype_export

        write_prototype_export(
            pipeline.model,
            Path(cfg.get("output_dir", "out")) / f"prototypes-{task}-seed{seed}",
            splits["train"], pipeline.train_embeddings,
        )
        extras = {
            "pbr": {
                "num_positive_prototypes": pcfg.num_positive_prototypes,
                "num_negative_prototypes": pcfg.num_negative_prototypes,
                "use_none_class": pcfg.use_none_class,
            },
            "train_ids": [a.id for a in splits["train"].arguments],
            "train_texts": splits["train"].texts(),
            "train_labels": splits["train"].labels(),
            "train_embeddings": pipeline.train_embeddings,
        }
        return pipeline, report, extras
    if method == "ki":
        ki_cfg = cfg.get("ki", {})
        if not ki_cfg.get("kg_path"):
            raise ConfigError("method 'ki' requires ki.kg_path")
        kg_path = Path(ki_cfg["kg_path"])
        if not kg_path.exists():
            raise ConfigError(f"kg path {kg_path} does not exist")
        kcfg = KiConfig(
            branching_factor=ki_cfg.get("branching_factor", 5),
            hops=ki_cfg.get("hops", 1),
            similarity_ranking=ki_cfg.get("similarity_ranking", True),
            learning_rate=ki_cfg.get("learning_rate", 2e-5),
            dropout=ki_cfg.get("dropout", 0.5),
            epochs=ki_cfg.get("epochs", cfg.get("epochs", 5)),
            encoder=encoder_cfg,
        )
        store = TripleStore.from_tsv(kg_path)
        ranking_encoder = resolve_encoder(_retriever_handle(cfg)) if kcfg.similarity_ranking else None
        pipeline, report = train_ki(
            splits, kcfg, store=store, ranking_encoder=ranking_encoder,
            batch_size=batch_size, learning_rate=lr, epochs=epochs,
            seed=seed, dataset_name=dataset_name,
        )
        extras = {
            "ki": {
                "kg_path": str(kg_path),
                "branching_factor": kcfg.branching_factor,
                "hops": kcfg.hops,
                "similarity_ranking": kcfg.similarity_ranking,
                "dropout": kcfg.dropout,
            },
            "retriever": vars(_retriever_handle(cfg)) | {},
        }
        return pipeline, report, extras
    raise ConfigError(f"unknown method {method!r}")


def _train_curriculum(cfg: dict, task: str, seed: int):
    from .baseline import baseline_model_factory, baseline_stage_trainer

    taxonomy = FallacyTaxonomy.load(cfg.get("taxonomy_path"))
    plan = CurriculumPlan.from_dict(cfg.get("curriculum", {}))
    datasets = {
        stage: _load_prepared_splits(cfg, stage, taxonomy, seed)
        for stage in plan.stages(task)
    }
    results, lineage = run_plan(
        plan, datasets, baseline_model_factory(_encoder_cfg(cfg)),
        baseline_stage_trainer, seed, single_task=task,
    )
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    write_lineage(lineage, out / f"lineage-seed{seed}.json")
    final = results[-1]
    model = EncoderClassifier(_encoder_cfg(cfg), final.report.label_space)
    model.load_state_dict(final.state_dict)
    return BaselinePipeline(model), final.report, {"lineage": lineage}


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    method = args.method or _require(cfg, "method")
    task = args.task or _require(cfg, "task")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {TASKS}")
    seeds = args.seeds or cfg.get("seeds", [11, 12, 13])
    if args.epochs is not None:
        cfg["epochs"] = args.epochs
    taxonomy = FallacyTaxonomy.load(cfg.get("taxonomy_path"))
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)

    reports = []
    for seed in seeds:
        splits = _load_prepared_splits(cfg, task, taxonomy, seed)
        pipeline, report, extras = _train_one(cfg, method, task, splits, seed)
        reports.append(report)
        state = pipeline.model.state_dict()
        save_checkpoint(
            out / f"{method}-{task}-seed{seed}.pt",
            method=method, task=task, classes=report.label_space,
            state_dict=state,
            config={"encoder": vars(_encoder_cfg(cfg)) | {}},
            extras=extras,
        )
        if report.explanations:
            report.write_explanations(out / f"{method}-{task}-seed{seed}-explanations.jsonl")
    merged = aggregate_runs(reports)
    (out / f"{method}-{task}-report.json").write_text(merged.to_json(), encoding="utf-8")
    runtime_lines = ["epoch_seconds per run:"]
    for seed, report in zip(seeds, reports):
        secs = " ".join(f"{s:.2f}" for s in report.epoch_seconds)
        runtime_lines.append(f"  seed {seed}: {secs}")
    (out / f"{method}-{task}-runtime.txt").write_text("\n".join(runtime_lines) + "\n", encoding="utf-8")
    print(render_table([merged]))
    return 0


# ---------------------------------------------------------------------------
# checkpoint reconstruction


def _pipeline_from_checkpoint(path):
    ckpt = load_checkpoint(path)
    method = ckpt["method"]
    classes = ckpt["classes"]
    enc = TinyEncoderConfig(**ckpt["config"]["encoder"])
    extras = ckpt.get("extras", {})
    if method == "baseline":
        model = EncoderClassifier(enc, classes)
        model.load_state_dict(ckpt["state_dict"])
        return BaselinePipeline(model)
    if method == "ibr":
        ibr_kwargs = extras["ibr"]
        handle = EncoderHandle(**extras["retriever"])
        icfg = IbrConfig(encoder=enc, retriever=handle, **ibr_kwargs)
        model = IbrModel(icfg, classes)
        model.load_state_dict(ckpt["state_dict"])
        cb = extras["case_base"]
        base = CaseBase.from_vectors(
            cb["ids"], cb["labels"], np.asarray(cb["vectors"]), cb["fingerprint"], cb["texts"]
        )
        return IbrPipeline(model, Retriever(resolve_encoder(handle), base))
    if method == "pbr":
        pcfg = PbrConfig(encoder=enc, **extras["pbr"])
        task_classes = [c for c in classes]
        model = PbrModel(pcfg, task_classes)
        model.load_state_dict(ckpt["state_dict"])
        train_split = corpus_mod.DatasetSplit(
            "train",
            [
                corpus_mod.Argument(id=i, text=t, binary_label=None)
                for i, t in zip(extras["train_ids"], extras["train_texts"])
            ],
            "binary",
        )
        return PbrPipeline(model, train_split, np.asarray(extras["train_embeddings"]))
    if method == "ki":
        ki_kwargs = dict(extras["ki"])
        kg_path = ki_kwargs.pop("kg_path")
        kcfg = KiConfig(encoder=enc, **ki_kwargs)
        model = KiModel(kcfg, classes)
        model.load_state_dict(ckpt["state_dict"])
        store = TripleStore.from_tsv(kg_path) if Path(kg_path).exists() else TripleStore()
        handle = EncoderHandle(**extras["retriever"])
        ranking = resolve_encoder(handle) if kcfg.similarity_ranking else None
        return KiPipeline(model, store, ranking)
    raise ConfigError(f"checkpoint has unknown method {method!r}")


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise ConfigError(f"checkpoint {args.checkpoint} does not exist")
    if not Path(args.data).exists():
        raise ConfigError(f"data file {args.data} does not exist")
    ckpt = load_checkpoint(args.checkpoint)
    pipeline = _pipeline_from_checkpoint(args.checkpoint)
    taxonomy = FallacyTaxonomy.load()
    loaded = corpus_mod.load_dataset(args.data, args.source, ckpt["task"], taxonomy=taxonomy)
    split_name = args.split if args.split in loaded else sorted(loaded)[0]
    split = loaded[split_name]
    report = zero_shot_eval(
        pipeline, split, dataset=Path(args.data).stem, method=ckpt["method"]
    )
    if not args.zero_shot:
        report.out_of_domain = False
    print(report.to_json())
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_explain(args) -> int:
    if not Path(args.checkpoint).exists():
        raise ConfigError(f"checkpoint {args.checkpoint} does not exist")
    pipeline = _pipeline_from_checkpoint(args.checkpoint)
    record = pipeline.explain(args.text)
    print(json.dumps(record, sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------------------
# sweeps


def _parse_grid(settings: list[str]) -> dict[str, list]:
    grid = {}
    for setting in settings:
        if "=" not in setting:
            raise UnknownKnob(f"grid setting {setting!r} is not knob=v1,v2,...")
        knob, _, values = setting.partition("=")
        if knob not in SWEEP_KNOBS:
            raise UnknownKnob(
                f"unknown knob {knob!r}; valid knobs: {sorted(SWEEP_KNOBS)}"
            )
        _, parse = SWEEP_KNOBS[knob]
        grid[knob] = [parse(v) for v in values.split(",")]
    return grid


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    grid = _parse_grid(args.set)
    if not grid:
        raise UnknownKnob("sweep needs at least one --set knob=v1,v2")
    method = args.method or _require(cfg, "method")
    task = args.task or _require(cfg, "task")
    seed = (args.seeds or cfg.get("seeds", [11]))[0]
    taxonomy = FallacyTaxonomy.load(cfg.get("taxonomy_path"))
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)

    import itertools

    knobs = sorted(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in knobs)):
        run_cfg = json.loads(json.dumps(cfg))  # deep copy
        for knob, value in zip(knobs, combo):
            section, _ = SWEEP_KNOBS[knob]
            if section == "retriever":
                run_cfg.setdefault("retriever", {})["checkpoint_id"] = value
            else:
                run_cfg.setdefault(section, {})[knob] = value
        splits = _load_prepared_splits(run_cfg, task, taxonomy, seed)
        _, report, _ = _train_one(run_cfg, method, task, splits, seed)
        setting = dict(zip(knobs, combo))
        rows.append((setting, report))
        tag = "-".join(f"{k}={v}" for k, v in setting.items())
        (out / f"sweep-{method}-{task}-{tag}.json").write_text(report.to_json(), encoding="utf-8")
    rows.sort(key=lambda r: -r[1].mean("f1"))
    lines = ["setting\tf1\taccuracy"]
    for setting, report in rows:
        tag = ",".join(f"{k}={v}" for k, v in setting.items())
        lines.append(f"{tag}\t{report.mean('f1'):.4f}\t{report.mean('accuracy'):.4f}")
    summary = "\n".join(lines)
    (out / f"sweep-{method}-{task}-summary.tsv").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    return 0


# ---------------------------------------------------------------------------
# report rendering


def cmd_report(args) -> int:
    if args.mode != "render":
        raise ConfigError(f"unknown report mode {args.mode!r}; use 'render'")
    reports = []
    for path in args.inputs:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"report file {p} does not exist")
        reports.append(EvalReport.from_json(p.read_text(encoding="utf-8")))
    if args.kind == "per-class":
        text = "\n\n".join(render_per_class(r) for r in reports)
    else:
        text = render_table(reports, fmt=args.format)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fallacylab",
        description="Three-stage logical fallacy identification experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="materialize splits with provenance")
    p.add_argument("--config", required=True)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train one method on one task")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--epochs", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--source", default="synthetic", choices=corpus_mod.SOURCES)
    p.add_argument("--split", default="test")
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("explain", help="print a prediction with its explanation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("sweep", help="run an ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KNOB=V1,V2")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--seeds", type=int, nargs="+")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="render result tables")
    p.add_argument("mode", choices=["render"])
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--format", default="text", choices=["text", "csv"])
    p.add_argument("--kind", default="main", choices=["main", "per-class"])
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UnknownKnob, UnsupportedMethod) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FallacyLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
