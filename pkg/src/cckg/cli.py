"""Operator command line: build, paths, stats, index, retrieve, bench,
sample, and score subcommands over config files.

Every artifact-producing command writes a manifest next to its outputs
recording the command, seed, config fingerprint, backend identity, and
input/output digests. Outputs are deterministic given identical inputs
and seeds; manifests differ only in timestamps. Exit codes: 0 ok,
2 configuration, 3 input format, 4 backend.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import bench as bench_mod
from . import evalkit
from .augment import (
    AugmentationMode,
    AugmentationSpec,
    build_index,
    items_from_assertions,
    items_from_paths,
    load_external_assertions,
    load_index,
    save_index,
    top_k,
)
from .construction import (
    ConfigError,
    PipelineConfig,
    Unparseable,
    load_taxonomy,
    run_pipeline,
)
from .embedding import EmbedderConfig, HashedBagEmbedder, make_embedder
from .gateway import (
    BackendRejected,
    BackendUnavailable,
    Gateway,
    HttpChatBackend,
    ScriptedBackend,
)
from .kb import FormatError, compute_stats, load_kb, save_kb
from .pathing import PathLimits, enumerate_simple_paths, load_paths, save_paths, select_sources

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_BACKEND = 4

_MODES = {
    "base": AugmentationMode.BASE,
    "cot": AugmentationMode.COT,
    "asrt": AugmentationMode.ASSERTIONS,
    "path": AugmentationMode.PATH,
}


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    *,
    seed: int | None,
    config_fingerprint: str,
    backend: str,
    inputs: list[Path],
    outputs: list[Path],
) -> None:
    manifest = {
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config_fingerprint": config_fingerprint,
        "backend": backend,
        "inputs": {str(p): _digest(p) for p in inputs if p.exists()},
        "outputs": {str(p): _digest(p) for p in outputs if p.exists()},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8"
    )


def _fingerprint_config(resolved: dict) -> str:
    return hashlib.sha256(
        json.dumps(resolved, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def _load_config(path: str | None) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return data, p


def _resolve(cfg: dict, args, key: str, default=None):
    """Precedence: command-line flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _relative_to_config(value: str, config_path: Path | None) -> Path:
    p = Path(value)
    if not p.is_absolute() and config_path is not None:
        return config_path.parent / p
    return p


def _make_gateway(cfg: dict, args, config_path: Path | None) -> Gateway:
    backend_kind = _resolve(cfg, args, "backend", "mock")
    parallel = int(_resolve(cfg, args, "parallel", 4))
    retries = int(cfg.get("retries", 3))
    if backend_kind == "mock":
        fixtures = _resolve(cfg, args, "fixtures")
        if not fixtures:
            raise ConfigError("mock backend needs a fixtures file ('fixtures')")
        backend = ScriptedBackend.from_file(_relative_to_config(str(fixtures), config_path))
    elif backend_kind == "remote":
        endpoint = _resolve(cfg, args, "endpoint")
        model = _resolve(cfg, args, "model")
        if not endpoint or not model:
            raise ConfigError("remote backend needs 'endpoint' and 'model'")
        backend = HttpChatBackend(
            str(endpoint), str(model), api_key_env=cfg.get("api_key_env", "CCKG_API_KEY")
        )
    else:
        raise ConfigError(f"unknown backend {backend_kind!r}")
    return Gateway(backend, max_attempts=retries, max_in_flight=parallel)


def _make_embedder(cfg: dict):
    embed_cfg = cfg.get("embedder", {})
    if not isinstance(embed_cfg, dict):
        raise ConfigError("'embedder' must be an object")
    try:
        return make_embedder(EmbedderConfig(**embed_cfg))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad embedder config: {exc}") from None


def _embedder_for_fingerprint(fingerprint: str, cfg: dict):
    if fingerprint.startswith("hashed-bag-"):
        return HashedBagEmbedder(int(fingerprint.rsplit("-", 1)[1]))
    embedder = _make_embedder(cfg)
    if embedder.fingerprint != fingerprint:
        raise ConfigError(
            f"index needs embedder {fingerprint!r}; configured {embedder.fingerprint!r}"
        )
    return embedder


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build(args) -> int:
    cfg, config_path = _load_config(args.config)
    country = _resolve(cfg, args, "country")
    language = _resolve(cfg, args, "language")
    if not country or not language:
        raise ConfigError("build needs 'country' and 'language'")
    taxonomy_ref = _resolve(cfg, args, "taxonomy")
    if not taxonomy_ref:
        raise ConfigError("build needs a 'taxonomy' file")
    taxonomy_path = _relative_to_config(str(taxonomy_ref), config_path)
    taxonomy = load_taxonomy(taxonomy_path)
    pipeline_cfg = PipelineConfig(
        country=str(country),
        language=str(language),
        taxonomy=taxonomy,
        depth=int(_resolve(cfg, args, "depth", 3)),
        temperature=float(_resolve(cfg, args, "temperature", 1.0)),
        tau=float(_resolve(cfg, args, "tau", 0.8)),
        frontier_cap=int(_resolve(cfg, args, "cap", 6)),
        seed=int(_resolve(cfg, args, "seed", 0)),
    )
    gateway = _make_gateway(cfg, args, config_path)
    embedder = _make_embedder(cfg)
    kb, report = run_pipeline(pipeline_cfg, gateway, embedder)

    out = _out_dir(args)
    kb_file = out / "kb.jsonl"
    paths_file = out / "paths.jsonl"
    report_file = out / "report.txt"
    save_kb(kb, kb_file)
    enumeration = enumerate_simple_paths(kb, select_sources(kb))
    save_paths(enumeration.paths, paths_file)
    report_file.write_text(report.summary(), encoding="utf-8")
    print(report.summary(), end="")
    resolved = {
        "country": pipeline_cfg.country,
        "language": pipeline_cfg.language,
        "depth": pipeline_cfg.depth,
        "temperature": pipeline_cfg.temperature,
        "tau": pipeline_cfg.tau,
        "cap": pipeline_cfg.frontier_cap,
        "seed": pipeline_cfg.seed,
        "taxonomy": str(taxonomy_path),
    }
    inputs = [p for p in (config_path, taxonomy_path) if p is not None]
    _write_manifest(
        out, "build",
        seed=pipeline_cfg.seed,
        config_fingerprint=_fingerprint_config(resolved),
        backend=gateway.backend_id,
        inputs=inputs,
        outputs=[kb_file, paths_file, report_file],
    )
    return EXIT_OK


def cmd_paths(args) -> int:
    kb_file = Path(args.kb)
    kb = load_kb(kb_file)
    limits = PathLimits(
        max_depth=args.max_depth,
        max_paths_per_source=args.max_per_source,
        global_budget=args.budget,
    )
    enumeration = enumerate_simple_paths(kb, select_sources(kb), limits)
    out = _out_dir(args)
    paths_file = out / "paths.jsonl"
    save_paths(enumeration.paths, paths_file)
    print(f"{len(enumeration.paths)} paths" + (" (truncated)" if enumeration.truncated else ""))
    _write_manifest(
        out, "paths",
        seed=None,
        config_fingerprint=_fingerprint_config(
            {"max_depth": limits.max_depth, "max_per_source": limits.max_paths_per_source,
             "budget": limits.global_budget}
        ),
        backend="none",
        inputs=[kb_file],
        outputs=[paths_file],
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    kb_file = Path(args.kb)
    kb = load_kb(kb_file)
    paths = load_paths(Path(args.paths), kb) if args.paths else []
    stats = compute_stats(kb, paths, eval_assertions=args.eval_assertions)
    payload = {
        "unique_nodes": stats.unique_nodes,
        "total_assertions": stats.total_assertions,
        "unique_paths": stats.unique_paths,
        "avg_path_length": stats.avg_path_length,
        "eval_assertions": stats.eval_assertions,
    }
    print(json.dumps(payload, indent=2))
    if args.out:
        out = _out_dir(args)
        stats_file = out / "stats.json"
        stats_file.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        inputs = [kb_file] + ([Path(args.paths)] if args.paths else [])
        _write_manifest(
            out, "stats",
            seed=None,
            config_fingerprint=_fingerprint_config(payload),
            backend="none",
            inputs=inputs,
            outputs=[stats_file],
        )
    return EXIT_OK


def cmd_index(args) -> int:
    cfg, _config_path = _load_config(args.config)
    embedder = _make_embedder(cfg)
    inputs: list[Path] = []
    if args.kind == "assertions":
        kb_file = Path(args.kb)
        inputs.append(kb_file)
        items = items_from_assertions(load_kb(kb_file).assertions)
    elif args.kind == "paths":
        if not args.paths:
            raise ConfigError("--kind paths needs --paths")
        kb_file = Path(args.kb)
        paths_file = Path(args.paths)
        inputs += [kb_file, paths_file]
        kb = load_kb(kb_file)
        items = items_from_paths(load_paths(paths_file, kb))
    else:  # external
        if not args.external:
            raise ConfigError("--kind external needs --external")
        ext_file = Path(args.external)
        inputs.append(ext_file)
        items = load_external_assertions(ext_file)
    index = build_index(items, embedder)
    out = _out_dir(args)
    index_file = out / "index.json"
    save_index(index, index_file)
    print(f"indexed {len(index)} items ({index.fingerprint})")
    _write_manifest(
        out, "index",
        seed=None,
        config_fingerprint=_fingerprint_config({"kind": args.kind, "fingerprint": index.fingerprint}),
        backend="none",
        inputs=inputs,
        outputs=[index_file],
    )
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cfg, _config_path = _load_config(args.config)
    index = load_index(Path(args.index))
    embedder = _embedder_for_fingerprint(index.fingerprint, cfg)
    hits = top_k(index, args.query, args.k, embedder, kind=args.kind)
    for item_id, score in hits:
        text = " ".join(index.item(item_id).text.split())
        print(f"{item_id}\t{score:.4f}\t{text}")
    return EXIT_OK


def _augmentation_spec(args, cfg: dict):
    mode = _MODES[args.mode]
    if mode in (AugmentationMode.BASE, AugmentationMode.COT):
        return AugmentationSpec(mode), None
    if not args.index:
        raise ConfigError(f"mode {args.mode!r} needs --index")
    index = load_index(Path(args.index))
    embedder = _embedder_for_fingerprint(index.fingerprint, cfg)
    return AugmentationSpec(mode, k=args.k or 0, index=index), embedder


def cmd_bench(args) -> int:
    cfg, config_path = _load_config(args.config)
    gateway = _make_gateway(cfg, args, config_path)
    spec, embedder = _augmentation_spec(args, cfg)
    out = _out_dir(args)
    data_file = Path(args.data)
    inputs = [data_file] + ([Path(args.index)] if args.index else [])
    outputs: list[Path] = []
    summary_lines: list[str] = []

    if args.task == "mcqa":
        items = bench_mod.load_mcqa_items(data_file)
        result = bench_mod.run_mcqa(items, spec, gateway, embedder)
        records_file = out / "mcqa_records.jsonl"
        with records_file.open("w", encoding="utf-8") as fh:
            for r in result.records:
                fh.write(json.dumps(r.__dict__, ensure_ascii=False) + "\n")
        outputs.append(records_file)
        summary_lines.append(
            f"mcqa\tmode={spec.mode.value}\taccuracy={result.accuracy:.4f}"
            f"\tunparsed={result.unparsed}/{len(items)}"
        )
    elif args.task == "completion":
        if embedder is None:
            embedder = _make_embedder(cfg)
        items = bench_mod.load_completion_items(data_file)
        result = bench_mod.run_completion(items, spec, gateway, embedder)
        records_file = out / "completion_records.jsonl"
        with records_file.open("w", encoding="utf-8") as fh:
            for r in result.records:
                fh.write(json.dumps(r.__dict__, ensure_ascii=False) + "\n")
        pairs_file = out / "completion_pairs.jsonl"
        bench_mod.export_completion_pairs(result.records, pairs_file)
        outputs += [records_file, pairs_file]
        summary_lines.append(
            f"completion\tmode={spec.mode.value}\tmean_similarity={result.mean_similarity:.4f}"
            f"\tskipped={result.skipped}/{len(items)}"
        )
    elif args.task == "story":
        subtopics = [
            s.strip() for s in data_file.read_text(encoding="utf-8").splitlines() if s.strip()
        ]
        country = _resolve(cfg, args, "country")
        language = _resolve(cfg, args, "language")
        if not country or not language:
            raise ConfigError("story task needs 'country' and 'language'")
        stories = bench_mod.run_storygen(
            subtopics, str(country), str(language), spec, gateway, embedder
        )
        stories_file = out / "stories.jsonl"
        bench_mod.save_stories(stories, stories_file)
        outputs.append(stories_file)
        summary_lines.append(f"story\tmode={spec.mode.value}\tstories={len(stories)}")
    else:  # judge
        country = _resolve(cfg, args, "country")
        if not country:
            raise ConfigError("judge task needs 'country'")
        scores_file = out / "judge_scores.jsonl"
        dims = (
            [bench_mod.JudgeDimension(args.dimension)]
            if args.dimension
            else list(bench_mod.JudgeDimension)
        )
        with data_file.open("r", encoding="utf-8") as fh, scores_file.open(
            "w", encoding="utf-8"
        ) as out_fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    story = json.loads(line)["text"]
                    subtopic = json.loads(line).get("subtopic", "")
                except (json.JSONDecodeError, KeyError) as exc:
                    raise FormatError(f"invalid story record: {exc}", line_no) from None
                for dim in dims:
                    score = bench_mod.judge_story(story, str(country), dim, gateway)
                    out_fh.write(
                        json.dumps(
                            {"subtopic": subtopic, "dimension": dim.value, "value": score.value},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
        outputs.append(scores_file)
        summary_lines.append(f"judge\tdimensions={[d.value for d in dims]}")

    summary_file = out / "summary.txt"
    summary_file.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    outputs.append(summary_file)
    print("\n".join(summary_lines))
    _write_manifest(
        out, "bench",
        seed=None,
        config_fingerprint=_fingerprint_config({"task": args.task, "mode": args.mode}),
        backend=gateway.backend_id,
        inputs=inputs,
        outputs=outputs,
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    kb_file = Path(args.kb)
    paths_file = Path(args.paths)
    gold_file = Path(args.gold)
    kb = load_kb(kb_file)
    paths = load_paths(paths_file, kb)
    gold_pool = evalkit.load_gold_pool(gold_file)
    batch = evalkit.sample_for_annotation(paths, args.n, gold_pool, args.seed)
    out = _out_dir(args)
    batch_file = out / "batch.tsv"
    key_file = out / "keyfile.json"
    evalkit.export_batch(batch, batch_file)
    evalkit.export_keyfile(batch, key_file)
    print(
        f"batch {batch.id}: {len(batch.units)} units "
        f"({batch.eval_assertion_count} assertions to evaluate)"
    )
    _write_manifest(
        out, "sample",
        seed=args.seed,
        config_fingerprint=_fingerprint_config({"n": args.n, "seed": args.seed}),
        backend="none",
        inputs=[kb_file, paths_file, gold_file],
        outputs=[batch_file, key_file],
    )
    return EXIT_OK


def cmd_score(args) -> int:
    batch = evalkit.load_batch(Path(args.batch), Path(args.key))
    sheets = [evalkit.load_label_sheet(Path(p), batch) for p in args.sheets]
    lines: list[str] = []
    for sheet in sheets:
        qc = evalkit.qc_gate(sheet, batch)
        lines.append(
            f"annotator {sheet.annotator_id}: gold {qc.matched_gold}/5 "
            f"-> {'pass' if qc.passed else 'fail'}"
        )
    report = evalkit.aggregate_labels(sheets, batch)
    for criterion, mean in report.mean.items():
        per = report.per_annotator[criterion]
        detail = ", ".join(f"{a}={v:.1f}" for a, v in per.items())
        lines.append(f"{criterion.value}: mean {mean:.1f}% ({detail})")
    passing = [s for s in sheets if evalkit.qc_gate(s, batch).passed]
    if len(passing) >= 2:
        first, second = passing[0], passing[1]
        for criterion in evalkit.Criterion:
            units = [
                u for u in batch.scored_units
                if criterion in evalkit.applicable_criteria(u.kind)
            ]
            if not units:
                continue
            xs = [1.0 if first.labels[u.unit_id][criterion] else 0.0 for u in units]
            ys = [1.0 if second.labels[u.unit_id][criterion] else 0.0 for u in units]
            try:
                r = bench_mod.pearson(xs, ys)
                lines.append(
                    f"pearson {criterion.value} ({first.annotator_id} vs "
                    f"{second.annotator_id}): {r:.4f}"
                )
            except bench_mod.DegenerateInput:
                lines.append(f"pearson {criterion.value}: n/a (zero variance)")
    print("\n".join(lines))
    if args.out:
        out = _out_dir(args)
        score_file = out / "scores.txt"
        score_file.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_manifest(
            out, "score",
            seed=batch.seed,
            config_fingerprint=_fingerprint_config({"batch": batch.id}),
            backend="none",
            inputs=[Path(args.batch), Path(args.key)] + [Path(p) for p in args.sheets],
            outputs=[score_file],
        )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cckg",
        description="Cultural commonsense knowledge graph toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_backend_flags(p):
        p.add_argument("--backend", choices=["remote", "mock"], default=None)
        p.add_argument("--endpoint", default=None, help="remote chat-completions base URL")
        p.add_argument("--model", default=None, help="remote model name")
        p.add_argument("--fixtures", default=None, help="scripted backend fixture file")
        p.add_argument("--parallel", type=int, default=None, help="max in-flight requests")

    p = sub.add_parser("build", help="construct a knowledge graph")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--country", default=None)
    p.add_argument("--language", default=None)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    add_backend_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("paths", help="enumerate simple paths from a graph file")
    p.add_argument("--kb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-depth", type=int, default=30)
    p.add_argument("--max-per-source", type=int, default=5_000)
    p.add_argument("--budget", type=int, default=200_000)
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("stats", help="summary statistics of a graph")
    p.add_argument("--kb", required=True)
    p.add_argument("--paths", default=None)
    p.add_argument("--eval-assertions", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("index", help="build a semantic search index")
    p.add_argument("--config", default=None)
    p.add_argument("--kb", default=None)
    p.add_argument("--paths", default=None)
    p.add_argument("--external", default=None)
    p.add_argument("--kind", choices=["assertions", "paths", "external"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="query an index")
    p.add_argument("--config", default=None)
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--kind", choices=["assertion", "path"], default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("bench", help="run a downstream task")
    p.add_argument("--config", default=None)
    p.add_argument("--task", choices=["mcqa", "completion", "story", "judge"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=sorted(_MODES), default="base")
    p.add_argument("--index", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--country", default=None)
    p.add_argument("--language", default=None)
    p.add_argument("--dimension", choices=[d.value for d in bench_mod.JudgeDimension], default=None)
    add_backend_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sample", help="draw an annotation batch")
    p.add_argument("--kb", required=True)
    p.add_argument("--paths", required=True)
    p.add_argument("--gold", required=True, help="gold-standard pool file")
    p.add_argument("--n", type=int, required=True, help="paths to sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score", help="QC-gate and aggregate label sheets")
    p.add_argument("--batch", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--sheets", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, Unparseable, evalkit.IncompleteSheet, evalkit.NoPassingSheets,
            evalkit.InsufficientPaths, evalkit.InsufficientGold) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (BackendUnavailable, BackendRejected) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
