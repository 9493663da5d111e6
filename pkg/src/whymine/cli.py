"""Command-line orchestration of the pipeline stages.

Exit codes: 0 success, 1 validation failure, 2 transport failure,
64 usage error, 66 missing input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, annotations as ann_mod, corpus as corpus_mod
from .config import ConfigError, PipelineConfig, load_config
from .corpus import CorpusError, Split, ValidationError, load_corpus, split_dataset, write_jsonl
from .evalreport import (
    calibrate_threshold,
    evaluate_predictions,
    most_frequent_baseline,
    read_predictions,
    write_predictions,
)
from .manifest import RunManifest
from .pipeline import METHODS, PipelineError, score_clips
from .scoring import ScoringError, ScorerClient, TransportError, VectorStore, load_captions, load_objects
from .taxonomy import (
    admit_crowd_reasons,
    extend_taxonomy,
    filter_funnel,
    propose_representatives,
    ward_cluster,
)
from .textmine import extract_causal_candidates, load_lexicon, segment_sentences
from .videofilter import UnscorableClip, keep_clip, load_clip_frames, motion_score

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TRANSPORT = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66

DEFAULT_LEXICON = Path(__file__).parent / "data" / "lexicon.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(args, level: str, event: str, **fields) -> None:
    if level == "debug" and not args.verbose:
        return
    print(json.dumps({"level": level, "event": event, **fields}), file=sys.stderr)


def _resolve_config(args) -> PipelineConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    config_path = args.config
    if config_path is not None and not Path(config_path).exists():
        raise FileNotFoundError(config_path)
    return load_config(config_path, overrides)


def _workdir(args) -> Path:
    return Path(args.workdir)


def _outdir(args) -> Path:
    out = Path(args.out) if args.out else _workdir(args) / "out"
    if not args.dry_run:
        out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_manifest(args, config: PipelineConfig, command: str,
                   inputs: list, outputs: list) -> None:
    if args.dry_run:
        return
    manifest = RunManifest.create(command, config.to_dict(),
                                  [str(p) for p in inputs], [str(p) for p in outputs])
    manifest.write(_outdir(args) / f"{command}.manifest.json")


def _load(args, config: PipelineConfig):
    return load_corpus(_workdir(args), strict=not args.lenient,
                       check_clip_bounds=not args.lenient,
                       min_clip_s=config.min_clip_s, max_clip_s=config.max_clip_s)


def _get_split(corpus, config: PipelineConfig) -> Split:
    if corpus.split is not None:
        return corpus.split
    return split_dataset(corpus.clips, config.dev_fraction, config.split_seed)


def _gold_records(args, config: PipelineConfig, corpus) -> dict:
    gold_path = _outdir(args) / "gold.jsonl"
    if gold_path.exists():
        gold = {}
        with open(gold_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = corpus_mod.gold_from_dict(json.loads(line))
                    gold[rec.clip_id] = rec
        return gold
    by_clip: dict[str, list] = {}
    for a in corpus.annotations:
        by_clip.setdefault(a.clip_id, []).append(a)
    clips = corpus.clips_by_id()
    return {
        clip_id: ann_mod.aggregate_gold(records, clips[clip_id].candidate_reason_ids,
                                        config.gold_quorum)
        for clip_id, records in by_clip.items()
    }


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    warnings = getattr(corpus, "warnings", [])
    summary = {
        "transcripts": len(corpus.transcripts),
        "clips": len(corpus.clips),
        "actions": len(corpus.taxonomy.actions),
        "reasons": sum(len(e.reasons) for e in corpus.taxonomy.actions.values()),
        "annotations": len(corpus.annotations),
        "warnings": [str(w) for w in warnings],
    }
    if args.dry_run:
        _log(args, "info", "plan", command="ingest", summary=summary)
        return EXIT_OK
    out = _outdir(args) / "ingest_summary.json"
    out.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _emit_manifest(args, config, "ingest", [_workdir(args)], [out])
    _log(args, "info", "ingest", **{k: v for k, v in summary.items() if k != "warnings"})
    return EXIT_OK


def cmd_mine(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    lexicon = load_lexicon(args.lexicon)
    records = []
    for doc in corpus.transcripts:
        sentences = segment_sentences(doc, config.max_sentence_tokens)
        for cand in extract_causal_candidates(sentences, lexicon, config.markers,
                                              config.marker_max_distance):
            records.append({
                "doc_id": cand.doc_id,
                "sentence_index": cand.sentence_index,
                "action": cand.lemma,
                "action_surface": cand.action_surface,
                "action_token_index": cand.action_token_index,
                "marker": cand.marker,
                "marker_token_index": cand.marker_token_index,
                "distance": cand.distance,
                "context_text": cand.context_text,
            })
    out = _outdir(args) / "candidates.jsonl"
    if args.dry_run:
        _log(args, "info", "plan", command="mine", candidates=len(records), output=str(out))
        return EXIT_OK
    write_jsonl(out, records)
    _emit_manifest(args, config, "mine",
                   [_workdir(args) / "transcripts.jsonl", args.lexicon], [out])
    _log(args, "info", "mine", candidates=len(records))
    return EXIT_OK


def cmd_taxonomy(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    retained, funnel = filter_funnel(corpus.taxonomy, config.min_reasons, config.min_clips)
    outputs = []
    outdir = _outdir(args)
    result: dict = {"funnel": [{"stage": s, "actions": n} for s, n in funnel.stages]}

    clusters_out = {}
    review_out = {}
    if args.vectors:
        store = VectorStore.load(args.vectors)
        for lemma, entry in sorted(retained.actions.items()):
            vectors = {r.id: store.get(r.label) for r in entry.reasons}
            partition = ward_cluster(vectors, config.cluster_cut)
            reps = propose_representatives(partition, vectors)
            clusters_out[lemma] = [list(c) for c in partition]
            review_out[lemma] = {"|".join(c): reps[c] for c in partition}

    admitted_summary = {}
    if args.admit_crowd:
        if not args.vectors:
            _log(args, "error", "taxonomy", message="--admit-crowd requires --vectors")
            return EXIT_USAGE
        store = VectorStore.load(args.vectors)
        freetexts: dict[str, list[str]] = {}
        clips = corpus.clips_by_id()
        for rec in corpus.annotations:
            if rec.other_reason_text:
                action = clips[rec.clip_id].action
                freetexts.setdefault(action, []).append(rec.other_reason_text.strip().lower())
        admitted = {}
        for action, texts in sorted(freetexts.items()):
            if action not in retained.actions:
                continue
            entries = admit_crowd_reasons(
                texts, list(retained.actions[action].reasons), store._vectors,
                config.crowd_reason_min_count, config.crowd_dup_threshold)
            if entries:
                admitted[action] = entries
                admitted_summary[action] = [e.label for e in entries]
        retained = extend_taxonomy(retained, admitted)

    result["clusters"] = clusters_out
    result["admitted_crowd_reasons"] = admitted_summary
    if args.dry_run:
        _log(args, "info", "plan", command="taxonomy", funnel=result["funnel"])
        return EXIT_OK
    funnel_path = outdir / "taxonomy_report.json"
    funnel_path.write_text(json.dumps(result, indent=2, ensure_ascii=False) + "\n",
                           encoding="utf-8")
    outputs.append(funnel_path)
    retained_path = outdir / "taxonomy.retained.json"
    retained_path.write_text(
        json.dumps(corpus_mod.taxonomy_to_dict(retained), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")
    outputs.append(retained_path)
    if review_out:
        review_path = outdir / "cluster_review.json"
        review_path.write_text(json.dumps(review_out, indent=2, ensure_ascii=False) + "\n",
                               encoding="utf-8")
        outputs.append(review_path)
    _emit_manifest(args, config, "taxonomy", [_workdir(args) / "taxonomy.json"], outputs)
    _log(args, "info", "taxonomy", retained_actions=len(retained.actions))
    return EXIT_OK


def cmd_filter_videos(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    frames_dir = Path(args.frames)
    if not frames_dir.is_dir():
        raise FileNotFoundError(frames_dir)
    reports = []
    decisions = []
    for clip in corpus.clips:
        report = None
        try:
            frames = load_clip_frames(frames_dir, clip.clip_id)
            report = motion_score(frames, clip.clip_id, config.frame_sample_stride)
            reports.append(report.to_dict())
        except UnscorableClip as exc:
            _log(args, "debug", "unscorable", clip_id=clip.clip_id, message=str(exc))
        kept, reasons = keep_clip(clip, report, config)
        decisions.append({"clip_id": clip.clip_id, "kept": kept, "rejected_for": reasons})
    outdir = _outdir(args)
    if args.dry_run:
        _log(args, "info", "plan", command="filter-videos",
             kept=sum(d["kept"] for d in decisions), total=len(decisions))
        return EXIT_OK
    write_jsonl(outdir / "motion_reports.jsonl", reports)
    write_jsonl(outdir / "clip_decisions.jsonl", decisions)
    _emit_manifest(args, config, "filter-videos", [frames_dir],
                   [outdir / "motion_reports.jsonl", outdir / "clip_decisions.jsonl"])
    _log(args, "info", "filter-videos", kept=sum(d["kept"] for d in decisions),
         total=len(decisions))
    return EXIT_OK


def cmd_aggregate(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    by_clip: dict[str, list] = {}
    for rec in corpus.annotations:
        by_clip.setdefault(rec.clip_id, []).append(rec)
    clips = corpus.clips_by_id()
    gold = [
        ann_mod.aggregate_gold(records, clips[clip_id].candidate_reason_ids,
                               config.gold_quorum)
        for clip_id, records in sorted(by_clip.items())
    ]
    report = ann_mod.agreement_report(corpus, config.gold_quorum)
    outdir = _outdir(args)
    if args.dry_run:
        _log(args, "info", "plan", command="aggregate", clips=len(gold))
        return EXIT_OK
    write_jsonl(outdir / "gold.jsonl", [corpus_mod.gold_to_dict(g) for g in gold])
    (outdir / "agreement_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    _emit_manifest(args, config, "aggregate", [_workdir(args) / "annotations.jsonl"],
                   [outdir / "gold.jsonl", outdir / "agreement_report.json"])
    _log(args, "info", "aggregate", clips=len(gold), overall_kappa=report.overall_kappa)
    return EXIT_OK


def cmd_score(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    split = _get_split(corpus, config)
    part = args.part
    clip_ids = {"dev": split.dev, "test": split.test,
                "all": tuple(c.clip_id for c in corpus.clips)}[part]

    endpoint = args.endpoint or os.environ.get("WHYMINE_SCORER_ENDPOINT")
    sources: dict = {}
    if endpoint:
        sources["client"] = ScorerClient(endpoint)
    if args.vectors:
        sources["store"] = VectorStore.load(args.vectors)
    if args.objects:
        sources["objects"] = load_objects(args.objects)
    if args.captions:
        sources["captions"] = load_captions(args.captions)
    lexicon_path = Path(args.lexicon)
    if lexicon_path.exists():
        sources["lexicon"] = load_lexicon(lexicon_path)
    if args.features:
        features = {}
        for p in Path(args.features).glob("*.json"):
            features[p.stem] = json.loads(p.read_text(encoding="utf-8"))["features"]
        sources["visual_features"] = features

    out = _outdir(args) / f"predictions.{args.method}.{part}.jsonl"
    if args.dry_run:
        _log(args, "info", "plan", command="score", method=args.method,
             clips=len(clip_ids), output=str(out))
        return EXIT_OK
    selections, scores = score_clips(corpus, clip_ids, args.method, config, **sources)
    write_predictions(out, args.method, selections, scores)
    _emit_manifest(args, config, "score", [_workdir(args)], [out])
    _log(args, "info", "score", method=args.method, clips=len(clip_ids), output=str(out))
    return EXIT_OK


def cmd_calibrate(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    split = _get_split(corpus, config)
    _, scores, method = read_predictions(args.predictions)
    dev_scores = {cid: scores[cid] for cid in split.dev if cid in scores}
    if not dev_scores:
        _log(args, "error", "calibrate", message="no dev clips with scores in predictions")
        return EXIT_VALIDATION
    gold = _gold_records(args, config, corpus)
    grid = [float(x) for x in args.grid.split(",")]
    comparator = ">" if method.startswith("cosine") else ">="
    result = calibrate_threshold(dev_scores, gold, corpus.clips_by_id(), grid, comparator)
    if args.dry_run:
        _log(args, "info", "plan", command="calibrate", grid=grid)
        return EXIT_OK
    out = _outdir(args) / f"calibration.{method}.json"
    out.write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
    _emit_manifest(args, config, "calibrate", [args.predictions], [out])
    _log(args, "info", "calibrate", threshold=result.threshold, dev_f1=result.dev_f1)
    return EXIT_OK


def cmd_eval(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    split = _get_split(corpus, config)
    clips = corpus.clips_by_id()
    gold = _gold_records(args, config, corpus)
    clip_ids = {"dev": split.dev, "test": split.test}[args.part]

    if args.method == "most-frequent":
        labels = {r.id: r.label for e in corpus.taxonomy.actions.values() for r in e.reasons}
        selections = most_frequent_baseline(gold, clips, split,
                                            estimate_on=args.estimate_on, labels=labels)
        method = "most-frequent"
        descriptor = f"gold frequencies ({args.estimate_on})"
    else:
        if not args.predictions:
            _log(args, "error", "eval", message="need --predictions or --method most-frequent")
            return EXIT_USAGE
        selections, scores, method = read_predictions(args.predictions)
        if args.threshold is not None:
            from .scoring import threshold_select
            comparator = ">" if method.startswith("cosine") else ">="
            selections = {cid: threshold_select(s, args.threshold, comparator)
                          for cid, s in scores.items()}
        descriptor = args.predictions
    clip_ids = [cid for cid in clip_ids if cid in gold]
    report = evaluate_predictions(gold, selections, clips, clip_ids, method, descriptor)
    if args.dry_run:
        _log(args, "info", "plan", command="eval", clips=len(clip_ids))
        return EXIT_OK
    outdir = _outdir(args)
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                        encoding="utf-8")
    (outdir / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    _emit_manifest(args, config, "eval",
                   [p for p in [args.predictions] if p],
                   [outdir / "report.json", outdir / "report.txt"])
    print(report.to_text())
    return EXIT_OK


def cmd_stats(args, config: PipelineConfig) -> int:
    corpus = _load(args, config)
    stats = ann_mod.dataset_stats(corpus)
    if args.dry_run:
        _log(args, "info", "plan", command="stats")
        return EXIT_OK
    outdir = _outdir(args)
    (outdir / "stats.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")
    (outdir / "stats.txt").write_text(stats.to_text() + "\n", encoding="utf-8")
    _emit_manifest(args, config, "stats", [_workdir(args)],
                   [outdir / "stats.json", outdir / "stats.txt"])
    print(stats.to_text())
    return EXIT_OK


def cmd_report(args, config: PipelineConfig) -> int:
    rows = []
    for path in args.reports:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rows.append((data["method"], data["input"], data["macro"]))
    header = f"{'method':<24}{'input':<36}" + "".join(
        f"{m:>11}" for m in ("accuracy", "precision", "recall", "f1"))
    lines = [header, "-" * len(header)]
    for method, descriptor, macro in rows:
        lines.append(f"{method:<24}{descriptor[:34]:<36}" + "".join(
            f"{100 * macro[m]:>11.2f}" for m in ("accuracy", "precision", "recall", "f1")))
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="whymine", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="corpus directory")
    common.add_argument("--out", default=None, help="output directory (default workdir/out)")
    common.add_argument("--config", default=None, help="flat key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a single config key")
    common.add_argument("--lenient", action="store_true",
                        help="demote validation errors to warnings")
    common.add_argument("--dry-run", action="store_true", help="print the plan, write nothing")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--jobs", type=int, default=1, help="worker parallelism bound")

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common]).set_defaults(func=cmd_ingest)

    p = sub.add_parser("mine", parents=[common])
    p.add_argument("--lexicon", default=str(DEFAULT_LEXICON))
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("taxonomy", parents=[common])
    p.add_argument("--vectors", default=None, help="embedding vector file (JSONL)")
    p.add_argument("--admit-crowd", action="store_true")
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("filter-videos", parents=[common])
    p.add_argument("--frames", required=True, help="frame-source directory")
    p.set_defaults(func=cmd_filter_videos)

    sub.add_parser("aggregate", parents=[common]).set_defaults(func=cmd_aggregate)

    p = sub.add_parser("score", parents=[common])
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--part", default="all", choices=("dev", "test", "all"))
    p.add_argument("--endpoint", default=None,
                   help="scorer endpoint (default $WHYMINE_SCORER_ENDPOINT)")
    p.add_argument("--vectors", default=None)
    p.add_argument("--objects", default=None)
    p.add_argument("--captions", default=None)
    p.add_argument("--features", default=None, help="visual feature file directory")
    p.add_argument("--lexicon", default=str(DEFAULT_LEXICON))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("calibrate", parents=[common])
    p.add_argument("--predictions", required=True)
    p.add_argument("--grid", required=True, help="comma-separated thresholds")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", parents=[common])
    p.add_argument("--predictions", default=None)
    p.add_argument("--method", default=None)
    p.add_argument("--part", default="test", choices=("dev", "test"))
    p.add_argument("--threshold", type=float, default=None,
                   help="re-threshold stored scores (e.g. a calibrated value)")
    p.add_argument("--estimate-on", default="test", choices=("test", "dev"))
    p.set_defaults(func=cmd_eval)

    sub.add_parser("stats", parents=[common]).set_defaults(func=cmd_stats)

    p = sub.add_parser("report", parents=[common])
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
        return args.func(args, config)
    except FileNotFoundError as exc:
        print(json.dumps({"level": "error", "event": "missing-input", "path": str(exc)}),
              file=sys.stderr)
        return EXIT_NOINPUT
    except TransportError as exc:
        print(json.dumps({"level": "error", "event": "transport", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_TRANSPORT
    except (ValidationError, CorpusError, ConfigError, ScoringError, PipelineError,
            ValueError) as exc:
        print(json.dumps({"level": "error", "event": "validation", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
