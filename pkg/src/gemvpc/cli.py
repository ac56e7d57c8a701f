"""Command-line entry points: make-toy, build-theme-graphs, build-video-graphs, train, caption, evaluate.

Exit codes: 0 success, 2 invalid input, 3 runtime failure. Every run writes
one JSON manifest next to its output.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from . import __version__
from .data import ValidationError, load_bundles, load_dataset, load_features, save_bundles, save_dataset, \
    save_features
from .estimator import ParagraphCaptioner, make_items
from .inference import save_generated
from .metrics import evaluate
from .text import HashingTextEmbedder, tokenize
from .theme_graph import ThemeGraphBuilder, read_support_corpus, save_theme_graphs
from .toy import generate_toy_dataset
from .video_graph import GraphFormatError, VideoGraphBuilder, serialize_graph

logger = logging.getLogger("gemvpc")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

PROFILES = {
    "activitynet": {"method": "vf", "top_n_tg": 10, "top_n_vg": 10, "n_clusters": 300,
                    "hidden": 768, "heads": 12},
    "youcook2": {"method": "asr", "top_n_tg": 30, "top_n_vg": 30, "n_clusters": 300,
                 "hidden": 768, "heads": 12},
    # every toy video-graph event has at most 16 nodes, so all of them are candidates
    "toy": {"method": "vf", "top_n_tg": 10, "top_n_vg": 16, "n_clusters": 8,
            "hidden": 128, "heads": 8},
}


def cache_dir() -> Path:
    return Path(os.environ.get("GEMVPC_CACHE", "gemvpc-cache"))


# --------------------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    command: str
    config: dict
    input_hashes: dict
    outputs: list
    seed: int | None
    wall_time: float
    version: str = __version__
    torch_version: str = field(default_factory=lambda: torch.__version__)


def hash_path(path) -> str:
    """sha256 of a file, or of every file under a directory in sorted order."""
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        if path.is_dir():
            h.update(str(p.relative_to(path)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def manifest_path(output) -> Path:
    output = Path(output)
    return output / "manifest.json" if output.is_dir() else output.with_name(output.name + ".manifest.json")


def write_manifest(args, inputs, outputs, primary_output, t0) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config = {k: str(v) if isinstance(v, Path) else v for k, v in config.items()}
    m = RunManifest(args.command, config, {str(p): hash_path(p) for p in inputs if p},
                    [str(p) for p in outputs], getattr(args, "seed", None), round(time.time() - t0, 3))
    path = manifest_path(primary_output)
    path.write_text(json.dumps(asdict(m), indent=1, sort_keys=True))


# --------------------------------------------------------------------------- helpers

def profile_value(args, name):
    value = getattr(args, name, None)
    return PROFILES[args.profile][name] if value is None else value


def _read_items(dataset, features_dir, bundles_path=None):
    records = load_dataset(dataset)
    feats = [load_features(features_dir, r.video_id) for r in records]
    bundles = None
    if bundles_path:
        by_id = load_bundles(bundles_path)
        bundles = [by_id[r.video_id] for r in records if r.video_id in by_id]
    return make_items(records, feats, bundles)


def _embedder(args):
    return HashingTextEmbedder(args.node_feat_dim, seed=args.embed_seed)


# --------------------------------------------------------------------------- commands

def cmd_make_toy(args, t0):
    out = Path(args.out or cache_dir() / f"toy{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    records, features, bundles = generate_toy_dataset(args.seed, args.n_videos, args.n_events,
                                                      args.vocab_size)
    n_val = int(round(len(records) * args.val_fraction))
    splits = {"train": slice(0, len(records) - n_val), "val": slice(len(records) - n_val, None)}
    written = []
    for name, sl in splits.items():
        if sl.start == sl.stop or not records[sl]:
            continue
        save_dataset(records[sl], out / f"{name}.json")
        written.append(out / f"{name}.json")
    save_bundles(bundles, out / "bundles.jsonl")
    for f in features:
        save_features(f, out / "features")
    written += [out / "bundles.jsonl", out / "features"]
    write_manifest(args, [], written, out, t0)
    print(f"toy dataset written to {out}")


def cmd_build_theme_graphs(args, t0):
    records = load_dataset(args.dataset)
    by_id = load_bundles(args.bundles)
    bundles = [by_id[r.video_id] for r in records if r.video_id in by_id]
    if not bundles:
        raise ValidationError("no annotation bundles match the dataset videos")
    support = read_support_corpus(args.support_corpus) if args.support_corpus else None
    builder = ThemeGraphBuilder(profile_value(args, "method"), top_n=args.top_n, threshold=args.npmi_threshold,
                                n_clusters=profile_value(args, "n_clusters"), random_state=args.seed,
                                embedder=_embedder(args))
    builder.fit(records, bundles, support)
    out = Path(args.out or cache_dir() / "theme_graphs.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_theme_graphs(builder.all_graphs(), out)
    write_manifest(args, [args.dataset, args.bundles, args.support_corpus], [out], out, t0)
    print(f"{len(builder.all_graphs())} theme graphs written to {out}")


def _build_one(payload):
    builder, bundle = payload
    return bundle.video_id, serialize_graph(builder.build(bundle))


def cmd_build_video_graphs(args, t0):
    by_id = load_bundles(args.bundles)
    fit_bundles = list(load_bundles(args.fit_bundles).values()) if args.fit_bundles else list(by_id.values())
    builder = VideoGraphBuilder(
        profile_value(args, "method"), no_action_threshold=args.no_action_threshold,
        commonsense_min_action_conf=args.commonsense_min_action_conf,
        object_sim_threshold=args.object_sim_threshold, audio_sim_threshold=args.audio_sim_threshold,
        levenshtein_ratio_max=args.levenshtein_ratio_max, verb_sim_threshold=args.verb_sim_threshold,
        embedder=_embedder(args)).fit(fit_bundles)
    out = Path(args.out or cache_dir() / "video_graphs")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(builder, by_id[k]) for k in sorted(by_id)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_build_one, jobs))
    else:
        results = [_build_one(j) for j in jobs]
    for vid, data in results:
        (out / f"{vid}.gvg").write_bytes(data)
    write_manifest(args, [args.bundles, args.fit_bundles], [out], out, t0)
    print(f"{len(results)} video graphs written to {out}")


def _estimator(args) -> ParagraphCaptioner:
    return ParagraphCaptioner(
        method=profile_value(args, "method"), use_graph=not args.visual_only, recurrence=args.recurrence,
        hidden=profile_value(args, "hidden"), heads=profile_value(args, "heads"), layers=args.layers,
        top_n_tg=profile_value(args, "top_n_tg"), top_n_vg=profile_value(args, "top_n_vg"),
        node_feat_dim=args.node_feat_dim, min_count=args.min_count, n_clusters=profile_value(args, "n_clusters"),
        lr=args.lr, warmup_epochs=args.warmup_epochs, batch_size=args.batch_size,
        label_smoothing=args.label_smoothing, patience=args.patience, max_epochs=args.max_epochs,
        dtype=args.dtype, random_state=args.seed, embedder=_embedder(args))


def cmd_train(args, t0):
    torch.set_num_threads(max(1, args.threads))
    items = _read_items(args.dataset, args.features, args.bundles)
    val = _read_items(args.val_dataset, args.features, args.bundles) if args.val_dataset else None
    out = Path(args.out or cache_dir() / "model.pt")
    out.parent.mkdir(parents=True, exist_ok=True)
    log = out.with_suffix(".log.jsonl")
    if log.exists():
        log.unlink()
    support = read_support_corpus(args.support_corpus) if args.support_corpus else None
    est = _estimator(args).fit(items, X_val=val, support_corpus=support, log_path=log)
    est.save(out)
    inputs = [args.dataset, args.val_dataset, args.features, args.bundles, args.support_corpus]
    write_manifest(args, inputs, [out, log], out, t0)
    print(f"checkpoint written to {out} (best epoch {est.train_result_.best_epoch})")


def cmd_caption(args, t0):
    torch.set_num_threads(max(1, args.threads))
    est = ParagraphCaptioner.load(args.checkpoint)
    est.set_params(top_p=args.top_p, temperature=args.temperature, random_state=args.seed)
    items = _read_items(args.dataset, args.features, args.bundles if est.use_graph else None)
    paragraphs = est.predict(items, mode=args.mode)
    out = Path(args.out or cache_dir() / "generated.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_generated(paragraphs, out)
    write_manifest(args, [args.checkpoint, args.dataset, args.features, args.bundles], [out], out, t0)
    print(f"{len(paragraphs)} paragraphs written to {out}")


def cmd_evaluate(args, t0):
    with open(args.candidates, encoding="utf-8") as fh:
        generated = json.load(fh)
    records = {r.video_id: r for r in load_dataset(args.references)}
    cands, refs, cats = {}, {}, {}
    for vid, entry in sorted(generated.items()):
        if vid not in records:
            raise ValidationError(f"{vid}: no reference paragraph in {args.references}")
        caps = entry["captions"] if isinstance(entry, dict) else entry
        cands[vid] = [tokenize(c) for c in caps]
        refs[vid] = records[vid].captions
        cats[vid] = records[vid].category
    if not cands:
        raise ValidationError(f"{args.candidates}: no candidate paragraphs")
    report = evaluate(cands, refs, cats)
    out = Path(args.out or cache_dir() / "report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    outputs = [out]
    if args.category_csv:
        report.save_category_csv(args.category_csv)
        outputs.append(Path(args.category_csv))
    write_manifest(args, [args.candidates, args.references], outputs, out, t0)
    print(f"B4 {report.bleu4:.2f}  M {report.meteor:.2f}  C {report.cider:.2f}  R {report.rouge_l:.2f}  "
          f"Div2 {report.div2:.2f}  R4 {report.rep4:.2f}")


# --------------------------------------------------------------------------- parser

def _graph_flags(p):
    p.add_argument("--profile", choices=sorted(PROFILES), default="activitynet",
                   help="dataset profile: graph method, node counts and model size")
    p.add_argument("--method", choices=("vf", "asr"), default=None, help="override the profile's graph method")
    p.add_argument("--node-feat-dim", type=int, default=64, help="text-embedding width for graph nodes")
    p.add_argument("--embed-seed", type=int, default=0, help="seed of the hashing text embedder")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemvpc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", help="generate the synthetic toy dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-videos", type=int, default=50)
    p.add_argument("--n-events", type=int, default=3)
    p.add_argument("--vocab-size", type=int, default=40)
    p.add_argument("--val-fraction", type=float, default=0.0, help="share of videos written to val.json")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("build-theme-graphs", help="NPMI theme graphs per action class")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--bundles", type=Path, required=True)
    p.add_argument("--support-corpus", type=Path, help="one sentence per line; default: dataset captions")
    p.add_argument("--top-n", type=int, default=100)
    p.add_argument("--npmi-threshold", type=float, default=0.10)
    p.add_argument("--k", dest="n_clusters", type=int, default=None,
                   help="k-means clusters for the asr method (profile default)")
    p.add_argument("--out", type=Path)
    _graph_flags(p)
    p.set_defaults(func=cmd_build_theme_graphs)

    p = sub.add_parser("build-video-graphs", help="compile annotation bundles into video graphs")
    p.add_argument("--bundles", type=Path, required=True)
    p.add_argument("--fit-bundles", type=Path, help="training bundles for the caption lexicon")
    p.add_argument("--no-action-threshold", type=float, default=0.35)
    p.add_argument("--commonsense-min-action-conf", type=float, default=0.5)
    p.add_argument("--object-sim-threshold", type=float, default=0.25)
    p.add_argument("--audio-sim-threshold", type=float, default=0.3)
    p.add_argument("--levenshtein-ratio-max", type=float, default=0.70)
    p.add_argument("--verb-sim-threshold", type=float, default=0.6)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-video graph building")
    p.add_argument("--out", type=Path)
    _graph_flags(p)
    p.set_defaults(func=cmd_build_video_graphs)

    p = sub.add_parser("train", help="train a captioning model")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--val-dataset", type=Path, help="enables early stopping on validation CIDEr")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--bundles", type=Path)
    p.add_argument("--support-corpus", type=Path)
    p.add_argument("--recurrence", choices=("none", "mart", "tint"), default="mart")
    p.add_argument("--visual-only", action="store_true", help="drop the graph stream")
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--top-n-tg", type=int, default=None)
    p.add_argument("--top-n-vg", type=int, default=None)
    p.add_argument("--k", dest="n_clusters", type=int, default=None)
    p.add_argument("--min-count", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--warmup-epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--label-smoothing", type=float, default=0.3)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--threads", type=int, default=1, help="torch intra-op threads")
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; training is single-process")
    p.add_argument("--out", type=Path)
    _graph_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="generate paragraphs with a trained model")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--bundles", type=Path)
    p.add_argument("--mode", choices=("nucleus", "greedy"), default="nucleus")
    p.add_argument("--top-p", type=float, default=0.6)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("evaluate", help="score generated paragraphs")
    p.add_argument("--candidates", type=Path, required=True, help="output of `caption`")
    p.add_argument("--references", type=Path, required=True, help="dataset JSON with reference sentences")
    p.add_argument("--category-csv", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.time()
    try:
        args.func(args, t0)
    except (ValidationError, GraphFormatError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort reporting for the CLI
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
