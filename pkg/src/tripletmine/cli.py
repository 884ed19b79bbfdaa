"""Command line interface.

Subcommands: ``synth-gen``, ``mine``, ``train``, ``eval``, ``bench-localize``
and ``visualize``.  Exit codes: 0 success, 2 configuration error, 3 data
error.  Set ``TRIPLETMINE_WORKERS`` to process images on several threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import pipeline
from .config import PipelineConfig
from .errors import ConfigError, DataError
from .manifest import load_manifest
from .modelfile import ModelFile, load_model, save_model

log = logging.getLogger("tripletmine")

EXIT_CONFIG = 2
EXIT_DATA = 3


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _parse_optional_int(text: str):
    return None if text.lower() in ("none", "off") else int(text)


def _parse_optional_float(text: str):
    return None if text.lower() in ("none", "off") else float(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", type=Path, help="JSON file with configuration values")
    optional = {"top_m", "negative_class_subsample", "eval_negative_classes", "ridge"}
    for f in fields(PipelineConfig):
        if f.name in optional:
            conv = _parse_optional_float if f.name == "ridge" else _parse_optional_int
        else:
            conv = type(f.default)
        g.add_argument(_flag(f.name), dest=f.name, type=conv, default=argparse.SUPPRESS,
                       help=f"default: {f.default}")


def _config_from(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for f in fields(PipelineConfig):
        if hasattr(args, f.name):
            values[f.name] = getattr(args, f.name)
    return PipelineConfig.from_dict(values)


def _split(entries, split):
    return [e for e in entries if e.split == split]


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


# -- commands --------------------------------------------------------------


def cmd_synth_gen(args) -> int:
    from .synth import SynthSpec, write_corpus

    values = {}
    if args.spec:
        values.update(json.loads(Path(args.spec).read_text()))
    for name in ("n_classes", "train_per_class", "test_per_class", "size", "n_distractors",
                 "position_jitter", "rotation_jitter", "noise"):
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    values["seed"] = args.seed
    spec = SynthSpec.from_dict(values)
    manifest = write_corpus(spec, args.out)
    print(manifest)
    return 0


def cmd_mine(args) -> int:
    cfg = _config_from(args)
    entries = _split(load_manifest(args.manifest), "train")
    if not entries:
        raise DataError("manifest has no train entries")
    corpus = pipeline.load_corpus(entries, cfg)
    if len(set(corpus.labels.tolist())) < 2:
        raise DataError("need at least two classes to mine")
    result = pipeline.mine(corpus.images, corpus.labels, cfg)
    report = {k: v for k, v in result.report.items() if k != "candidate_entropies"}
    model = ModelFile(cfg, corpus.class_names, result.background, result.triplets, None, report)
    save_model(args.out, model)
    if args.report_dir:
        from .mining import max_entropy
        from .plotting import entropy_histogram

        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        full = dict(result.report, timings=result.timings)
        (out / "mining_report.json").write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
        ent = result.report["candidate_entropies"]
        counts, edges = np.histogram(ent, bins=20, range=(0.0, max(max_entropy(len(corpus.class_names)), 1e-9)))
        _write_csv(out / "entropy_histogram.csv", ["bin_lo", "bin_hi", "count"],
                   [(f"{a:.6g}", f"{b:.6g}", int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)])
        entropy_histogram(ent, out / "entropy_histogram.png", max_entropy(len(corpus.class_names)))
    print(f"mined {len(result.triplets)} triplets -> {args.out}")
    return 0


def _descriptors(model: ModelFile, entries):
    corpus = pipeline.load_corpus(entries, model.config, model.class_names)
    x = pipeline.bot_matrix(corpus.images, model.triplets, model.config)
    if x.shape[1] != len(model.triplets):
        raise DataError("descriptor dimension does not match the model")
    return corpus, x


def cmd_train(args) -> int:
    from .classify import predict_many

    model = load_model(args.model)
    if not model.triplets:
        raise DataError("model has no mined triplets")
    entries = _split(load_manifest(args.manifest), "train")
    corpus, x = _descriptors(model, entries)
    keep = corpus.labels >= 0
    model.linear = pipeline.train(x[keep], corpus.labels[keep], model.config)
    save_model(args.out or args.model, model)
    acc = float(np.mean(predict_many(model.linear, x[keep]) == corpus.labels[keep]))
    print(f"trained on {int(keep.sum())} images, BoT dim {x.shape[1]}, train accuracy {acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    from .classify import evaluate_predictions, predict_many

    model = load_model(args.model)
    if model.linear is None:
        raise DataError("model has no trained classifier; run `train` first")
    entries = _split(load_manifest(args.manifest), args.split)
    corpus, x = _descriptors(model, entries)
    pred = predict_many(model.linear, x)
    metrics = evaluate_predictions(pred, corpus.labels, model.linear.classes)
    out = Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [model.class_names[int(c)] for c in model.linear.classes]
    _write_csv(out / "confusion.csv", ["true\\predicted"] + names,
               [[n] + row.tolist() for n, row in zip(names, metrics.confusion)])
    _write_csv(out / "accuracy.csv", ["class", "accuracy"],
               [["overall", f"{metrics.accuracy:.6f}"]]
               + [[model.class_names[c], f"{a:.6f}"] for c, a in metrics.per_class_accuracy.items()])
    if args.plot:
        from .plotting import class_response_figure, confusion_figure

        confusion_figure(metrics.confusion, names, out / "confusion.png")
        classes = np.array([m.detector.class_label for m in model.triplets])
        means = np.stack([x[corpus.labels == c].mean(axis=0) if np.any(corpus.labels == c) else np.zeros(x.shape[1])
                          for c in model.linear.classes])
        _write_csv(out / "class_responses.csv", ["class"] + [f"t{j}" for j in range(x.shape[1])],
                   [[n] + [f"{v:.6g}" for v in row] for n, row in zip(names, means)])
        class_response_figure(means, names, classes, out / "class_responses.png")
    print(f"accuracy {metrics.accuracy:.4f} on {len(corpus.labels)} images ({metrics.unknown} unknown labels)")
    return 0


def cmd_bench_localize(args) -> int:
    from .bench import localization_benchmark
    from .imaging import load_image, preprocess

    entries = load_manifest(args.manifest)
    entries = [e for e in entries if e.landmarks]
    if not entries:
        raise DataError("manifest has no landmark annotations")
    names = sorted({e.label for e in entries})
    images, labels, lms, dis = [], [], [], []
    for e in entries:
        img = load_image(e.resolved_path)
        x, y, w, h = e.bbox
        width = args.target_width or int(round(w))
        pre = preprocess(img, e.bbox, width)
        s = width / w

        def tr(points):
            pts = np.asarray(points or [], dtype=float).reshape(-1, 2)
            return (pts - [x, y]) * s

        images.append(pre)
        labels.append(names.index(e.label))
        lms.append(tr(e.landmarks))
        dis.append(tr(e.distractors))
    res = localization_benchmark(
        images, labels, lms, dis, n_pairs=args.pairs, n_triplets=args.triplets, patch_side=args.patch_side,
        k=args.k_top, eta_o=args.eta_o, eta_s=args.eta_s, seed=args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = res.rows()
    _write_csv(out / "localization.csv", ["method", "accuracy_pct", "improvement_over_baseline_pct"],
               [(m, f"{a:.2f}", "-" if i == 0 else f"{i:.1f}") for m, a, i in rows])
    from .plotting import localization_bars

    localization_bars(rows, out / "localization.png")
    for m, a, i in rows:
        print(f"{m:<18} {a:6.2f}%  {'-' if i == 0 else f'{i:+.1f}%'}")
    print(f"{res.n_triplets} triplets over {res.n_pairs} image pairs")
    return 0


def cmd_visualize(args) -> int:
    from .detector import DetectorBank, ImageFeatures, _bank_search, _detection_from
    from .imaging import dense_hog, whole_image_descriptor
    from .mining import DescriptorIndex, build_neighborhood, discriminative_map
    from .plotting import heat_overlay, triplet_overlay

    model = load_model(args.model)
    cfg = model.config
    entries = _split(load_manifest(args.manifest), args.split)
    corpus = pipeline.load_corpus(entries, cfg, model.class_names)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(corpus.images)
    picks = list(range(0, n, max(1, n // max(args.limit, 1))))[: args.limit]

    if args.split == "train" and n > 1:
        descs = np.stack([whole_image_descriptor(im, cfg.hog) for im in corpus.images])
        index = DescriptorIndex(descs, corpus.labels)
        for seed in picks:
            nb = build_neighborhood(seed, index, min(cfg.neighborhood_size, n))
            dense = [dense_hog(corpus.images[i], cfg.patch_side, cfg.stride, cfg.hog) for i in nb.member_ids]
            feats = np.stack([d.features for d in dense])
            dmap = discriminative_map(feats, nb.member_labels, (dense[0].rows, dense[0].cols),
                                      cfg.discriminative_eps, cfg.patch_side, cfg.stride)
            heat_overlay(corpus.images[seed], dmap.scores, cfg.patch_side, cfg.stride, out / f"dmap_{seed:04d}.png")

    if model.triplets:
        # best triplet of the image's own class, by mined order
        for i in picks:
            own = [m for m in model.triplets if m.detector.class_label == corpus.labels[i]] or model.triplets
            feats = ImageFeatures(corpus.images[i], cfg.patch_side, cfg.stride, cfg.hog)
            best = None
            for m in own[: args.triplets]:
                bank = DetectorBank([m.detector])
                for dense, flipped in ((feats.plain, False), (feats.mirrored, True)):
                    res = _bank_search(bank, dense, cfg.k_top, cfg.overlap_max, feats.iou)
                    det = _detection_from(res, 0, dense, flipped, feats.width)
                    if det.found and (best is None or det.total > best.total):
                        best = det
            if best is not None:
                title = f"{corpus.class_names[corpus.labels[i]]}  score {best.total:.2f}" + ("  (mirror)" if best.mirrored else "")
                triplet_overlay(corpus.images[i], best.locations, out / f"triplet_{i:04d}.png", title)
    print(f"figures written to {out}")
    return 0


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tripletmine", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", help="generate a synthetic corpus")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--spec", type=Path, help="JSON file with generator settings")
    s.add_argument("--seed", type=int, default=0)
    for name, typ in (("n_classes", int), ("train_per_class", int), ("test_per_class", int), ("size", int),
                      ("n_distractors", int), ("position_jitter", float), ("rotation_jitter", float),
                      ("noise", float)):
        s.add_argument(_flag(name), dest=name, type=typ)
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("mine", help="mine discriminative triplets from the train split")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--report-dir", type=Path)
    _add_config_flags(s)
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("train", help="train the linear classifier on Bag-of-Triplets descriptors")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--out", type=Path, help="defaults to overwriting --model")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a trained model")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--report-dir", type=Path, required=True)
    s.add_argument("--split", choices=("train", "test"), default="test")
    s.add_argument("--plot", action="store_true", help="also write PNG figures")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench-localize", help="triplet localization ablation on landmark pools")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--pairs", type=int, default=1000)
    s.add_argument("--triplets", type=int, default=100)
    s.add_argument("--patch-side", type=int, default=32)
    s.add_argument("--target-width", type=int, default=None)
    s.add_argument("--k-top", type=int, default=5)
    s.add_argument("--eta-o", type=float, default=0.5)
    s.add_argument("--eta-s", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench_localize)

    s = sub.add_parser("visualize", help="discriminative-map and triplet overlays")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--split", choices=("train", "test"), default="train")
    s.add_argument("--limit", type=int, default=4)
    s.add_argument("--triplets", type=int, default=20, help="own-class triplets tried per image")
    s.set_defaults(func=cmd_visualize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
