"""Batch command line: synth, train, extract, classify, analyze, reconstruct, baseline, pipeline.

Every command exits 0 on success. Failures print one JSON object to
stderr and exit 2 (configuration), 3 (data) or 4 (non-convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, classify, features, io, learning, synthetic
from .errors import ConfigError, DataError, NonConvergenceError, StdpnetError

log = logging.getLogger("stdpnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


class _Timer:
    def __init__(self):
        self.start = time.perf_counter()
        self.marks: dict[str, float] = {}

    def mark(self, name: str) -> None:
        now = time.perf_counter()
        self.marks[name] = round(now - self.start - sum(self.marks.values()), 6)


def _write_run(path: Path, command: str, cfg: io.RunConfig | None, timer: _Timer, outputs: dict, extra=None) -> None:
    """Run-metadata record: what produced which file, with timings (not byte-stable by design)."""
    doc = {
        "command": command,
        "version": __version__,
        "python": platform.python_version(),
        "config_hash": cfg.hash() if cfg else None,
        "seed": cfg.seed if cfg else None,
        "timings_s": timer.marks,
        "total_s": round(time.perf_counter() - timer.start, 6),
        "outputs": {k: {"path": str(v), "sha256": io.file_sha256(v)} for k, v in outputs.items()},
    }
    if extra:
        doc.update(extra)
    io.write_json(path, doc)


def _select(manifest: io.DatasetManifest, split: str) -> io.DatasetManifest:
    if split == "all":
        return manifest
    if split == "auto":
        tagged = manifest.subset("train")
        return tagged if len(tagged) else manifest
    return manifest.subset(split)


def _manifest(path, cfg: io.RunConfig) -> io.DatasetManifest:
    return io.load_manifest(path, cfg.resize_height)


def _load_all(manifest: io.DatasetManifest) -> list[np.ndarray]:
    return [manifest.load(r) for r in manifest.records]


# -- commands ------------------------------------------------------------------------------


def cmd_synth(args) -> dict:
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    if args.kind == "shapes":
        splits = [("train", synthetic.shape_corpus(args.n_train, args.seed)),
                  ("test", synthetic.shape_corpus(args.n_test, args.seed + 1))]
        n_protos = 16
    else:
        splits = [("train", synthetic.pattern_corpus(args.n_train, args.seed))]
        n_protos = 4
    records = []
    for split, items in splits:
        for i, item in enumerate(items):
            rel = f"images/{split}_{i:04d}_{item.label}.png"
            io.save_image(out / rel, item.image, bits=16)
            records.append(io.ManifestRecord(rel, item.label, f"{split}{i:04d}", split=split))
    io.write_manifest(out / "manifest.csv", records)
    cfg = io.parse_config(f"seed = {args.seed}\nn_prototypes = {n_protos}\n"
                          f"encoder.response_floor = {synthetic.RESPONSE_FLOOR}\n")
    (out / "config.txt").write_text(io.format_config(cfg))
    return {"images": len(records), "manifest": str(out / "manifest.csv"), "config": str(out / "config.txt")}


def cmd_train(args, cfg: io.RunConfig, timer: _Timer) -> dict:
    manifest = _select(_manifest(args.manifest, cfg), args.split)
    if len(manifest) == 0:
        raise DataError("no training images selected from the manifest")
    images = _load_all(manifest)
    timer.mark("load")

    def progress(epoch, protos):
        log.info("epoch %d spike counts %s", epoch, [p.post_spike_count for p in protos])

    protos = learning.train(images, cfg.train, cfg.encoder, progress=progress)
    timer.mark("train")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_prototypes(out, protos, cfg.encoder, cfg.hash(), cfg.seed)
    _write_run(out.parent / "run_train.json", "train", cfg, timer, {"prototypes": out},
               {"spike_counts": [p.post_spike_count for p in protos], "n_images": len(images)})
    return {"prototypes": str(out), "spike_counts": [p.post_spike_count for p in protos]}


def cmd_baseline(args, cfg: io.RunConfig, timer: _Timer) -> dict:
    n = args.n if args.n is not None else cfg.train.n_prototypes
    protos = features.random_prototypes(n, cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_prototypes(out, protos, cfg.encoder, cfg.hash(), cfg.seed, kind="random")
    timer.mark("generate")
    _write_run(out.parent / "run_baseline.json", "baseline", cfg, timer, {"prototypes": out})
    return {"prototypes": str(out), "n": n}


def _extract(manifest_path, proto_path, out, split, cfg: io.RunConfig, timer: _Timer) -> features.FeatureMatrix:
    pf = io.load_prototypes(proto_path)
    if pf.encoder != cfg.encoder:
        raise ConfigError(
            f"config mismatch: {proto_path} was built with encoder {pf.encoder.to_dict()}, "
            f"run config has {cfg.encoder.to_dict()}")
    manifest = _select(_manifest(manifest_path, cfg), split)
    fm = features.extract_features(manifest.records, pf.prototypes, cfg.encoder, manifest.labels, manifest.meta,
                                   loader=manifest.load)
    timer.mark(f"extract_{split}")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_features(out, fm, cfg.hash(), cfg.seed, io.file_sha256(proto_path))
    if fm.errors:
        raise DataError(f"{len(fm.errors)} image(s) failed during extraction; first: row {fm.errors[0][0]}: "
                        f"{fm.errors[0][1]}")
    return fm


def cmd_extract(args, cfg: io.RunConfig, timer: _Timer) -> dict:
    out = Path(args.out)
    fm = _extract(args.manifest, args.prototypes, out, args.split, cfg, timer)
    _write_run(out.parent / f"run_extract_{out.stem}.json", "extract", cfg, timer,
               {"features": out, "sidecar": out.with_suffix(".json")})
    return {"features": str(out), "rows": fm.n_rows}


def _classify(train: features.FeatureMatrix, test: features.FeatureMatrix, cfg: io.RunConfig, out_dir: Path,
              prefix: str = "") -> dict:
    kinds = ["linear", "simple"] if cfg.classifier == "both" else [cfg.classifier]
    report = {}
    for kind in kinds:
        if kind == "linear":
            model = classify.train_linear(train, lam=cfg.linear_lambda, epochs=cfg.linear_epochs, seed=cfg.seed)
        else:
            model = classify.train_simple(train, fraction=cfg.activity_fraction)
        io.save_model(out_dir / f"{prefix}model_{kind}.json", model, cfg.hash(), cfg.seed)
        pred = classify.predict_many(model, test.values)
        report[kind] = {
            "accuracy": float(np.mean([p == t for p, t in zip(pred, test.labels)])) if test.n_rows else None,
            "confusion": _confusion(model.classes, test.labels, pred),
        }
    return report


def _confusion(classes, truth, pred) -> dict:
    table = {t: {p: 0 for p in classes} for t in classes}
    for t, p in zip(truth, pred):
        table.setdefault(t, {c: 0 for c in classes})[p] += 1
    return table


def cmd_classify(args, cfg: io.RunConfig, timer: _Timer) -> dict:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = io.load_features(args.train), io.load_features(args.test)
    if train.n_features != test.n_features:
        raise DataError("train and test feature files have different feature counts")
    report = _classify(train, test, cfg, out_dir)
    timer.mark("classify")
    doc = {"config_hash": cfg.hash(), "seed": cfg.seed, "n_train": train.n_rows, "n_test": test.n_rows, **report}
    io.write_json(out_dir / "report.json", doc)
    _write_run(out_dir / "run_classify.json", "classify", cfg, timer, {"report": out_dir / "report.json"})
    return {k: v["accuracy"] for k, v in report.items()}


def _analyze(fm: features.FeatureMatrix, cfg: io.RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    stamp = {"config_hash": cfg.hash(), "seed": cfg.seed}
    if "rdm" in cfg.analyses:
        views = {"all": analysis.rdm(fm)}
        views.update({f"view_{v}": r for v, r in analysis.rdms_by_view(fm).items()})
        for name, r in views.items():
            csv_path = out_dir / f"rdm_{name}.csv"
            csv_path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in r.matrix) + "\n")
            within, between = r.mean_dissimilarities()
            io.write_json(csv_path.with_suffix(".json"), {
                **stamp, "rows": r.rows, "labels": r.labels, "instances": r.instances,
                "class_boundaries": [list(b) for b in r.class_boundaries()], "flat_rows": r.flat_rows,
                "mean_within": within, "mean_between": between,
            })
            written[f"rdm_{name}"] = csv_path
    if "cluster" in cfg.analyses:
        dend = analysis.hierarchical_cluster(fm)
        io.write_json(out_dir / "dendrogram.json", {**stamp, **dend.to_dict()})
        written["dendrogram"] = out_dir / "dendrogram.json"
    classes = sorted(set(fm.labels))
    if ("mi" in cfg.analyses or "overlap" in cfg.analyses) and len(classes) >= 2:
        k = min(cfg.mi_k, fm.n_features)
        selected = {c: analysis.mi_select(fm, None, c, k, cfg.activity_fraction) for c in classes}
        io.write_json(out_dir / "mi_selection.json", {**stamp, "k": k, "selected": selected})
        written["mi_selection"] = out_dir / "mi_selection.json"
        if "overlap" in cfg.analyses:
            table = analysis.feature_overlap(selected)
            lines = ["class," + ",".join(table.classes)]
            lines += [f"{c}," + ",".join(str(v) for v in row) for c, row in zip(table.classes, table.counts)]
            (out_dir / "overlap.csv").write_text("\n".join(lines) + "\n")
            written["overlap"] = out_dir / "overlap.csv"
    return written


def cmd_analyze(args, cfg: io.RunConfig, timer: _Timer) -> dict:
    out_dir = Path(args.out_dir)
    written = _analyze(io.load_features(args.features), cfg, out_dir)
    timer.mark("analyze")
    _write_run(out_dir / "run_analyze.json", "analyze", cfg, timer, written)
    return {k: str(v) for k, v in written.items()}


def cmd_reconstruct(args) -> dict:
    pf = io.load_prototypes(args.prototypes)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, p in enumerate(pf.prototypes):
        path = out_dir / f"prototype_{i:03d}.{args.format}"
        io.save_image(path, features.reconstruct_preferred(p))
        paths.append(str(path))
    return {"images": paths}


def cmd_pipeline(args, cfg: io.RunConfig, timer: _Timer) -> dict:
    """train, extract, classify and analyze in one go, plus the random baseline."""
    out = Path(args.out_dir if args.out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args.manifest, cfg)
    if not len(manifest.subset("train")):
        # untagged data: split by instance and continue from an absolute-path copy of the manifest
        train, test = io.split_by_instance(manifest, cfg.n_train_instances, cfg.seed)
        records = [replace(r, path=str(manifest.resolve(r).resolve())) for r in train.records + test.records]
        args.manifest = out / "split_manifest.csv"
        io.write_manifest(args.manifest, records)
        manifest = _manifest(args.manifest, cfg)
    train_images = _load_all(manifest.subset("train"))
    timer.mark("load")
    protos = learning.train(train_images, cfg.train, cfg.encoder)
    timer.mark("train")
    io.save_prototypes(out / "prototypes.json", protos, cfg.encoder, cfg.hash(), cfg.seed)
    io.save_prototypes(out / "random_prototypes.json", features.random_prototypes(len(protos), cfg.seed),
                       cfg.encoder, cfg.hash(), cfg.seed, kind="random")
    report = {"config_hash": cfg.hash(), "seed": cfg.seed}
    for tag, name in (("", "learned"), ("random_", "random")):
        fms = {}
        for split in ("train", "test"):
            fms[split] = _extract(args.manifest, out / f"{tag}prototypes.json", out / f"{tag}features_{split}.csv",
                                  split, cfg, timer)
        report[name] = _classify(fms["train"], fms["test"], cfg, out, tag)
        timer.mark(f"{tag}classify")
        if not tag:
            _analyze(fms["test"], cfg, out / "analysis")
            timer.mark("analyze")
    io.write_json(out / "report.json", report)
    outputs = {p.name: p for p in sorted(out.glob("*.csv")) + sorted(out.glob("*prototypes.json"))}
    _write_run(out / "run_pipeline.json", "pipeline", cfg, timer, outputs)
    return {k: {c: v["accuracy"] for c, v in report[k].items()} for k in ("learned", "random")}


# -- entry point -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stdpnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stdpnet {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic corpus with manifest and config")
    s.add_argument("--kind", choices=("shapes", "patterns"), default="shapes")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-train", type=int, default=100, help="images per class (shapes) or in total (patterns)")
    s.add_argument("--n-test", type=int, default=100, help="test images per class (shapes only)")

    def with_config(sp):
        sp.add_argument("--config", required=True, help="key = value run configuration")
        return sp

    s = with_config(sub.add_parser("train", help="learn prototypes with STDP"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="prototype JSON to write")
    s.add_argument("--split", choices=("auto", "train", "all"), default="auto",
                   help="auto: the train split if tagged, else every record")

    s = with_config(sub.add_parser("extract", help="C2 features for a manifest"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--prototypes", required=True)
    s.add_argument("--out", required=True, help="features CSV (a .json sidecar is written beside it)")
    s.add_argument("--split", choices=("all", "train", "test"), default="all")

    s = with_config(sub.add_parser("classify", help="train classifiers and score a test set"))
    s.add_argument("--train", required=True, help="training features CSV")
    s.add_argument("--test", required=True, help="test features CSV")
    s.add_argument("--out-dir", required=True)

    s = with_config(sub.add_parser("analyze", help="RDM, clustering, MI selection, overlap table"))
    s.add_argument("--features", required=True)
    s.add_argument("--out-dir", required=True)

    s = sub.add_parser("reconstruct", help="preferred-stimulus images of prototypes")
    s.add_argument("--prototypes", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--format", choices=("png", "pgm"), default="png")

    s = with_config(sub.add_parser("baseline", help="random prototypes with matched weight counts"))
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=None, help="prototype count (default: n_prototypes from config)")

    s = with_config(sub.add_parser("pipeline", help="train, extract, classify and analyze end to end"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", default=None, help="default: output_dir from the config")
    return p


COMMANDS = {
    "train": cmd_train, "extract": cmd_extract, "classify": cmd_classify, "analyze": cmd_analyze,
    "baseline": cmd_baseline, "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        if args.command == "synth":
            result = cmd_synth(args)
        elif args.command == "reconstruct":
            result = cmd_reconstruct(args)
        else:
            cfg = io.load_config(args.config)
            result = COMMANDS[args.command](args, cfg, _Timer())
    except StdpnetError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if isinstance(exc, NonConvergenceError):
            err["spike_counts"] = exc.spike_counts
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return exc.exit_code
    print(json.dumps(result, sort_keys=True))
    return 0


def run() -> None:
    sys.exit(main())
