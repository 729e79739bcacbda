"""Files in and out: images, dataset manifests, run configs and versioned artifacts.

All JSON is written with sorted keys and a trailing newline, and floats in
CSV use Python's shortest round-trip repr, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .encoder import EncoderConfig, level_shape, resize_bilinear, to_grayscale
from .errors import ConfigError, DataError
from .features import META_FIELDS, FeatureMatrix
from .learning import TrainConfig
from .network import PROTO_SHAPE, Prototype

PROTOTYPE_FORMAT = "stdpnet-prototypes"
FEATURES_FORMAT = "stdpnet-features"
MODEL_FORMAT = "stdpnet-model"
FORMAT_VERSION = 1


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- images -------------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Gray image in [0, 1]: 8-bit data is divided by 255, 16-bit by 65535, colour goes through luminance."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                return np.clip(np.asarray(im, dtype=np.float64) / 65535.0, 0.0, 1.0)
            if mode == "L":
                return np.asarray(im, dtype=np.float64) / 255.0
            if mode == "1":
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            if mode == "F":
                return np.clip(np.asarray(im, dtype=np.float64), 0.0, 1.0)
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
            return to_grayscale(rgb)
    except FileNotFoundError as exc:
        raise DataError(f"image not found: {path}") from exc
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def save_image(path, img: np.ndarray, bits: int = 8) -> None:
    """Write a [0, 1] gray image as an 8- or 16-bit PNG/PGM."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bits == 16:
        Image.fromarray(np.rint(img * 65535).astype(np.uint16)).save(path)
    elif bits == 8:
        Image.fromarray(np.rint(img * 255).astype(np.uint8), mode="L").save(path)
    else:
        raise ValueError("bits must be 8 or 16")


def resize_to_height(img: np.ndarray, height: int) -> np.ndarray:
    """Aspect-preserving bilinear resize to ``height`` rows."""
    h, w = img.shape
    return resize_bilinear(img, level_shape((h, w), height / h))


# -- manifests ------------------------------------------------------------------------------

MANIFEST_FIELDS = ("path", "class", "instance", "view", "scale", "tilt", "split")
REQUIRED_FIELDS = ("path", "class", "instance")
SPLITS = ("", "train", "test")


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: str
    instance: str
    view: str = ""
    scale: str = ""
    tilt: str = ""
    split: str = ""

    def meta(self) -> dict:
        return {"instance": self.instance, "view": self.view, "scale": self.scale, "tilt": self.tilt}

    def to_row(self) -> dict:
        return {"path": self.path, "class": self.label, "instance": self.instance, "view": self.view,
                "scale": self.scale, "tilt": self.tilt, "split": self.split}


@dataclass
class DatasetManifest:
    """Validated image records. Relative paths resolve against ``root``."""

    records: list[ManifestRecord]
    root: Path = field(default_factory=Path)
    resize_height: int | None = None

    def __post_init__(self):
        validate_records(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, record: ManifestRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p

    def load(self, record: ManifestRecord) -> np.ndarray:
        img = load_image(self.resolve(record))
        return resize_to_height(img, self.resize_height) if self.resize_height else img

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest([r for r in self.records if r.split == split], self.root, self.resize_height)

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    @property
    def meta(self) -> list[dict]:
        return [r.meta() for r in self.records]


def validate_records(records: Sequence[ManifestRecord]) -> None:
    seen = set()
    for r in records:
        if r.path in seen:
            raise DataError(f"duplicate path in manifest: {r.path}")
        seen.add(r.path)
        if r.split not in SPLITS:
            raise DataError(f"split must be 'train' or 'test', got {r.split!r} for {r.path}")
    train = {(r.label, r.instance) for r in records if r.split == "train"}
    test = {(r.label, r.instance) for r in records if r.split == "test"}
    leaked = sorted(train & test)
    if leaked:
        label, inst = leaked[0]
        raise DataError(f"instance {inst!r} of class {label!r} appears in both train and test")


def _record(row: dict, where: str) -> ManifestRecord:
    missing = [k for k in REQUIRED_FIELDS if str(row.get(k) if row.get(k) is not None else "").strip() == ""]
    if missing:
        raise DataError(f"{where}: missing field(s) {', '.join(missing)}")
    get = lambda k: "" if row.get(k) is None else str(row[k]).strip()  # noqa: E731
    return ManifestRecord(get("path"), get("class"), get("instance"), get("view"), get("scale"), get("tilt"),
                          get("split").lower())


def load_manifest(path, resize_height: int | None = None) -> DatasetManifest:
    """Read a CSV (with header) or JSON-lines manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {path}") from exc
    rows = []
    if path.suffix in (".jsonl", ".ndjson") or text.lstrip().startswith("{"):
        for n, line in enumerate(text.splitlines(), 1):
            if line.strip():
                try:
                    rows.append((json.loads(line), f"{path}:{n}"))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{n}: invalid JSON ({exc})") from exc
    else:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is None or not set(REQUIRED_FIELDS) <= {f.strip() for f in reader.fieldnames}:
            raise DataError(f"{path}: CSV header must include {', '.join(REQUIRED_FIELDS)}")
        for n, row in enumerate(reader, 2):
            rows.append(({(k or "").strip(): v for k, v in row.items()}, f"{path}:{n}"))
    records = [_record(row, where) for row, where in rows]
    return DatasetManifest(records, path.parent, resize_height)


def write_manifest(path, records: Iterable[ManifestRecord]) -> None:
    path = Path(path)
    records = list(records)
    if path.suffix in (".jsonl", ".ndjson"):
        path.write_text("".join(json.dumps(r.to_row(), sort_keys=True) + "\n" for r in records))
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.to_row())


def split_by_instance(manifest: DatasetManifest, n_train_instances: int = 5, seed: int = 0):
    """Seeded per-class instance split; every image of an instance lands on the same side."""
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[str]] = {}
    for r in manifest.records:
        ids = by_class.setdefault(r.label, [])
        if r.instance not in ids:
            ids.append(r.instance)
    chosen = set()
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) <= n_train_instances:
            raise DataError(
                f"class {label!r} has {len(ids)} instances; more than {n_train_instances} are needed for a split")
        for i in rng.choice(len(ids), n_train_instances, replace=False):
            chosen.add((label, ids[i]))
    train = [replace(r, split="train") for r in manifest.records if (r.label, r.instance) in chosen]
    test = [replace(r, split="test") for r in manifest.records if (r.label, r.instance) not in chosen]
    return (DatasetManifest(train, manifest.root, manifest.resize_height),
            DatasetManifest(test, manifest.root, manifest.resize_height))


# -- run configuration ----------------------------------------------------------------------

CLASSIFIERS = ("linear", "simple", "both")
ANALYSES = ("rdm", "cluster", "mi", "overlap")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    train: TrainConfig
    encoder: EncoderConfig = EncoderConfig()
    classifier: str = "both"
    activity_fraction: float = 0.5
    linear_lambda: float = 1e-4
    linear_epochs: int = 50
    n_train_instances: int = 5
    resize_height: int | None = None
    analyses: tuple[str, ...] = ANALYSES
    mi_k: int = 50
    output_dir: str = "."

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["train"] = self.train.to_dict()
        d["encoder"] = self.encoder.to_dict()
        d["analyses"] = list(self.analyses)
        return d

    def hash(self) -> str:
        """Digest of everything that can change a result (the output directory is excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_ENCODER_KEYS = {f.name for f in fields(EncoderConfig)}


def _parse_value(key: str, raw: str, kind):
    try:
        if kind is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. ``seed`` is mandatory.

    Encoder overrides use an ``encoder.`` prefix (``encoder.response_floor = 0.5``).
    """
    values: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = val
    if "seed" not in values:
        raise ConfigError(f"{source}: 'seed' is required")
    seed = _parse_value("seed", values.pop("seed"), int)
    train_kw, enc_kw, run_kw = {}, {}, {}
    for key, val in values.items():
        if key in _TRAIN_KEYS:
            train_kw[key] = _parse_value(key, val, int)
        elif key.startswith("encoder.") and key[8:] in _ENCODER_KEYS:
            name = key[8:]
            if name == "phase":
                enc_kw[name] = val
            elif name == "scales":
                enc_kw[name] = tuple(_parse_value(key, v, float) for v in val.split(","))
            else:
                enc_kw[name] = _parse_value(key, val, float)
        elif key in ("activity_fraction", "linear_lambda"):
            run_kw[key] = _parse_value(key, val, float)
        elif key in ("linear_epochs", "n_train_instances", "mi_k"):
            run_kw[key] = _parse_value(key, val, int)
        elif key == "resize_height":
            run_kw[key] = None if val.lower() in ("", "none", "0") else _parse_value(key, val, int)
        elif key == "classifier":
            if val not in CLASSIFIERS:
                raise ConfigError(f"classifier must be one of {CLASSIFIERS}, got {val!r}")
            run_kw[key] = val
        elif key == "analyses":
            items = tuple(v.strip() for v in val.split(",") if v.strip())
            bad = [v for v in items if v not in ANALYSES]
            if bad:
                raise ConfigError(f"unknown analyses {bad}; choose from {ANALYSES}")
            run_kw[key] = items
        elif key == "output_dir":
            run_kw[key] = val
        else:
            raise ConfigError(f"{source}: unknown config key {key!r}")
    try:
        train = TrainConfig(seed=seed, **train_kw)
        encoder = EncoderConfig(**enc_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(seed=seed, train=train, encoder=encoder, **run_kw)
    if not 0 < cfg.activity_fraction <= 1:
        raise ConfigError("activity_fraction must be in (0, 1]")
    if cfg.linear_lambda <= 0 or cfg.linear_epochs < 1 or cfg.mi_k < 1 or cfg.n_train_instances < 1:
        raise ConfigError("linear_lambda, linear_epochs, mi_k and n_train_instances must be positive")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_config(text, str(path))


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (every key written explicitly)."""
    lines = [f"seed = {cfg.seed}"]
    lines += [f"{k} = {v}" for k, v in cfg.train.to_dict().items() if k != "seed"]
    for k, v in cfg.encoder.to_dict().items():
        v = ",".join(repr(x) for x in v) if k == "scales" else v if isinstance(v, str) else repr(v)
        lines.append(f"encoder.{k} = {v}")
    lines += [
        f"classifier = {cfg.classifier}",
        f"activity_fraction = {cfg.activity_fraction!r}",
        f"linear_lambda = {cfg.linear_lambda!r}",
        f"linear_epochs = {cfg.linear_epochs}",
        f"n_train_instances = {cfg.n_train_instances}",
        f"resize_height = {cfg.resize_height or 'none'}",
        f"analyses = {','.join(cfg.analyses)}",
        f"mi_k = {cfg.mi_k}",
        f"output_dir = {cfg.output_dir}",
    ]
    return "\n".join(lines) + "\n"


# -- prototypes -----------------------------------------------------------------------------


@dataclass
class PrototypeFile:
    prototypes: list[Prototype]
    encoder: EncoderConfig
    config_hash: str = ""
    seed: int | None = None
    kind: str = "learned"


def save_prototypes(path, prototypes: Sequence[Prototype], encoder: EncoderConfig, config_hash: str = "",
                    seed: int | None = None, kind: str = "learned") -> None:
    """Versioned JSON; weights are flattened row-major over (row, col, orientation)."""
    doc = {
        "format": PROTOTYPE_FORMAT,
        "version": FORMAT_VERSION,
        "kind": kind,
        "n_prototypes": len(prototypes),
        "dims": list(PROTO_SHAPE),
        "encoder": encoder.to_dict(),
        "config_hash": config_hash,
        "seed": seed,
        "prototypes": [
            {"threshold": p.threshold, "post_spike_count": p.post_spike_count,
             "weights": p.weights.reshape(-1).tolist()}
            for p in prototypes
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n")


def load_prototypes(path) -> PrototypeFile:
    doc = read_json(path)
    if doc.get("format") != PROTOTYPE_FORMAT:
        raise DataError(f"{path} is not a prototype file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported prototype format version {doc.get('version')}")
    if tuple(doc.get("dims", ())) != PROTO_SHAPE:
        raise DataError(f"{path}: prototype dims must be {list(PROTO_SHAPE)}")
    protos = []
    for entry in doc["prototypes"]:
        w = np.array(entry["weights"], dtype=np.float64)
        if w.size != np.prod(PROTO_SHAPE) or np.any((w < 0) | (w > 1)):
            raise DataError(f"{path}: weights must be {np.prod(PROTO_SHAPE)} values in [0, 1]")
        protos.append(Prototype(w.reshape(PROTO_SHAPE), float(entry["threshold"]), int(entry["post_spike_count"])))
    if len(protos) != doc.get("n_prototypes"):
        raise DataError(f"{path}: n_prototypes does not match the stored tensors")
    return PrototypeFile(protos, EncoderConfig.from_dict(doc["encoder"]), doc.get("config_hash", ""),
                         doc.get("seed"), doc.get("kind", "learned"))


# -- features and models --------------------------------------------------------------------


def save_features(csv_path, fm: FeatureMatrix, config_hash: str = "", seed: int | None = None,
                  prototypes_sha256: str = "") -> Path:
    """CSV of values (header = prototype ids) plus a ``.json`` sidecar with labels and metadata."""
    csv_path = Path(csv_path)
    header = [f"p{j}" for j in range(fm.n_features)]
    lines = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in fm.values]
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = csv_path.with_suffix(".json")
    write_json(sidecar, {
        "format": FEATURES_FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": config_hash,
        "seed": seed,
        "prototypes_sha256": prototypes_sha256,
        "labels": fm.labels,
        "meta": [{k: str(m.get(k, "")) for k in META_FIELDS} for m in fm.meta],
        "errors": [{"row": i, "message": msg} for i, msg in fm.errors],
    })
    return sidecar


def load_features(csv_path) -> FeatureMatrix:
    csv_path = Path(csv_path)
    try:
        lines = csv_path.read_text().splitlines()
    except FileNotFoundError as exc:
        raise DataError(f"features file not found: {csv_path}") from exc
    side = read_json(csv_path.with_suffix(".json"))
    if side.get("format") != FEATURES_FORMAT:
        raise DataError(f"{csv_path.with_suffix('.json')} is not a features sidecar")
    n_cols = len(lines[0].split(",")) if lines and lines[0] else 0
    try:
        values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{csv_path}: non-numeric feature value ({exc})") from exc
    values = values.reshape(-1, n_cols)
    if values.shape[0] != len(side["labels"]):
        raise DataError(f"{csv_path}: {values.shape[0]} rows but {len(side['labels'])} labels")
    errors = [(e["row"], e["message"]) for e in side.get("errors", [])]
    return FeatureMatrix(values, list(side["labels"]), list(side["meta"]), errors)


def save_model(path, model, config_hash: str = "", seed: int | None = None) -> None:
    write_json(path, {"format": MODEL_FORMAT, "version": FORMAT_VERSION, "config_hash": config_hash,
                      "seed": seed, "model": model.to_dict()})


def load_model(path):
    from .classify import model_from_dict

    doc = read_json(path)
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a model file")
    return model_from_dict(doc["model"])
