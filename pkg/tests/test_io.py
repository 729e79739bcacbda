import json

import numpy as np
import pytest

from stdpnet.classify import train_linear
from stdpnet.encoder import EncoderConfig
from stdpnet.errors import ConfigError, DataError
from stdpnet.features import FeatureMatrix, random_prototypes
from stdpnet.io import (
    DatasetManifest, ManifestRecord, format_config, load_config, load_features, load_image, load_manifest,
    load_model, load_prototypes, parse_config, resize_to_height, save_features, save_image, save_model,
    save_prototypes, split_by_instance, write_manifest,
)
from stdpnet.learning import TrainConfig


# -- manifests -------------------------------------------------------------------------------

CSV = "path,class,instance,view,scale,tilt,split\na.png,cup,1,front,,,train\nb.png,car,7,side,,,test\n"
JSONL = (
    '{"path": "a.png", "class": "cup", "instance": "1", "view": "front", "split": "train"}\n'
    '{"path": "b.png", "class": "car", "instance": 7, "view": "side", "split": "test"}\n'
)


def test_two_record_manifest(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(CSV)
    m = load_manifest(p)
    assert len(m) == 2
    assert m.records[0] == ManifestRecord("a.png", "cup", "1", "front", "", "", "train")
    assert m.resolve(m.records[0]) == tmp_path / "a.png"


def test_csv_and_jsonl_agree(tmp_path):
    (tmp_path / "m.csv").write_text(CSV)
    (tmp_path / "m.jsonl").write_text(JSONL)
    assert load_manifest(tmp_path / "m.csv").records == load_manifest(tmp_path / "m.jsonl").records


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_manifest_write_read_round_trip(tmp_path, suffix):
    recs = [ManifestRecord(f"{i}.png", "c", str(i % 3), "v", "1.0", "", "") for i in range(5)]
    write_manifest(tmp_path / f"m{suffix}", recs)
    assert load_manifest(tmp_path / f"m{suffix}").records == recs


def test_leakage_rejected(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("path,class,instance,split\na.png,cup,1,train\nb.png,cup,1,test\n")
    with pytest.raises(DataError, match="both train and test"):
        load_manifest(p)


def test_same_instance_id_in_other_class_is_fine():
    DatasetManifest([ManifestRecord("a", "cup", "1", split="train"), ManifestRecord("b", "car", "1", split="test")])


def test_duplicate_paths_rejected():
    with pytest.raises(DataError, match="duplicate"):
        DatasetManifest([ManifestRecord("a", "cup", "1"), ManifestRecord("a", "cup", "2")])


def test_missing_fields_rejected(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("path,class,instance\na.png,,1\n")
    with pytest.raises(DataError, match="class"):
        load_manifest(p)
    p.write_text("path,class\na.png,cup\n")
    with pytest.raises(DataError, match="header"):
        load_manifest(p)


def test_bad_split_and_missing_file(tmp_path):
    with pytest.raises(DataError):
        DatasetManifest([ManifestRecord("a", "cup", "1", split="validation")])
    with pytest.raises(DataError):
        load_manifest(tmp_path / "nope.csv")


def instance_manifest(n_instances, per_instance=3, classes=("cup", "car")):
    recs = [ManifestRecord(f"{c}/{i}/{k}.png", c, str(i)) for c in classes for i in range(n_instances)
            for k in range(per_instance)]
    return DatasetManifest(recs)


def test_split_ten_instances():
    train, test = split_by_instance(instance_manifest(10), 5, seed=0)
    for c in ("cup", "car"):
        tr = {r.instance for r in train.records if r.label == c}
        te = {r.instance for r in test.records if r.label == c}
        assert len(tr) == 5 and len(te) == 5 and not tr & te
    assert len(train) + len(test) == 60
    assert {r.split for r in train.records} == {"train"} and {r.split for r in test.records} == {"test"}


def test_split_is_seeded():
    a, _ = split_by_instance(instance_manifest(10), 5, seed=3)
    b, _ = split_by_instance(instance_manifest(10), 5, seed=3)
    assert a.records == b.records


def test_split_needs_more_instances_than_train_count():
    with pytest.raises(DataError):
        split_by_instance(instance_manifest(5), 5)


# -- images ----------------------------------------------------------------------------------

@pytest.mark.parametrize("bits,levels", [(8, 255), (16, 65535)])
def test_image_round_trip(tmp_path, bits, levels):
    img = np.random.default_rng(0).integers(0, levels + 1, size=(9, 7)) / levels
    save_image(tmp_path / "x.png", img, bits=bits)
    assert np.array_equal(load_image(tmp_path / "x.png"), img)


def test_rgb_image_uses_luminance(tmp_path):
    from PIL import Image
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[..., 1] = 255
    Image.fromarray(rgb).save(tmp_path / "g.png")
    assert np.allclose(load_image(tmp_path / "g.png"), 0.587, atol=1e-12)


def test_unreadable_image(tmp_path):
    (tmp_path / "bad.png").write_text("not an image")
    with pytest.raises(DataError):
        load_image(tmp_path / "bad.png")
    with pytest.raises(DataError):
        load_image(tmp_path / "missing.png")


def test_resize_to_height_keeps_aspect():
    assert resize_to_height(np.zeros((100, 200)), 50).shape == (50, 100)


def test_manifest_load_resizes(tmp_path):
    save_image(tmp_path / "a.png", np.full((40, 60), 0.5))
    m = DatasetManifest([ManifestRecord("a.png", "c", "1")], tmp_path, resize_height=20)
    assert m.load(m.records[0]).shape == (20, 30)


# -- config ----------------------------------------------------------------------------------

def test_config_parse_and_defaults():
    cfg = parse_config("seed = 7\nn_prototypes = 12  # comment\nencoder.response_floor = 0.5\nclassifier = simple\n")
    assert cfg.seed == 7 and cfg.train.seed == 7
    assert cfg.train.n_prototypes == 12 and cfg.train.target_spikes == 600
    assert cfg.encoder.response_floor == 0.5
    assert cfg.classifier == "simple"


def test_seed_is_mandatory():
    with pytest.raises(ConfigError, match="seed"):
        parse_config("n_prototypes = 4\n")


@pytest.mark.parametrize("text", [
    "seed = 1\nbogus = 3\n", "seed = x\n", "seed = 1\nseed = 2\n", "seed = 1\nclassifier = forest\n",
    "seed = 1\nk_wta = 0\n", "seed = 1\nno equals sign\n", "seed = 1\nanalyses = rdm,plots\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_format_round_trip(tmp_path):
    cfg = parse_config("seed = 3\nencoder.scales = 1.0,0.5\nresize_height = 80\nanalyses = rdm,mi\nmi_k = 5\n")
    (tmp_path / "c.txt").write_text(format_config(cfg))
    back = load_config(tmp_path / "c.txt")
    assert back == cfg and back.hash() == cfg.hash()


def test_config_hash_ignores_output_dir():
    a = parse_config("seed = 1\noutput_dir = a\n")
    b = parse_config("seed = 1\noutput_dir = b\n")
    c = parse_config("seed = 2\noutput_dir = a\n")
    assert a.hash() == b.hash() != c.hash()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.txt")


# -- artifacts -------------------------------------------------------------------------------

def test_prototype_round_trip(tmp_path):
    protos = random_prototypes(3, 1)
    protos[1].post_spike_count = 612
    enc = EncoderConfig(response_floor=0.5)
    save_prototypes(tmp_path / "p.json", protos, enc, "abc", 4)
    back = load_prototypes(tmp_path / "p.json")
    assert back.encoder == enc and back.config_hash == "abc" and back.seed == 4
    for a, b in zip(protos, back.prototypes):
        assert np.array_equal(a.weights, b.weights) and a.post_spike_count == b.post_spike_count


def test_prototype_file_is_deterministic(tmp_path):
    protos = random_prototypes(2, 1)
    save_prototypes(tmp_path / "a.json", protos, EncoderConfig())
    save_prototypes(tmp_path / "b.json", protos, EncoderConfig())
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_corrupt_prototype_file(tmp_path):
    save_prototypes(tmp_path / "p.json", random_prototypes(1, 0), EncoderConfig())
    doc = json.loads((tmp_path / "p.json").read_text())
    doc["prototypes"][0]["weights"][0] = 2.0
    (tmp_path / "p.json").write_text(json.dumps(doc))
    with pytest.raises(DataError):
        load_prototypes(tmp_path / "p.json")
    (tmp_path / "q.json").write_text("{}")
    with pytest.raises(DataError):
        load_prototypes(tmp_path / "q.json")


def test_features_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    fm = FeatureMatrix(rng.random((4, 3)) * 100, ["a", "b", "a", "b"],
                       [{"instance": str(i), "view": "v", "scale": "", "tilt": ""} for i in range(4)], [(2, "boom")])
    save_features(tmp_path / "f.csv", fm, "h", 1)
    back = load_features(tmp_path / "f.csv")
    assert np.array_equal(back.values, fm.values)
    assert back.labels == fm.labels and back.meta == fm.meta and back.errors == [(2, "boom")]
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "p0,p1,p2"


def test_model_round_trip(tmp_path):
    x = np.array([[0.0, 1.0], [0.1, 0.9], [1.0, 0.0], [0.9, 0.2]])
    model = train_linear(x, ["a", "a", "b", "b"])
    save_model(tmp_path / "m.json", model)
    assert load_model(tmp_path / "m.json").to_dict() == model.to_dict()


def test_train_config_keys_are_parsed():
    cfg = parse_config("seed = 1\ntarget_spikes = 10\ninhibition_radius = 3\nmax_epochs = 7\n")
    assert cfg.train == TrainConfig(target_spikes=10, inhibition_radius=3, max_epochs=7, seed=1)
