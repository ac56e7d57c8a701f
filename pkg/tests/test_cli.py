import json

import pytest

from gemvpc.cli import PROFILES, hash_path, main
from gemvpc.data import load_bundles, save_bundles


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert run("make-toy", "--seed", 1, "--n-videos", 6, "--val-fraction", 0.34, "--out", out) == 0
    return out


def test_make_toy_writes_splits_and_manifest(toy_dir):
    assert (toy_dir / "train.json").exists() and (toy_dir / "val.json").exists()
    assert len(json.loads((toy_dir / "val.json").read_text())) == 2
    manifest = json.loads((toy_dir / "manifest.json").read_text())
    assert manifest["command"] == "make-toy" and manifest["seed"] == 1 and "torch_version" in manifest


def test_full_pipeline(toy_dir, tmp_path):
    common = ("--profile", "toy")
    assert run("build-theme-graphs", *common, "--dataset", toy_dir / "train.json",
               "--bundles", toy_dir / "bundles.jsonl", "--out", tmp_path / "tg.json") == 0
    assert run("build-video-graphs", *common, "--bundles", toy_dir / "bundles.jsonl",
               "--out", tmp_path / "vg") == 0
    assert len(list((tmp_path / "vg").glob("*.gvg"))) == 6
    ckpt = tmp_path / "m.pt"
    assert run("train", *common, "--dataset", toy_dir / "train.json", "--val-dataset", toy_dir / "val.json",
               "--features", toy_dir / "features", "--bundles", toy_dir / "bundles.jsonl", "--hidden", 32,
               "--heads", 4, "--max-epochs", 2, "--min-count", 1, "--out", ckpt) == 0
    rows = [json.loads(x) for x in ckpt.with_suffix(".log.jsonl").read_text().splitlines()]
    assert len(rows) == 2 and rows[0]["val_cider"] is not None
    gen = tmp_path / "gen.json"
    assert run("caption", "--checkpoint", ckpt, "--dataset", toy_dir / "val.json", "--features",
               toy_dir / "features", "--bundles", toy_dir / "bundles.jsonl", "--out", gen) == 0
    assert run("evaluate", "--candidates", gen, "--references", toy_dir / "val.json",
               "--out", tmp_path / "report.json", "--category-csv", tmp_path / "cat.csv") == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_videos"] == 2 and (tmp_path / "cat.csv").exists()
    assert (tmp_path / "report.json.manifest.json").exists()


def test_video_graph_files_are_byte_identical(toy_dir, tmp_path):
    for name in ("a", "b"):
        assert run("build-video-graphs", "--profile", "toy", "--bundles", toy_dir / "bundles.jsonl",
                   "--out", tmp_path / name) == 0
    for f in (tmp_path / "a").glob("*.gvg"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert hash_path(tmp_path / "a" / "manifest.json") != hash_path(tmp_path / "a")


def test_vf_build_on_speech_only_bundle_exits_2(toy_dir, tmp_path, capsys):
    bundles = list(load_bundles(toy_dir / "bundles.jsonl").values())[:1]
    for ev in bundles[0].events:
        ev.action_preds.clear()
        ev.vqa_locations.clear()
    save_bundles(bundles, tmp_path / "asr.jsonl")
    assert run("build-video-graphs", "--profile", "toy", "--method", "vf", "--bundles", tmp_path / "asr.jsonl",
               "--out", tmp_path / "vg") == 2
    assert "action_preds, vqa_locations" in capsys.readouterr().err


def test_evaluate_identity_gives_full_bleu(toy_dir, tmp_path):
    refs = json.loads((toy_dir / "val.json").read_text())
    gen = {vid: {"captions": entry["sentences"]} for vid, entry in refs.items()}
    (tmp_path / "gen.json").write_text(json.dumps(gen))
    assert run("evaluate", "--candidates", tmp_path / "gen.json", "--references", toy_dir / "val.json",
               "--out", tmp_path / "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text())["bleu4"] == pytest.approx(100.0)


def test_missing_input_exits_2(tmp_path):
    assert run("evaluate", "--candidates", tmp_path / "nope.json", "--references", tmp_path / "x.json",
               "--out", tmp_path / "r.json") == 2


def test_profiles():
    assert PROFILES["activitynet"]["top_n_vg"] == 10 and PROFILES["youcook2"]["top_n_vg"] == 30
    assert PROFILES["youcook2"]["method"] == "asr"
